#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "qsmf/dataset.hpp"
#include "qsmf/errors.hpp"
#include "qsmf/parallel.hpp"

namespace qsmf {

enum class ModelKind { baseline, qsmf };

inline std::string to_string(ModelKind k) { return k == ModelKind::baseline ? "baseline" : "qsmf"; }

// Latent parameters of one fitted model. The rating of rater i on note j is
// modeled as mu + alpha_i + rho_i*beta_j + gamma_i.delta_j; the baseline pins
// rho_i = 1 for everyone.
struct ModelParams {
    ModelKind kind = ModelKind::qsmf;
    std::int32_t k = 1;  // ideology dimension
    std::int32_t n_raters = 0;
    std::int32_t n_notes = 0;
    double mu = 0.0;
    std::vector<double> alpha;  // M
    std::vector<double> rho;    // M, nonnegative; all 1 for baseline
    std::vector<double> beta;   // J
    std::vector<double> gamma;  // M*k row-major
    std::vector<double> delta;  // J*k row-major

    static ModelParams zeros(ModelKind kind, std::int32_t m, std::int32_t j, std::int32_t k) {
        if (k < 1) throw ArgumentError("ideology dimension k must be >= 1");
        ModelParams p;
        p.kind = kind;
        p.k = k;
        p.n_raters = m;
        p.n_notes = j;
        p.alpha.assign(static_cast<std::size_t>(m), 0.0);
        p.rho.assign(static_cast<std::size_t>(m), 1.0);
        p.beta.assign(static_cast<std::size_t>(j), 0.0);
        p.gamma.assign(static_cast<std::size_t>(m) * k, 0.0);
        p.delta.assign(static_cast<std::size_t>(j) * k, 0.0);
        return p;
    }

    double ideology_term(std::int32_t i, std::int32_t j) const {
        const double* g = gamma.data() + static_cast<std::size_t>(i) * k;
        const double* d = delta.data() + static_cast<std::size_t>(j) * k;
        double s = 0.0;
        for (std::int32_t l = 0; l < k; ++l) s += g[l] * d[l];
        return s;
    }

    double predict_unchecked(std::int32_t i, std::int32_t j) const {
        return mu + alpha[static_cast<std::size_t>(i)] +
               rho[static_cast<std::size_t>(i)] * beta[static_cast<std::size_t>(j)] +
               ideology_term(i, j);
    }

    double predict(std::int32_t i, std::int32_t j) const {
        if (i < 0 || i >= n_raters) throw ArgumentError("predict: rater index out of range");
        if (j < 0 || j >= n_notes) throw ArgumentError("predict: note index out of range");
        return predict_unchecked(i, j);
    }

    void check_sized_to(const RatingDataset& ds) const {
        if (n_raters != ds.n_raters || n_notes != ds.n_notes)
            throw ArgumentError("model sized for " + std::to_string(n_raters) + "x" +
                                std::to_string(n_notes) + " but dataset is " +
                                std::to_string(ds.n_raters) + "x" + std::to_string(ds.n_notes));
    }
};

struct Hyperparams {
    double lambda_alpha = 0.02;
    double lambda_beta = 0.02;
    double lambda_gamma = 0.02;
    double lambda_delta = 0.02;
    double lambda_rho = 0.02;
    double learning_rate = 0.1;
    int rounds = 5;
    int epoch_ceiling = 1000;
    double conv_tol = 1e-6;
    int conv_patience = 20;
    double clip_norm = 1.0;
    std::int32_t k = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (lambda_alpha < 0 || lambda_beta < 0 || lambda_gamma < 0 || lambda_delta < 0 ||
            lambda_rho < 0)
            throw ArgumentError("regularization weights must be nonnegative");
        if (learning_rate <= 0) throw ArgumentError("learning_rate must be positive");
        if (rounds < 1) throw ArgumentError("rounds must be >= 1");
        if (epoch_ceiling < 1) throw ArgumentError("epoch_ceiling must be >= 1");
        if (conv_tol < 0) throw ArgumentError("conv_tol must be nonnegative");
        if (conv_patience < 1) throw ArgumentError("conv_patience must be >= 1");
        if (clip_norm < 0) throw ArgumentError("clip_norm must be nonnegative");
        if (k < 1) throw ArgumentError("k must be >= 1");
    }
};

// Residuals r_ij - prediction for every triple, in triple order.
inline std::vector<double> residuals(const ModelParams& p, const RatingDataset& ds,
                                     int threads = 1) {
    p.check_sized_to(ds);
    std::vector<double> e(static_cast<std::size_t>(ds.size()));
    parallel_for(ds.size(), threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t t = lo; t < hi; ++t)
            e[static_cast<std::size_t>(t)] = ds.value[t] - p.predict_unchecked(ds.rater[t], ds.note[t]);
    });
    return e;
}

// Objective given precomputed residuals (one shared pass per epoch).
inline double loss_from_residuals(const ModelParams& p, const RatingDataset& ds,
                                  const Hyperparams& h, std::span<const double> e,
                                  int threads = 1) {
    // per-rater partial sums, merged in rater order: the reduction order is
    // fixed regardless of thread count
    std::vector<double> part(static_cast<std::size_t>(ds.n_raters), 0.0);
    parallel_for(ds.n_raters, threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            double s = 0.0;
            for (std::int64_t q = ds.rater_ptr[i]; q < ds.rater_ptr[i + 1]; ++q) {
                const double r = e[static_cast<std::size_t>(ds.rater_rows[q])];
                s += r * r;
            }
            part[static_cast<std::size_t>(i)] = s;
        }
    });
    double data = 0.0;
    for (double s : part) data += s;
    double pen = 0.0;
    for (std::int32_t i = 0; i < p.n_raters; ++i) {
        const double a = p.alpha[static_cast<std::size_t>(i)];
        pen += h.lambda_alpha * a * a;
        if (p.kind == ModelKind::qsmf) {
            const double r1 = p.rho[static_cast<std::size_t>(i)] - 1.0;
            pen += h.lambda_rho * r1 * r1;
        }
        for (std::int32_t l = 0; l < p.k; ++l) {
            const double g = p.gamma[static_cast<std::size_t>(i) * p.k + l];
            pen += h.lambda_gamma * g * g;
        }
    }
    for (std::int32_t j = 0; j < p.n_notes; ++j) {
        const double b = p.beta[static_cast<std::size_t>(j)];
        pen += h.lambda_beta * b * b;
        for (std::int32_t l = 0; l < p.k; ++l) {
            const double d = p.delta[static_cast<std::size_t>(j) * p.k + l];
            pen += h.lambda_delta * d * d;
        }
    }
    return 0.5 * (data + pen);
}

// Regularized least-squares objective. The rho penalty centers at 1 and is
// omitted for the baseline, where rho is not a free parameter.
inline double loss(const ModelParams& p, const RatingDataset& ds, const Hyperparams& h,
                   int threads = 1) {
    p.check_sized_to(ds);
    const auto e = residuals(p, ds, threads);
    return loss_from_residuals(p, ds, h, e, threads);
}

// Analytic partials of the loss for the fast-step parameters. rho is held
// fixed and has no gradient here; it is refreshed in closed form instead.
struct Gradients {
    double mu = 0.0;
    std::vector<double> alpha, beta, gamma, delta;

    double squared_norm() const {
        double s = mu * mu;
        for (double v : alpha) s += v * v;
        for (double v : beta) s += v * v;
        for (double v : gamma) s += v * v;
        for (double v : delta) s += v * v;
        return s;
    }
    void scale(double c) {
        mu *= c;
        for (double& v : alpha) v *= c;
        for (double& v : beta) v *= c;
        for (double& v : gamma) v *= c;
        for (double& v : delta) v *= c;
    }
};

inline Gradients gradients_from_residuals(const ModelParams& p, const RatingDataset& ds,
                                          const Hyperparams& h, std::span<const double> e,
                                          int threads = 1) {
    Gradients g;
    g.alpha.assign(static_cast<std::size_t>(p.n_raters), 0.0);
    g.beta.assign(static_cast<std::size_t>(p.n_notes), 0.0);
    g.gamma.assign(static_cast<std::size_t>(p.n_raters) * p.k, 0.0);
    g.delta.assign(static_cast<std::size_t>(p.n_notes) * p.k, 0.0);
    std::vector<double> mu_part(static_cast<std::size_t>(ds.n_raters), 0.0);
    // rater-side sums: each rater's entries are owned by one chunk
    parallel_for(ds.n_raters, threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            double esum = 0.0;
            double asum = 0.0;
            double* gi = g.gamma.data() + static_cast<std::size_t>(i) * p.k;
            for (std::int64_t q = ds.rater_ptr[i]; q < ds.rater_ptr[i + 1]; ++q) {
                const std::int32_t t = ds.rater_rows[q];
                const double et = e[static_cast<std::size_t>(t)];
                esum += et;
                asum += et;
                const double* dj = p.delta.data() + static_cast<std::size_t>(ds.note[t]) * p.k;
                for (std::int32_t l = 0; l < p.k; ++l) gi[l] -= et * dj[l];
            }
            mu_part[static_cast<std::size_t>(i)] = esum;
            g.alpha[static_cast<std::size_t>(i)] =
                -asum + h.lambda_alpha * p.alpha[static_cast<std::size_t>(i)];
            for (std::int32_t l = 0; l < p.k; ++l)
                gi[l] += h.lambda_gamma * p.gamma[static_cast<std::size_t>(i) * p.k + l];
        }
    });
    // note-side sums
    parallel_for(ds.n_notes, threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t j = lo; j < hi; ++j) {
            double bsum = 0.0;
            double* dj = g.delta.data() + static_cast<std::size_t>(j) * p.k;
            for (std::int64_t q = ds.note_ptr[j]; q < ds.note_ptr[j + 1]; ++q) {
                const std::int32_t t = ds.note_rows[q];
                const double et = e[static_cast<std::size_t>(t)];
                const std::size_t i = static_cast<std::size_t>(ds.rater[t]);
                bsum += p.rho[i] * et;
                const double* gi = p.gamma.data() + i * p.k;
                for (std::int32_t l = 0; l < p.k; ++l) dj[l] -= et * gi[l];
            }
            g.beta[static_cast<std::size_t>(j)] =
                -bsum + h.lambda_beta * p.beta[static_cast<std::size_t>(j)];
            for (std::int32_t l = 0; l < p.k; ++l)
                dj[l] += h.lambda_delta * p.delta[static_cast<std::size_t>(j) * p.k + l];
        }
    });
    double mu_sum = 0.0;
    for (double v : mu_part) mu_sum += v;
    g.mu = -mu_sum;
    return g;
}

inline Gradients gradients(const ModelParams& p, const RatingDataset& ds, const Hyperparams& h,
                           int threads = 1) {
    p.check_sized_to(ds);
    const auto e = residuals(p, ds, threads);
    return gradients_from_residuals(p, ds, h, e, threads);
}

// De-ideologized rating d_ij = r_ij - mu - alpha_i - gamma_i.delta_j for every
// triple. This strips everything except the quality channel and noise.
inline std::vector<double> deideologize(const ModelParams& p, const RatingDataset& ds,
                                        int threads = 1) {
    p.check_sized_to(ds);
    std::vector<double> d(static_cast<std::size_t>(ds.size()));
    parallel_for(ds.size(), threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t t = lo; t < hi; ++t)
            d[static_cast<std::size_t>(t)] = ds.value[t] - p.mu -
                                             p.alpha[static_cast<std::size_t>(ds.rater[t])] -
                                             p.ideology_term(ds.rater[t], ds.note[t]);
    });
    return d;
}

// Rescale (rho, beta) -> (rho/mean(rho), beta*mean(rho)). Predictions are
// unchanged; the returned scale is the pre-normalization mean of rho.
inline std::pair<ModelParams, double> normalize(const ModelParams& p) {
    if (p.kind != ModelKind::qsmf) throw ArgumentError("normalize: model is not qsmf");
    if (p.rho.empty()) throw ArgumentError("normalize: empty model");
    double rho_bar = 0.0;
    for (double r : p.rho) rho_bar += r;
    rho_bar /= static_cast<double>(p.rho.size());
    if (!(rho_bar > 0.0)) throw DegenerateModelError("normalize: mean rho is not positive");
    ModelParams out = p;
    for (double& r : out.rho) r /= rho_bar;
    for (double& b : out.beta) b *= rho_bar;
    return {std::move(out), rho_bar};
}

// --- parameter file ----------------------------------------------------------

inline void save_params(const ModelParams& p, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write("QSMFMP1\n", 8);
    detail::put<std::int32_t>(out, p.kind == ModelKind::baseline ? 0 : 1);
    detail::put<std::int32_t>(out, p.k);
    detail::put<std::int32_t>(out, p.n_raters);
    detail::put<std::int32_t>(out, p.n_notes);
    detail::put<double>(out, p.mu);
    detail::put_vec(out, p.alpha);
    detail::put_vec(out, p.rho);
    detail::put_vec(out, p.beta);
    detail::put_vec(out, p.gamma);
    detail::put_vec(out, p.delta);
    if (!out) throw IoError("write failed: " + path.string());
}

inline ModelParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != "QSMFMP1\n")
        throw IoError("not a parameter file: " + path.string());
    ModelParams p;
    p.kind = detail::get<std::int32_t>(in) == 0 ? ModelKind::baseline : ModelKind::qsmf;
    p.k = detail::get<std::int32_t>(in);
    p.n_raters = detail::get<std::int32_t>(in);
    p.n_notes = detail::get<std::int32_t>(in);
    p.mu = detail::get<double>(in);
    p.alpha = detail::get_vec<double>(in);
    p.rho = detail::get_vec<double>(in);
    p.beta = detail::get_vec<double>(in);
    p.gamma = detail::get_vec<double>(in);
    p.delta = detail::get_vec<double>(in);
    return p;
}

}  // namespace qsmf
