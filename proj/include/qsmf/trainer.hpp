#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qsmf/model.hpp"
#include "qsmf/stats.hpp"

namespace qsmf {

// Scale the gradient so its global L2 norm is at most max_norm. Returns the
// pre-clip norm.
inline double clip_global_norm(Gradients& g, double max_norm) {
    const double norm = std::sqrt(g.squared_norm());
    if (max_norm > 0.0 && norm > max_norm) g.scale(max_norm / norm);
    return norm;
}

// Closed-form refresh of every rater's quality sensitivity, holding all other
// parameters fixed. Each rater's subproblem is a one-dimensional nonnegative
// ridge regression of de-ideologized ratings on the fitted quality axis:
//   rho_i = max(0, (sum_j beta_j d_ij + lam) / (sum_j beta_j^2 + lam)),
// with lam = lambda_rho * N / M. A rater with zero denominator keeps the
// prior value 1.
inline std::vector<double> rho_update(const RatingDataset& ds, const ModelParams& p,
                                      double lambda_rho, int threads = 1) {
    p.check_sized_to(ds);
    if (ds.n_raters == 0) return {};
    const double lam_eff =
        lambda_rho * static_cast<double>(ds.size()) / static_cast<double>(ds.n_raters);
    const auto d = deideologize(p, ds, threads);
    std::vector<double> out(static_cast<std::size_t>(ds.n_raters), 1.0);
    parallel_for(ds.n_raters, threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            double num = 0.0, den = 0.0;
            for (std::int64_t q = ds.rater_ptr[i]; q < ds.rater_ptr[i + 1]; ++q) {
                const std::int32_t t = ds.rater_rows[q];
                const double b = p.beta[static_cast<std::size_t>(ds.note[t])];
                num += b * d[static_cast<std::size_t>(t)];
                den += b * b;
            }
            if (den + lam_eff > 0.0)
                out[static_cast<std::size_t>(i)] = std::max(0.0, (num + lam_eff) / (den + lam_eff));
        }
    });
    return out;
}

// One note's rater pool for the conditional (beta_j, delta_j) solve.
struct NoteBlock {
    std::span<const double> rho;    // n
    std::span<const double> gamma;  // n*k row-major
    std::span<const double> y;      // n partial residuals r_ij - mu - alpha_i
    std::int32_t k = 1;
};

struct NoteSolution {
    double beta = 0.0;
    std::vector<double> delta;  // k
};

// Exact minimizer of the note subproblem
//   min 1/2 sum_i (y_i - rho_i b - gamma_i.d)^2 + lb/2 b^2 + ld/2 |d|^2
// via the (1+k)x(1+k) normal equations. The coefficient matrix is positive
// definite for lb, ld > 0.
inline NoteSolution solve_note_block(const NoteBlock& nb, double lambda_beta,
                                     double lambda_delta) {
    const std::size_t n = nb.y.size();
    const std::int32_t k = nb.k;
    if (n == 0) throw ArgumentError("solve_note_block: empty rater pool");
    if (nb.rho.size() != n || nb.gamma.size() != n * static_cast<std::size_t>(k))
        throw ArgumentError("solve_note_block: size mismatch");
    if (!(lambda_beta > 0.0) || !(lambda_delta > 0.0))
        throw ArgumentError("solve_note_block: penalties must be positive");
    const std::size_t dim = 1 + static_cast<std::size_t>(k);
    std::vector<double> a(dim * dim, 0.0), b(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = nb.rho[i];
        const double* g = nb.gamma.data() + i * static_cast<std::size_t>(k);
        a[0] += r * r;
        b[0] += r * nb.y[i];
        for (std::int32_t l = 0; l < k; ++l) {
            a[static_cast<std::size_t>(1 + l)] += r * g[l];
            b[static_cast<std::size_t>(1 + l)] += g[l] * nb.y[i];
            for (std::int32_t m = 0; m < k; ++m)
                a[(1 + static_cast<std::size_t>(l)) * dim + 1 + static_cast<std::size_t>(m)] +=
                    g[l] * g[m];
        }
    }
    a[0] += lambda_beta;
    for (std::int32_t l = 0; l < k; ++l) {
        a[(1 + static_cast<std::size_t>(l)) * dim + 1 + static_cast<std::size_t>(l)] += lambda_delta;
        // mirror the first row into the first column
        a[(1 + static_cast<std::size_t>(l)) * dim] = a[static_cast<std::size_t>(1 + l)];
    }
    auto x = solve_dense(std::move(a), std::move(b));
    NoteSolution sol;
    sol.beta = x[0];
    sol.delta.assign(x.begin() + 1, x.end());
    return sol;
}

struct FitReport {
    double final_loss = 0.0;                   // objective after the last round
    std::vector<int> epochs_per_round;         // fast-phase epochs actually run
    std::vector<bool> converged;               // per-round convergence flag
    std::map<int, double> rho_percentiles;     // {1,5,10,50,90,95,99} after normalization
    double normalization_scale = 1.0;          // mean rho before normalization
};

struct FitOptions {
    int threads = 1;
    std::vector<double>* loss_trace = nullptr;  // per-epoch objective, if wanted
};

namespace detail {

// Full-batch Adam over the fast-step parameters (mu, alpha, beta, gamma,
// delta) with global-norm clipping. rho stays frozen. Returns epochs run and
// whether the loss-delta rule fired before the ceiling.
struct AdamState {
    double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::int64_t t = 0;
    Gradients m, v;

    void init(const ModelParams& p) {
        t = 0;
        m.mu = v.mu = 0.0;
        m.alpha.assign(p.alpha.size(), 0.0);
        v.alpha.assign(p.alpha.size(), 0.0);
        m.beta.assign(p.beta.size(), 0.0);
        v.beta.assign(p.beta.size(), 0.0);
        m.gamma.assign(p.gamma.size(), 0.0);
        v.gamma.assign(p.gamma.size(), 0.0);
        m.delta.assign(p.delta.size(), 0.0);
        v.delta.assign(p.delta.size(), 0.0);
    }

    void step(ModelParams& p, const Gradients& g, double lr) {
        ++t;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        auto upd = [&](double& mv, double& vv, double& theta, double grad) {
            mv = b1 * mv + (1.0 - b1) * grad;
            vv = b2 * vv + (1.0 - b2) * grad * grad;
            theta -= lr * (mv / c1) / (std::sqrt(vv / c2) + eps);
        };
        upd(m.mu, v.mu, p.mu, g.mu);
        for (std::size_t i = 0; i < p.alpha.size(); ++i)
            upd(m.alpha[i], v.alpha[i], p.alpha[i], g.alpha[i]);
        for (std::size_t j = 0; j < p.beta.size(); ++j)
            upd(m.beta[j], v.beta[j], p.beta[j], g.beta[j]);
        for (std::size_t i = 0; i < p.gamma.size(); ++i)
            upd(m.gamma[i], v.gamma[i], p.gamma[i], g.gamma[i]);
        for (std::size_t j = 0; j < p.delta.size(); ++j)
            upd(m.delta[j], v.delta[j], p.delta[j], g.delta[j]);
    }
};

struct FastPhaseResult {
    int epochs = 0;
    bool converged = false;
};

inline FastPhaseResult fast_phase(ModelParams& p, const RatingDataset& ds, const Hyperparams& h,
                                  const FitOptions& opts, int epoch_base) {
    AdamState adam;
    adam.init(p);
    double prev_loss = 0.0;
    bool have_prev = false;
    int streak = 0;
    FastPhaseResult res;
    for (int epoch = 0; epoch < h.epoch_ceiling; ++epoch) {
        const auto e = residuals(p, ds, opts.threads);
        auto g = gradients_from_residuals(p, ds, h, e, opts.threads);
        const double cur = loss_from_residuals(p, ds, h, e, opts.threads);
        if (!std::isfinite(cur))
            throw DivergenceError("loss diverged at epoch " + std::to_string(epoch_base + epoch));
        if (opts.loss_trace) opts.loss_trace->push_back(cur);
        if (have_prev && std::abs(cur - prev_loss) < h.conv_tol) {
            if (++streak >= h.conv_patience) {
                res.epochs = epoch;
                res.converged = true;
                return res;
            }
        } else {
            streak = 0;
        }
        prev_loss = cur;
        have_prev = true;
        clip_global_norm(g, h.clip_norm);
        adam.step(p, g, h.learning_rate);
        ++res.epochs;
    }
    return res;
}

}  // namespace detail

// Fit a model by alternating minimization with timescale separation. The
// baseline runs a single fast phase. QS-MF runs `rounds` rounds of
// {fast phase with rho frozen; closed-form rho refresh}, then anchors
// mean(rho) at 1 by rescaling (rho, beta). Optimizer moments reset each round.
inline std::pair<ModelParams, FitReport> fit(const RatingDataset& ds, const Hyperparams& h,
                                             ModelKind kind,
                                             const ModelParams* init = nullptr,
                                             const FitOptions& opts = {}) {
    h.validate();
    if (ds.empty()) throw ArgumentError("fit: empty dataset");
    ModelParams p;
    if (init) {
        p = *init;
        p.check_sized_to(ds);
        if (p.k != h.k) throw ArgumentError("fit: init has k=" + std::to_string(p.k) +
                                            " but hyperparams ask for k=" + std::to_string(h.k));
        p.kind = kind;
    } else {
        p = ModelParams::zeros(kind, ds.n_raters, ds.n_notes, h.k);
        p.mu = mean(ds.value);
        // tiny random ideology init: an exactly-zero bilinear factor is a
        // stationary point the optimizer can never leave
        auto rng = make_rng(derive_seed(h.seed, 0x1de0));
        std::uniform_real_distribution<double> u(-0.1, 0.1);
        for (double& g : p.gamma) g = u(rng);
        for (double& d : p.delta) d = u(rng);
    }
    if (kind == ModelKind::baseline) std::fill(p.rho.begin(), p.rho.end(), 1.0);

    FitReport report;
    const int rounds = kind == ModelKind::baseline ? 1 : h.rounds;
    int epoch_base = 0;
    for (int r = 0; r < rounds; ++r) {
        const auto res = detail::fast_phase(p, ds, h, opts, epoch_base);
        epoch_base += res.epochs;
        report.epochs_per_round.push_back(res.epochs);
        report.converged.push_back(res.converged);
        if (kind == ModelKind::qsmf) p.rho = rho_update(ds, p, h.lambda_rho, opts.threads);
    }
    report.final_loss = loss(p, ds, h, opts.threads);
    if (kind == ModelKind::qsmf) {
        auto [normed, scale] = normalize(p);
        p = std::move(normed);
        report.normalization_scale = scale;
    }
    for (int pct : {1, 5, 10, 50, 90, 95, 99})
        report.rho_percentiles[pct] = percentile(p.rho, static_cast<double>(pct));
    return {std::move(p), std::move(report)};
}

}  // namespace qsmf
