#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qsmf/dataset.hpp"
#include "qsmf/model.hpp"
#include "qsmf/stats.hpp"

namespace qsmf {

// Activity bins for the split-half tables, by rating count.
inline constexpr std::array<std::int64_t, 5> kActivityBinEdges{20, 50, 100, 200, 500};

inline int activity_bin(std::int64_t n) {
    int b = -1;  // below the first edge
    for (std::size_t e = 0; e < kActivityBinEdges.size(); ++e)
        if (n >= kActivityBinEdges[e]) b = static_cast<int>(e);
    return b;
}

inline std::string activity_bin_label(int b) {
    if (b < 0) return "<20";
    if (b >= 4) return "500+";
    return std::to_string(kActivityBinEdges[static_cast<std::size_t>(b)]) + "-" +
           std::to_string(kActivityBinEdges[static_cast<std::size_t>(b) + 1]);
}

// Per-rater model-free slope of de-ideologized ratings on the baseline
// quality estimates, with its Rao-score decomposition s_i = 1 + U_i/B_i.
struct SlopeTable {
    std::vector<double> slope;        // s_i, defined only where defined[i]
    std::vector<double> score_u;      // U_i = sum_j beta_j e_ij
    std::vector<double> b_sum;        // B_i = sum_j beta_j^2
    std::vector<std::int64_t> n_ratings;
    std::vector<std::uint8_t> defined;  // B_i > 0

    std::vector<double> defined_slopes() const {
        std::vector<double> out;
        for (std::size_t i = 0; i < slope.size(); ++i)
            if (defined[i]) out.push_back(slope[i]);
        return out;
    }
};

inline SlopeTable slopes(const ModelParams& p_baseline, const RatingDataset& ds) {
    if (p_baseline.kind != ModelKind::baseline)
        throw ArgumentError("slopes: expected a baseline model");
    p_baseline.check_sized_to(ds);
    const auto d = deideologize(p_baseline, ds);
    SlopeTable t;
    const auto m = static_cast<std::size_t>(ds.n_raters);
    t.slope.assign(m, 0.0);
    t.score_u.assign(m, 0.0);
    t.b_sum.assign(m, 0.0);
    t.n_ratings.assign(m, 0);
    t.defined.assign(m, 0);
    for (std::int32_t i = 0; i < ds.n_raters; ++i) {
        double num = 0.0, bsum = 0.0, u = 0.0;
        for (std::int64_t q = ds.rater_ptr[i]; q < ds.rater_ptr[i + 1]; ++q) {
            const std::int32_t r = ds.rater_rows[q];
            const double b = p_baseline.beta[static_cast<std::size_t>(ds.note[r])];
            const double dr = d[static_cast<std::size_t>(r)];
            num += dr * b;
            bsum += b * b;
            u += b * (dr - b);  // e_ij = d_ij - beta_j under the baseline
        }
        t.n_ratings[static_cast<std::size_t>(i)] = ds.ratings_of_rater(i);
        t.b_sum[static_cast<std::size_t>(i)] = bsum;
        t.score_u[static_cast<std::size_t>(i)] = u;
        if (bsum > 0.0) {
            t.slope[static_cast<std::size_t>(i)] = num / bsum;
            t.defined[static_cast<std::size_t>(i)] = 1;
        }
    }
    return t;
}

namespace detail {

// Half-specific slopes under frozen params; undefined entries stay NaN.
inline std::vector<double> half_slopes(const ModelParams& p, const RatingDataset& half) {
    const auto d = deideologize(p, half);
    std::vector<double> s(static_cast<std::size_t>(half.n_raters),
                          std::numeric_limits<double>::quiet_NaN());
    for (std::int32_t i = 0; i < half.n_raters; ++i) {
        double num = 0.0, bsum = 0.0;
        for (std::int64_t q = half.rater_ptr[i]; q < half.rater_ptr[i + 1]; ++q) {
            const std::int32_t r = half.rater_rows[q];
            const double b = p.beta[static_cast<std::size_t>(half.note[r])];
            num += d[static_cast<std::size_t>(r)] * b;
            bsum += b * b;
        }
        if (bsum > 0.0) s[static_cast<std::size_t>(i)] = num / bsum;
    }
    return s;
}

// Design columns (gamma, |gamma|, gamma^2) per ideology dimension, restricted
// to the given raters.
inline std::vector<std::vector<double>> ideology_design(const ModelParams& p,
                                                        const std::vector<std::int32_t>& raters) {
    std::vector<std::vector<double>> cols;
    for (std::int32_t l = 0; l < p.k; ++l) {
        std::vector<double> g, ag, g2;
        g.reserve(raters.size());
        for (std::int32_t i : raters) {
            const double v = p.gamma[static_cast<std::size_t>(i) * p.k + l];
            g.push_back(v);
            ag.push_back(std::abs(v));
            g2.push_back(v * v);
        }
        cols.push_back(std::move(g));
        cols.push_back(std::move(ag));
        cols.push_back(std::move(g2));
    }
    return cols;
}

}  // namespace detail

struct BinCorrelation {
    std::string bin;
    std::int64_t n_raters = 0;
    std::optional<double> r;
};

struct SplitHalfResult {
    double r = 0.0;
    ConfidenceInterval ci;
    double partial_r = 0.0;
    std::vector<BinCorrelation> by_bin;
    std::int64_t n_raters = 0;
};

// Test 1: split each eligible rater's ratings into random halves, compute the
// model-free slope in each half under the same frozen parameters, and
// correlate across raters. A stable trait gives r > 0; homogeneous
// sensitivity gives r near 0.
inline SplitHalfResult split_half(const ModelParams& p, const RatingDataset& ds,
                                  std::int64_t min_ratings = 20, std::uint64_t seed = 0,
                                  int n_bootstrap = 1000) {
    p.check_sized_to(ds);
    SplitSpec spec;
    spec.kind = SplitSpec::Kind::per_rater_half;
    spec.seed = derive_seed(seed, 0x511);
    auto [a, b] = split(ds, spec);
    const auto sa = detail::half_slopes(p, a);
    const auto sb = detail::half_slopes(p, b);
    std::vector<std::int32_t> raters;
    std::vector<double> xa, xb;
    for (std::int32_t i = 0; i < ds.n_raters; ++i) {
        if (ds.ratings_of_rater(i) < min_ratings) continue;
        const double va = sa[static_cast<std::size_t>(i)];
        const double vb = sb[static_cast<std::size_t>(i)];
        if (std::isnan(va) || std::isnan(vb)) continue;
        raters.push_back(i);
        xa.push_back(va);
        xb.push_back(vb);
    }
    if (raters.size() < 3)
        throw InsufficientDataError("split_half: fewer than 3 eligible raters");
    SplitHalfResult res;
    res.n_raters = static_cast<std::int64_t>(raters.size());
    res.r = pearson(xa, xb);
    res.ci = bootstrap_ci(
        xa, xb, [](std::span<const double> x, std::span<const double> y) { return pearson(x, y); },
        n_bootstrap, derive_seed(seed, 0xb007));
    const auto design = detail::ideology_design(p, raters);
    res.partial_r = partial_pearson(xa, xb, design);
    for (int bin = 0; bin < 5; ++bin) {
        BinCorrelation bc;
        bc.bin = activity_bin_label(bin);
        std::vector<double> ya, yb;
        for (std::size_t t = 0; t < raters.size(); ++t)
            if (activity_bin(ds.ratings_of_rater(raters[t])) == bin) {
                ya.push_back(xa[t]);
                yb.push_back(xb[t]);
            }
        bc.n_raters = static_cast<std::int64_t>(ya.size());
        if (ya.size() >= 3) {
            try {
                bc.r = pearson(ya, yb);
            } catch (const Error&) {
            }
        }
        res.by_bin.push_back(std::move(bc));
    }
    return res;
}

struct DispersionResult {
    double d_obs = 0.0;
    double null_mean = 0.0;
    double null_sd = 0.0;
    double p_value = 1.0;
    int n_perm = 0;
};

// Test 2: is the dispersion of rater slopes larger than chance? The null
// shuffles rater identities across rating rows and recomputes slopes, which
// preserves each rater's activity but severs any stable trait.
inline DispersionResult dispersion_test(const ModelParams& p, const RatingDataset& ds,
                                        int n_perm = 100, std::uint64_t seed = 0) {
    if (n_perm < 1) throw ArgumentError("dispersion_test: n_perm < 1");
    const auto base = slopes(p, ds);
    const auto obs = base.defined_slopes();
    if (obs.size() < 3) throw InsufficientDataError("dispersion_test: too few defined slopes");
    DispersionResult res;
    res.n_perm = n_perm;
    res.d_obs = iqr(obs);

    const auto m = static_cast<std::size_t>(ds.n_raters);
    std::vector<double> null_d;
    null_d.reserve(static_cast<std::size_t>(n_perm));
    std::vector<std::int32_t> who(ds.rater.begin(), ds.rater.end());
    std::vector<double> num(m), den(m);
    int exceed = 0;
    for (int perm = 0; perm < n_perm; ++perm) {
        auto rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(perm) + 1));
        std::shuffle(who.begin(), who.end(), rng);
        std::fill(num.begin(), num.end(), 0.0);
        std::fill(den.begin(), den.end(), 0.0);
        for (std::int64_t t = 0; t < ds.size(); ++t) {
            const auto i = static_cast<std::size_t>(who[static_cast<std::size_t>(t)]);
            const double b = p.beta[static_cast<std::size_t>(ds.note[t])];
            const double d = ds.value[t] - p.mu - p.alpha[i] -
                             p.ideology_term(who[static_cast<std::size_t>(t)], ds.note[t]);
            num[i] += d * b;
            den[i] += b * b;
        }
        std::vector<double> s;
        s.reserve(m);
        for (std::size_t i = 0; i < m; ++i)
            if (den[i] > 0.0) s.push_back(num[i] / den[i]);
        const double d_null = s.empty() ? 0.0 : iqr(s);
        null_d.push_back(d_null);
        if (d_null >= res.d_obs) ++exceed;
    }
    res.null_mean = mean(null_d);
    res.null_sd = null_d.size() > 1 ? stddev_sample(null_d) : 0.0;
    res.p_value = (1.0 + exceed) / (1.0 + n_perm);
    return res;
}

struct ConvergentResult {
    double pearson_r = 0.0;
    ConfidenceInterval pearson_ci;
    double spearman_r = 0.0;
    ConfidenceInterval spearman_ci;
    double partial_pearson_r = 0.0;
    std::int64_t n_raters = 0;
};

// Test 3: the model-estimated rho should agree with the model-free slope.
inline ConvergentResult convergent_validity(const ModelParams& p_qs, const SlopeTable& table,
                                            std::uint64_t seed = 0, int n_bootstrap = 1000) {
    if (p_qs.kind != ModelKind::qsmf) throw ArgumentError("convergent_validity: expected qsmf");
    if (table.slope.size() != p_qs.rho.size())
        throw ArgumentError("convergent_validity: slope table does not match model");
    std::vector<std::int32_t> raters;
    std::vector<double> x, y;
    for (std::size_t i = 0; i < table.slope.size(); ++i)
        if (table.defined[i]) {
            raters.push_back(static_cast<std::int32_t>(i));
            x.push_back(p_qs.rho[i]);
            y.push_back(table.slope[i]);
        }
    if (raters.size() < 3)
        throw InsufficientDataError("convergent_validity: fewer than 3 raters");
    ConvergentResult res;
    res.n_raters = static_cast<std::int64_t>(raters.size());
    res.pearson_r = pearson(x, y);
    res.pearson_ci = bootstrap_ci(
        x, y, [](std::span<const double> a, std::span<const double> b) { return pearson(a, b); },
        n_bootstrap, derive_seed(seed, 0xc1));
    res.spearman_r = spearman(x, y);
    res.spearman_ci = bootstrap_ci(
        x, y, [](std::span<const double> a, std::span<const double> b) { return spearman(a, b); },
        n_bootstrap, derive_seed(seed, 0xc2));
    res.partial_pearson_r = partial_pearson(x, y, detail::ideology_design(p_qs, raters));
    return res;
}

struct IvwDecile {
    double gamma_lo = 0.0, gamma_hi = 0.0;
    double mean_abs_gamma = 0.0;
    double mean_reputation = 0.0;
    std::int64_t n_raters = 0;
};

struct IvwResult {
    std::vector<double> reputation;  // per rater
    std::vector<IvwDecile> by_abs_gamma_decile;
};

// Inverse-variance-style reputation built from baseline residuals: the
// documented failure mode, not a scoring method. Each squared residual is
// normalized by its note's residual MSE, then a rater's reputation is the
// regularized inverse of their average normalized residual.
inline IvwResult ivw_reputation(const ModelParams& p_baseline, const RatingDataset& ds,
                                double reg = 5.0) {
    if (p_baseline.kind != ModelKind::baseline)
        throw ArgumentError("ivw_reputation: expected a baseline model");
    p_baseline.check_sized_to(ds);
    const auto e = residuals(p_baseline, ds);
    constexpr double kMseFloor = 1e-12;
    std::vector<double> note_mse(static_cast<std::size_t>(ds.n_notes), kMseFloor);
    for (std::int32_t j = 0; j < ds.n_notes; ++j) {
        const std::int64_t n = ds.ratings_of_note(j);
        if (n == 0) continue;
        double s = 0.0;
        for (std::int64_t q = ds.note_ptr[j]; q < ds.note_ptr[j + 1]; ++q) {
            const double v = e[static_cast<std::size_t>(ds.note_rows[q])];
            s += v * v;
        }
        note_mse[static_cast<std::size_t>(j)] = std::max(kMseFloor, s / static_cast<double>(n));
    }
    IvwResult res;
    res.reputation.assign(static_cast<std::size_t>(ds.n_raters), 0.0);
    for (std::int32_t i = 0; i < ds.n_raters; ++i) {
        double u = 0.0;
        for (std::int64_t q = ds.rater_ptr[i]; q < ds.rater_ptr[i + 1]; ++q) {
            const std::int32_t t = ds.rater_rows[q];
            const double v = e[static_cast<std::size_t>(t)];
            u += v * v / note_mse[static_cast<std::size_t>(ds.note[t])];
        }
        res.reputation[static_cast<std::size_t>(i)] =
            (static_cast<double>(ds.ratings_of_rater(i)) + reg) / (u + reg);
    }
    // decile summary against ideology intensity
    std::vector<double> ag(static_cast<std::size_t>(ds.n_raters));
    for (std::int32_t i = 0; i < ds.n_raters; ++i) {
        double s = 0.0;
        for (std::int32_t l = 0; l < p_baseline.k; ++l) {
            const double g = p_baseline.gamma[static_cast<std::size_t>(i) * p_baseline.k + l];
            s += g * g;
        }
        ag[static_cast<std::size_t>(i)] = std::sqrt(s);
    }
    std::vector<std::size_t> order(ag.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ag[a] < ag[b]; });
    const std::size_t n = order.size();
    for (int dec = 0; dec < 10; ++dec) {
        const std::size_t lo = n * static_cast<std::size_t>(dec) / 10;
        const std::size_t hi = n * static_cast<std::size_t>(dec + 1) / 10;
        if (lo >= hi) continue;
        IvwDecile d;
        d.gamma_lo = ag[order[lo]];
        d.gamma_hi = ag[order[hi - 1]];
        double sg = 0.0, sr = 0.0;
        for (std::size_t t = lo; t < hi; ++t) {
            sg += ag[order[t]];
            sr += res.reputation[order[t]];
        }
        d.n_raters = static_cast<std::int64_t>(hi - lo);
        d.mean_abs_gamma = sg / static_cast<double>(hi - lo);
        d.mean_reputation = sr / static_cast<double>(hi - lo);
        res.by_abs_gamma_decile.push_back(d);
    }
    return res;
}

// Fraction of each rater's de-ideologized variation explained by the fitted
// quality channel: R2_i = 1 - sum (d_ij - rho_i beta_j)^2 / sum d_ij^2.
inline std::vector<double> quality_r2(const ModelParams& p_qs, const RatingDataset& ds) {
    if (p_qs.kind != ModelKind::qsmf) throw ArgumentError("quality_r2: expected qsmf");
    p_qs.check_sized_to(ds);
    const auto d = deideologize(p_qs, ds);
    std::vector<double> r2(static_cast<std::size_t>(ds.n_raters), 0.0);
    for (std::int32_t i = 0; i < ds.n_raters; ++i) {
        double dsum = 0.0, sse = 0.0;
        const double rho = p_qs.rho[static_cast<std::size_t>(i)];
        for (std::int64_t q = ds.rater_ptr[i]; q < ds.rater_ptr[i + 1]; ++q) {
            const std::int32_t t = ds.rater_rows[q];
            const double dv = d[static_cast<std::size_t>(t)];
            const double fit = rho * p_qs.beta[static_cast<std::size_t>(ds.note[t])];
            dsum += dv * dv;
            sse += (dv - fit) * (dv - fit);
        }
        if (dsum > 0.0) r2[static_cast<std::size_t>(i)] = 1.0 - sse / dsum;
    }
    return r2;
}

}  // namespace qsmf
