#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qsmf/dataset.hpp"
#include "qsmf/model.hpp"
#include "qsmf/stats.hpp"

namespace qsmf {

enum class RaterType { good, partisan, random_voter, always_helpful, always_not };

inline std::string to_string(RaterType t) {
    switch (t) {
        case RaterType::good: return "good";
        case RaterType::partisan: return "partisan";
        case RaterType::random_voter: return "random";
        case RaterType::always_helpful: return "always_helpful";
        case RaterType::always_not: return "always_not";
    }
    return "?";
}

struct SyntheticSpec {
    std::int32_t n_raters = 1000;
    std::int32_t n_notes = 500;
    // every rater rates this many distinct notes unless activity_mix is given
    std::int32_t ratings_per_rater = 40;
    // explicit sparsity pattern: (count, weight) menu assigned by quota
    std::vector<std::pair<std::int32_t, double>> activity_mix;
    double mu = 0.585;
    double sd_alpha = 0.3;
    double sd_beta = 0.4;
    double sd_gamma = 0.5;
    double sd_delta = 0.5;
    std::pair<double, double> noise_range{0.1, 0.4};  // per-rater sigma ~ U(lo, hi)
    double f_bad = 0.0;
    // partisan, random, always_helpful, always_not
    std::array<double, 4> bad_split{1.0 / 3, 1.0 / 3, 1.0 / 6, 1.0 / 6};
    bool binary = true;
    double threshold = 0.5;
    std::int32_t k = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_raters < 1 || n_notes < 1) throw ArgumentError("synthetic: empty dimensions");
        if (f_bad < 0.0 || f_bad > 1.0) throw ArgumentError("synthetic: f_bad outside [0,1]");
        double s = 0.0;
        for (double w : bad_split) {
            if (w < 0.0) throw ArgumentError("synthetic: negative bad_split weight");
            s += w;
        }
        if (std::abs(s - 1.0) > 1e-9) throw ArgumentError("synthetic: bad_split must sum to 1");
        if (noise_range.first < 0.0 || noise_range.second < noise_range.first)
            throw ArgumentError("synthetic: bad noise_range");
        if (k < 1) throw ArgumentError("synthetic: k must be >= 1");
        auto check_count = [&](std::int32_t c) {
            if (c < 1 || c > n_notes)
                throw ArgumentError("synthetic: ratings per rater must be in [1, n_notes]");
        };
        if (activity_mix.empty()) {
            check_count(ratings_per_rater);
        } else {
            for (const auto& [c, w] : activity_mix) {
                check_count(c);
                if (w < 0.0) throw ArgumentError("synthetic: negative activity weight");
            }
        }
    }
};

// A generated dataset together with the latents that produced it.
struct SyntheticWorld {
    RatingDataset dataset;
    ModelParams truth;  // generating latents; rho holds rho_star
    std::vector<RaterType> rater_type;
    std::vector<double> sigma;  // per-rater noise sd

    std::vector<std::uint8_t> good_mask() const {
        std::vector<std::uint8_t> m(rater_type.size());
        for (std::size_t i = 0; i < rater_type.size(); ++i)
            m[i] = rater_type[i] == RaterType::good ? 1 : 0;
        return m;
    }
};

namespace detail {

// Largest-remainder allocation of n into weighted shares.
inline std::vector<std::int64_t> allocate_counts(std::int64_t n, std::span<const double> weights) {
    std::vector<std::int64_t> out(weights.size(), 0);
    std::vector<std::pair<double, std::size_t>> rema;
    std::int64_t used = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = static_cast<double>(n) * weights[i];
        out[i] = static_cast<std::int64_t>(std::floor(exact));
        used += out[i];
        rema.emplace_back(exact - std::floor(exact), i);
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t t = 0; used < n && t < rema.size(); ++t, ++used) ++out[rema[t].second];
    return out;
}

}  // namespace detail

// Draw a world from the assumed rating process: mean-zero uniform latents
// scaled to the target sds, signal mu + alpha + rho*beta + gamma.delta + eps,
// binary emission 1[signal > threshold] or the clamped signal. A fraction
// f_bad of raters have rho_star = 0 and rate by behavioral override instead.
// When `pattern` is given, its (rater, note) pairs replace the sampled
// sparsity pattern and its dimensions override the spec's.
inline SyntheticWorld generate(const SyntheticSpec& spec,
                               const RatingDataset* pattern = nullptr) {
    SyntheticSpec eff = spec;
    if (pattern) {
        eff.n_raters = pattern->n_raters;
        eff.n_notes = pattern->n_notes;
        eff.ratings_per_rater = 1;  // pattern supplies the counts
    }
    eff.validate();
    auto rng = make_rng(derive_seed(spec.seed, 0x9e4));
    const SyntheticSpec& sp = eff;
    const std::int32_t m = sp.n_raters, j = sp.n_notes;
    SyntheticWorld w;
    w.truth = ModelParams::zeros(ModelKind::qsmf, m, j, spec.k);
    w.truth.mu = spec.mu;
    auto uniform_sd = [&](double sd) {
        const double half = sd * std::sqrt(3.0);
        return std::uniform_real_distribution<double>(-half, half)(rng);
    };
    for (auto& a : w.truth.alpha) a = uniform_sd(spec.sd_alpha);
    for (auto& b : w.truth.beta) b = uniform_sd(spec.sd_beta);
    for (auto& g : w.truth.gamma) g = uniform_sd(spec.sd_gamma);
    for (auto& d : w.truth.delta) d = uniform_sd(spec.sd_delta);
    std::uniform_real_distribution<double> noise_sd(spec.noise_range.first,
                                                    spec.noise_range.second);
    w.sigma.resize(static_cast<std::size_t>(m));
    for (auto& s : w.sigma) s = noise_sd(rng);

    // rater types: n_bad raters split by quota, positions shuffled
    const auto n_bad = static_cast<std::int64_t>(std::llround(spec.f_bad * m));
    const auto type_counts = detail::allocate_counts(n_bad, spec.bad_split);
    std::vector<RaterType> pool;
    pool.reserve(static_cast<std::size_t>(m));
    const std::array<RaterType, 4> bad_types{RaterType::partisan, RaterType::random_voter,
                                             RaterType::always_helpful, RaterType::always_not};
    for (std::size_t t = 0; t < bad_types.size(); ++t)
        pool.insert(pool.end(), static_cast<std::size_t>(type_counts[t]), bad_types[t]);
    pool.insert(pool.end(), static_cast<std::size_t>(m) - pool.size(), RaterType::good);
    std::shuffle(pool.begin(), pool.end(), rng);
    w.rater_type = std::move(pool);
    for (std::int32_t i = 0; i < m; ++i)
        w.truth.rho[static_cast<std::size_t>(i)] =
            w.rater_type[static_cast<std::size_t>(i)] == RaterType::good ? 1.0 : 0.0;

    // per-rater note lists: from the pattern when given, else sampled
    std::vector<std::vector<std::int32_t>> notes_of(static_cast<std::size_t>(m));
    if (pattern) {
        for (std::int32_t i = 0; i < m; ++i)
            for (std::int64_t q = pattern->rater_ptr[i]; q < pattern->rater_ptr[i + 1]; ++q)
                notes_of[static_cast<std::size_t>(i)].push_back(
                    pattern->note[pattern->rater_rows[q]]);
    } else {
        std::vector<std::int32_t> n_ratings(static_cast<std::size_t>(m), sp.ratings_per_rater);
        if (!sp.activity_mix.empty()) {
            std::vector<double> wts;
            for (const auto& [c, wt] : sp.activity_mix) wts.push_back(wt);
            double tot = 0.0;
            for (double v : wts) tot += v;
            if (tot <= 0.0) throw ArgumentError("synthetic: activity weights sum to zero");
            for (double& v : wts) v /= tot;
            const auto counts = detail::allocate_counts(m, wts);
            std::vector<std::int32_t> menu;
            for (std::size_t t = 0; t < counts.size(); ++t)
                menu.insert(menu.end(), static_cast<std::size_t>(counts[t]),
                            sp.activity_mix[t].first);
            std::shuffle(menu.begin(), menu.end(), rng);
            n_ratings = std::move(menu);
        }
        std::vector<std::int32_t> notes_perm(static_cast<std::size_t>(j));
        std::iota(notes_perm.begin(), notes_perm.end(), 0);
        for (std::int32_t i = 0; i < m; ++i) {
            const auto ni = static_cast<std::size_t>(n_ratings[static_cast<std::size_t>(i)]);
            // partial Fisher-Yates: first ni entries become this rater's notes
            for (std::size_t t = 0; t < ni; ++t) {
                std::uniform_int_distribution<std::size_t> pick(t, notes_perm.size() - 1);
                std::swap(notes_perm[t], notes_perm[pick(rng)]);
            }
            notes_of[static_cast<std::size_t>(i)].assign(notes_perm.begin(),
                                                         notes_perm.begin() + ni);
        }
    }

    std::vector<std::int32_t> rater_col, note_col;
    std::vector<double> value_col;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::int32_t i = 0; i < m; ++i) {
        const double sigma_i = w.sigma[static_cast<std::size_t>(i)];
        std::normal_distribution<double> eps(0.0, std::max(sigma_i, 1e-300));
        const RaterType type = w.rater_type[static_cast<std::size_t>(i)];
        for (const std::int32_t jj : notes_of[static_cast<std::size_t>(i)]) {
            double v = 0.0;
            switch (type) {
                case RaterType::good: {
                    const double signal = w.truth.predict_unchecked(i, jj) + eps(rng);
                    v = sp.binary ? (signal > sp.threshold ? 1.0 : 0.0)
                                  : std::clamp(signal, 0.0, 1.0);
                    break;
                }
                case RaterType::partisan:
                    v = w.truth.ideology_term(i, jj) > 0.0 ? 1.0 : 0.0;
                    break;
                case RaterType::random_voter:
                    v = unit(rng) < 0.5 ? 1.0 : 0.0;
                    break;
                case RaterType::always_helpful:
                    v = 1.0;
                    break;
                case RaterType::always_not:
                    v = 0.0;
                    break;
            }
            rater_col.push_back(i);
            note_col.push_back(jj);
            value_col.push_back(v);
        }
    }
    w.dataset = make_dataset_dense(m, j, std::move(rater_col), std::move(note_col),
                                   std::move(value_col), {},
                                   pattern ? pattern->rater_ids : std::vector<std::string>{},
                                   pattern ? pattern->note_ids : std::vector<std::string>{});
    return w;
}

struct EfficiencyRow {
    std::int32_t note = 0;
    std::int64_t pool_size = 0;
    double ratio_empirical = 0.0;    // Var(uniform) / Var(rho-weighted)
    double ratio_theoretical = 0.0;  // 1 + Var(rho*) / mean(rho*)^2
    double mean_weighted = 0.0;      // Monte-Carlo means, for unbiasedness checks
    double mean_uniform = 0.0;
    double se_weighted = 0.0;
    double se_uniform = 0.0;
    double beta_true = 0.0;
};

struct OracleEfficiencyResult {
    std::vector<EfficiencyRow> rows;
    std::int64_t skipped_notes = 0;  // all-zero rho pools
};

// Monte-Carlo check of the oracle-efficiency prediction: redraw noise for a
// note's rater pool, estimate beta by the rho-weighted and the uniform
// unbiased estimators, and compare their variance ratio to the theoretical
// value. Requires a continuous-mode world so the reduced model is exact.
inline OracleEfficiencyResult oracle_efficiency_check(const SyntheticWorld& world,
                                                      std::int32_t note_sample, std::int64_t mc_reps,
                                                      std::uint64_t seed = 0) {
    if (mc_reps < 2) throw ArgumentError("oracle_efficiency_check: mc_reps < 2");
    const RatingDataset& ds = world.dataset;
    auto rng = make_rng(derive_seed(seed, 0x0e));
    std::vector<std::int32_t> notes(static_cast<std::size_t>(ds.n_notes));
    std::iota(notes.begin(), notes.end(), 0);
    std::shuffle(notes.begin(), notes.end(), rng);
    if (note_sample < static_cast<std::int32_t>(notes.size()))
        notes.resize(static_cast<std::size_t>(note_sample));
    OracleEfficiencyResult res;
    for (std::size_t t = 0; t < notes.size(); ++t) {
        const std::int32_t j = notes[t];
        std::vector<std::int32_t> pool;
        for (std::int64_t q = ds.note_ptr[j]; q < ds.note_ptr[j + 1]; ++q)
            pool.push_back(ds.rater[ds.note_rows[q]]);
        double rho_sq = 0.0, rho_sum = 0.0;
        for (std::int32_t i : pool) {
            rho_sq += world.truth.rho[static_cast<std::size_t>(i)] *
                      world.truth.rho[static_cast<std::size_t>(i)];
            rho_sum += world.truth.rho[static_cast<std::size_t>(i)];
        }
        if (rho_sq <= 0.0 || pool.empty()) {
            ++res.skipped_notes;
            continue;
        }
        const double n = static_cast<double>(pool.size());
        const double rho_bar = rho_sum / n;
        EfficiencyRow row;
        row.note = j;
        row.pool_size = static_cast<std::int64_t>(pool.size());
        row.beta_true = world.truth.beta[static_cast<std::size_t>(j)];
        row.ratio_theoretical = (rho_sq / n) / (rho_bar * rho_bar);
        auto mc_rng = make_rng(derive_seed(seed, 0x1000 + static_cast<std::uint64_t>(j)));
        double sw = 0.0, sw2 = 0.0, su = 0.0, su2 = 0.0;
        for (std::int64_t rep = 0; rep < mc_reps; ++rep) {
            double dw = 0.0, du = 0.0;
            for (std::int32_t i : pool) {
                const double rho = world.truth.rho[static_cast<std::size_t>(i)];
                std::normal_distribution<double> eps(0.0, world.sigma[static_cast<std::size_t>(i)]);
                const double d = rho * row.beta_true + eps(mc_rng);
                dw += rho * d;
                du += d;
            }
            const double est_w = dw / rho_sq;
            const double est_u = du / (n * rho_bar);
            sw += est_w;
            sw2 += est_w * est_w;
            su += est_u;
            su2 += est_u * est_u;
        }
        const double reps = static_cast<double>(mc_reps);
        const double var_w = (sw2 - sw * sw / reps) / (reps - 1.0);
        const double var_u = (su2 - su * su / reps) / (reps - 1.0);
        row.mean_weighted = sw / reps;
        row.mean_uniform = su / reps;
        row.se_weighted = std::sqrt(var_w / reps);
        row.se_uniform = std::sqrt(var_u / reps);
        row.ratio_empirical = var_u / var_w;
        res.rows.push_back(row);
    }
    return res;
}

// Write the truth sidecar (latents, types, noise) for evaluation joins.
inline void save_truth_sidecar(const SyntheticWorld& w, const std::filesystem::path& rater_csv,
                               const std::filesystem::path& note_csv) {
    std::ofstream rout(rater_csv);
    if (!rout) throw IoError("cannot write " + rater_csv.string());
    rout.precision(17);
    rout << "rater_id,type,rho_star,alpha_star,sigma";
    for (std::int32_t l = 0; l < w.truth.k; ++l) rout << ",gamma_star_" << l;
    rout << "\n";
    for (std::int32_t i = 0; i < w.truth.n_raters; ++i) {
        rout << w.dataset.rater_ids[static_cast<std::size_t>(i)] << ','
             << to_string(w.rater_type[static_cast<std::size_t>(i)]) << ','
             << w.truth.rho[static_cast<std::size_t>(i)] << ','
             << w.truth.alpha[static_cast<std::size_t>(i)] << ','
             << w.sigma[static_cast<std::size_t>(i)];
        for (std::int32_t l = 0; l < w.truth.k; ++l)
            rout << ',' << w.truth.gamma[static_cast<std::size_t>(i) * w.truth.k + l];
        rout << "\n";
    }
    std::ofstream nout(note_csv);
    if (!nout) throw IoError("cannot write " + note_csv.string());
    nout.precision(17);
    nout << "note_id,beta_star";
    for (std::int32_t l = 0; l < w.truth.k; ++l) nout << ",delta_star_" << l;
    nout << "\n";
    for (std::int32_t j = 0; j < w.truth.n_notes; ++j) {
        nout << w.dataset.note_ids[static_cast<std::size_t>(j)] << ','
             << w.truth.beta[static_cast<std::size_t>(j)];
        for (std::int32_t l = 0; l < w.truth.k; ++l)
            nout << ',' << w.truth.delta[static_cast<std::size_t>(j) * w.truth.k + l];
        nout << "\n";
    }
}

}  // namespace qsmf
