#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qsmf/adversarial.hpp"
#include "qsmf/dataset.hpp"
#include "qsmf/stats.hpp"
#include "qsmf/synthetic.hpp"
#include "qsmf/trainer.hpp"

namespace qsmf {

// Mean squared difference after z-scoring both vectors over the evaluated set.
// Only relative values matter downstream, so scale and location are removed
// before comparison.
inline double mse_z(std::span<const double> estimates, std::span<const double> reference) {
    if (estimates.size() != reference.size()) throw ArgumentError("mse_z: size mismatch");
    const auto ze = zscore(estimates);  // throws UndefinedMetricError on zero variance
    const auto zr = zscore(reference);
    double s = 0.0;
    for (std::size_t i = 0; i < ze.size(); ++i) s += (ze[i] - zr[i]) * (ze[i] - zr[i]);
    return s / static_cast<double>(ze.size());
}

// --- out-of-sample prediction -------------------------------------------------

struct OosRow {
    int seed_index = 0;
    double mse_baseline = 0.0;
    double mse_qsmf = 0.0;
    double pct_reduction = 0.0;
    std::int64_t n_test = 0;
};

struct OosResult {
    std::vector<OosRow> rows;
    double mean_baseline = 0.0, sd_baseline = 0.0;
    double mean_qsmf = 0.0, sd_qsmf = 0.0;
    double mean_reduction = 0.0, sd_reduction = 0.0;
    int qsmf_wins = 0;
};

// Held-out prediction under random masking: per seed, hold out a fraction of
// pairs (keeping only covered ones), fit both models on the rest, report raw
// test MSE.
inline OosResult eval_oos(const RatingDataset& ds, const Hyperparams& h, double fraction = 0.2,
                          int n_seeds = 5, int threads = 1) {
    if (n_seeds < 1) throw ArgumentError("eval_oos: n_seeds < 1");
    OosResult res;
    std::vector<double> mb, mq, mr;
    for (int s = 0; s < n_seeds; ++s) {
        SplitSpec spec;
        spec.kind = SplitSpec::Kind::holdout_fraction;
        spec.fraction = fraction;
        spec.seed = derive_seed(h.seed, 0x0051 + static_cast<std::uint64_t>(s));
        auto [train, test] = split(ds, spec);
        if (test.empty())
            throw InsufficientDataError("eval_oos: holdout coverage left an empty test set");
        Hyperparams hs = h;
        hs.seed = derive_seed(h.seed, 0x0F17 + static_cast<std::uint64_t>(s));
        FitOptions opts;
        opts.threads = threads;
        auto [pb, rb] = fit(train, hs, ModelKind::baseline, nullptr, opts);
        auto [pq, rq] = fit(train, hs, ModelKind::qsmf, nullptr, opts);
        auto test_mse = [&](const ModelParams& p) {
            double sum = 0.0;
            for (std::int64_t t = 0; t < test.size(); ++t) {
                const double e = test.value[t] - p.predict_unchecked(test.rater[t], test.note[t]);
                sum += e * e;
            }
            return sum / static_cast<double>(test.size());
        };
        OosRow row;
        row.seed_index = s;
        row.n_test = test.size();
        row.mse_baseline = test_mse(pb);
        row.mse_qsmf = test_mse(pq);
        row.pct_reduction = (1.0 - row.mse_qsmf / row.mse_baseline) * 100.0;
        if (row.mse_qsmf < row.mse_baseline) ++res.qsmf_wins;
        mb.push_back(row.mse_baseline);
        mq.push_back(row.mse_qsmf);
        mr.push_back(row.pct_reduction);
        res.rows.push_back(row);
    }
    res.mean_baseline = mean(mb);
    res.mean_qsmf = mean(mq);
    res.mean_reduction = mean(mr);
    if (n_seeds > 1) {
        res.sd_baseline = stddev_sample(mb);
        res.sd_qsmf = stddev_sample(mq);
        res.sd_reduction = stddev_sample(mr);
    }
    return res;
}

// --- rolling-window sample efficiency -----------------------------------------

struct RollingSpec {
    std::vector<std::int64_t> cutoffs;  // window starts, strictly increasing
    std::int64_t window_len = 0;
    std::vector<int> k_list{10, 20, 40, 80, 160};
    enum class Mode { temporal, bootstrap };
    Mode mode = Mode::bootstrap;
    int n_boot = 100;
    std::int64_t min_eventual = 200;
    std::uint64_t seed = 0;

    void validate() const {
        if (cutoffs.size() < 1) throw ArgumentError("rolling: no cutoffs");
        for (std::size_t i = 1; i < cutoffs.size(); ++i)
            if (cutoffs[i] <= cutoffs[i - 1])
                throw ArgumentError("rolling: cutoffs must be strictly increasing");
        if (window_len <= 0) throw ArgumentError("rolling: window_len must be positive");
        if (k_list.empty()) throw ArgumentError("rolling: empty k_list");
        for (std::size_t i = 1; i < k_list.size(); ++i)
            if (k_list[i] <= k_list[i - 1])
                throw ArgumentError("rolling: k_list must be strictly increasing");
        if (n_boot < 1) throw ArgumentError("rolling: n_boot < 1");
    }
};

struct RollingCell {
    int k = 0;
    double mean_mse = 0.0;
    double sd_mse = 0.0;
    int n_windows = 0;
};

struct RollingWindowRow {
    std::int64_t window_start = 0;
    std::string model;
    int k = 0;
    double mse = 0.0;
    std::int64_t cohort_size = 0;
};

struct EfficiencyCurve {
    std::vector<RollingCell> baseline;
    std::vector<RollingCell> qsmf;
    std::vector<std::pair<int, std::optional<double>>> ratings_saved_pct;  // per baseline k
    std::vector<RollingWindowRow> window_rows;
    int windows_skipped = 0;
    bool synthetic_timestamps = false;
};

// Interpolated percent of ratings QS-MF saves at the baseline's budget k_bl:
// find where the QS curve reaches the baseline's error level, interpolating
// log-linearly in (log k, log mse). Returns nothing when the level is outside
// the QS curve's range.
inline std::optional<double> ratings_saved(const std::vector<std::pair<int, double>>& curve_bl,
                                           const std::vector<std::pair<int, double>>& curve_qs,
                                           int k_bl) {
    if (curve_bl.size() < 2 || curve_qs.size() < 2)
        throw ArgumentError("ratings_saved: curves need at least 2 points");
    for (const auto& [k, v] : curve_bl)
        if (!(v > 0.0)) throw ArgumentError("ratings_saved: nonpositive error value");
    for (const auto& [k, v] : curve_qs)
        if (!(v > 0.0)) throw ArgumentError("ratings_saved: nonpositive error value");
    const auto it = std::find_if(curve_bl.begin(), curve_bl.end(),
                                 [&](const auto& kv) { return kv.first == k_bl; });
    if (it == curve_bl.end()) throw ArgumentError("ratings_saved: k_bl not on baseline curve");
    const double target = it->second;
    // exact hit first, so identical curves give exactly 0
    for (const auto& [k, v] : curve_qs)
        if (v == target)
            return (1.0 - static_cast<double>(k) / static_cast<double>(k_bl)) * 100.0;
    for (std::size_t s = 0; s + 1 < curve_qs.size(); ++s) {
        const auto [k_a, v_a] = curve_qs[s];
        const auto [k_b, v_b] = curve_qs[s + 1];
        const double hi = std::max(v_a, v_b), lo = std::min(v_a, v_b);
        if (target > hi || target < lo) continue;
        const double t = (std::log(target) - std::log(v_a)) / (std::log(v_b) - std::log(v_a));
        const double log_k = std::log(static_cast<double>(k_a)) +
                             t * (std::log(static_cast<double>(k_b)) - std::log(static_cast<double>(k_a)));
        const double k_eq = std::exp(log_k);
        return (1.0 - k_eq / static_cast<double>(k_bl)) * 100.0;
    }
    return std::nullopt;  // level not attained within the QS curve's range
}

// Copy of ds with synthetic timestamps: each note opens uniformly inside the
// first note_start_frac of the horizon and its ratings arrive at uniform
// offsets within the rest. Used when the input has no timestamps; flagged in
// the rolling report.
inline RatingDataset assign_synthetic_timestamps(const RatingDataset& ds, std::int64_t horizon_ms,
                                                 double note_start_frac, std::uint64_t seed) {
    if (horizon_ms <= 0) throw ArgumentError("assign_synthetic_timestamps: bad horizon");
    if (!(note_start_frac > 0.0 && note_start_frac < 1.0))
        throw ArgumentError("assign_synthetic_timestamps: note_start_frac outside (0,1)");
    auto rng = make_rng(derive_seed(seed, 0x7155));
    const auto start_span = static_cast<double>(horizon_ms) * note_start_frac;
    const auto offset_span = static_cast<double>(horizon_ms) - start_span;
    std::vector<double> note_start(static_cast<std::size_t>(ds.n_notes));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& s : note_start) s = unit(rng) * start_span;
    RatingDataset out = ds;
    out.timestamp.resize(static_cast<std::size_t>(ds.size()));
    for (std::int64_t t = 0; t < ds.size(); ++t) {
        const double off = unit(rng) * offset_span;
        out.timestamp[static_cast<std::size_t>(t)] = static_cast<std::int64_t>(
            note_start[static_cast<std::size_t>(ds.note[t])] + off);
    }
    return out;
}

namespace detail {

inline RatingDataset rows_before(const RatingDataset& ds, std::int64_t cutoff) {
    std::vector<std::int64_t> rows;
    for (std::int64_t t = 0; t < ds.size(); ++t)
        if (ds.timestamp[static_cast<std::size_t>(t)] < cutoff) rows.push_back(t);
    return subset_rows(ds, rows);
}

}  // namespace detail

// Rolling-window evaluation with frozen rater parameters. Per window: train
// both models on everything strictly before the window start; for notes first
// rated inside the window that eventually accumulate min_eventual ratings,
// re-solve the note block from the first k ratings (temporal) or n_boot
// subsamples of size k (bootstrap) under the frozen rater state; compare
// against the same model's estimate refit two window-lengths ahead.
inline EfficiencyCurve eval_rolling(const RatingDataset& ds, const Hyperparams& h,
                                    const RollingSpec& spec, int threads = 1) {
    spec.validate();
    if (!ds.has_timestamps()) throw ArgumentError("eval_rolling: dataset has no timestamps");

    // note arrival order and eventual counts over the full dataset
    const auto m_notes = static_cast<std::size_t>(ds.n_notes);
    std::vector<std::vector<std::int32_t>> note_rows_sorted(m_notes);
    for (std::int32_t j = 0; j < ds.n_notes; ++j) {
        auto& rows = note_rows_sorted[static_cast<std::size_t>(j)];
        rows.assign(ds.note_rows.begin() + ds.note_ptr[j], ds.note_rows.begin() + ds.note_ptr[j + 1]);
        std::stable_sort(rows.begin(), rows.end(), [&](std::int32_t a, std::int32_t b) {
            return ds.timestamp[static_cast<std::size_t>(a)] < ds.timestamp[static_cast<std::size_t>(b)];
        });
    }

    // fits are cached by time threshold, so regular cutoffs share the
    // pre-window and reference fits
    std::map<std::int64_t, std::pair<ModelParams, ModelParams>> fits;
    auto fit_at = [&](std::int64_t threshold) -> const std::pair<ModelParams, ModelParams>& {
        auto it = fits.find(threshold);
        if (it != fits.end()) return it->second;
        auto sub = detail::rows_before(ds, threshold);
        if (sub.empty()) throw InsufficientDataError("eval_rolling: no ratings before cutoff");
        Hyperparams hs = h;
        hs.seed = derive_seed(h.seed, static_cast<std::uint64_t>(threshold));
        FitOptions opts;
        opts.threads = threads;
        auto [pb, rb] = fit(sub, hs, ModelKind::baseline, nullptr, opts);
        auto [pq, rq] = fit(sub, hs, ModelKind::qsmf, nullptr, opts);
        return fits.emplace(threshold, std::make_pair(std::move(pb), std::move(pq))).first->second;
    };

    EfficiencyCurve out;
    // per (model, k): window-level mse list
    std::map<std::pair<int, int>, std::vector<double>> window_mse;  // (model 0/1, k)
    for (std::size_t w = 0; w < spec.cutoffs.size(); ++w) {
        const std::int64_t start = spec.cutoffs[w];
        const std::int64_t end = start + spec.window_len;
        const std::int64_t ref_time = start + 2 * spec.window_len;
        std::vector<std::int32_t> cohort;
        for (std::int32_t j = 0; j < ds.n_notes; ++j) {
            const auto& rows = note_rows_sorted[static_cast<std::size_t>(j)];
            if (rows.empty()) continue;
            if (static_cast<std::int64_t>(rows.size()) < spec.min_eventual) continue;
            const std::int64_t first = ds.timestamp[static_cast<std::size_t>(rows.front())];
            if (first >= start && first < end) cohort.push_back(j);
        }
        if (cohort.size() < 2) {
            ++out.windows_skipped;
            continue;
        }
        const auto& [pre_bl, pre_qs] = fit_at(start);
        const auto& [ref_bl, ref_qs] = fit_at(ref_time);
        for (int model = 0; model < 2; ++model) {
            const ModelParams& pre = model == 0 ? pre_bl : pre_qs;
            const ModelParams& ref = model == 0 ? ref_bl : ref_qs;
            for (int k : spec.k_list) {
                // notes with at least k ratings available
                std::vector<std::int32_t> usable;
                for (std::int32_t j : cohort)
                    if (static_cast<std::int64_t>(note_rows_sorted[static_cast<std::size_t>(j)].size()) >=
                        k)
                        usable.push_back(j);
                if (usable.size() < 2) continue;
                std::vector<double> gt;
                gt.reserve(usable.size());
                for (std::int32_t j : usable) gt.push_back(ref.beta[static_cast<std::size_t>(j)]);

                auto solve_rows = [&](std::span<const std::int32_t> rows) {
                    std::vector<double> rho(rows.size()), gam(rows.size() * pre.k),
                        y(rows.size());
                    for (std::size_t t = 0; t < rows.size(); ++t) {
                        const std::int32_t i = ds.rater[rows[t]];
                        rho[t] = pre.rho[static_cast<std::size_t>(i)];
                        for (std::int32_t l = 0; l < pre.k; ++l)
                            gam[t * static_cast<std::size_t>(pre.k) + static_cast<std::size_t>(l)] =
                                pre.gamma[static_cast<std::size_t>(i) * pre.k + l];
                        y[t] = ds.value[rows[t]] - pre.mu - pre.alpha[static_cast<std::size_t>(i)];
                    }
                    NoteBlock nb{rho, gam, y, pre.k};
                    return solve_note_block(nb, h.lambda_beta, h.lambda_delta).beta;
                };

                double window_value = 0.0;
                bool ok = true;
                if (spec.mode == RollingSpec::Mode::temporal) {
                    std::vector<double> est;
                    est.reserve(usable.size());
                    for (std::int32_t j : usable) {
                        const auto& rows = note_rows_sorted[static_cast<std::size_t>(j)];
                        est.push_back(solve_rows(std::span(rows.data(), static_cast<std::size_t>(k))));
                    }
                    try {
                        window_value = mse_z(est, gt);
                    } catch (const UndefinedMetricError&) {
                        ok = false;
                    }
                } else {
                    double acc = 0.0;
                    int good = 0;
                    for (int b = 0; b < spec.n_boot; ++b) {
                        auto rng = make_rng(derive_seed(
                            spec.seed, (static_cast<std::uint64_t>(w) << 32) ^
                                           (static_cast<std::uint64_t>(k) << 16) ^
                                           (static_cast<std::uint64_t>(model) << 8) ^
                                           static_cast<std::uint64_t>(b)));
                        std::vector<double> est;
                        est.reserve(usable.size());
                        for (std::int32_t j : usable) {
                            const auto& rows = note_rows_sorted[static_cast<std::size_t>(j)];
                            // subsample of size k without replacement
                            std::vector<std::int32_t> pickbuf(rows.begin(), rows.end());
                            for (int t = 0; t < k; ++t) {
                                std::uniform_int_distribution<std::size_t> pick(
                                    static_cast<std::size_t>(t), pickbuf.size() - 1);
                                std::swap(pickbuf[static_cast<std::size_t>(t)], pickbuf[pick(rng)]);
                            }
                            est.push_back(
                                solve_rows(std::span(pickbuf.data(), static_cast<std::size_t>(k))));
                        }
                        try {
                            acc += mse_z(est, gt);
                            ++good;
                        } catch (const UndefinedMetricError&) {
                        }
                    }
                    if (good == 0)
                        ok = false;
                    else
                        window_value = acc / good;
                }
                if (!ok) continue;
                window_mse[{model, k}].push_back(window_value);
                RollingWindowRow row;
                row.window_start = start;
                row.model = model == 0 ? "baseline" : "qsmf";
                row.k = k;
                row.mse = window_value;
                row.cohort_size = static_cast<std::int64_t>(usable.size());
                out.window_rows.push_back(std::move(row));
            }
        }
    }

    auto collect = [&](int model) {
        std::vector<RollingCell> cells;
        for (int k : spec.k_list) {
            auto it = window_mse.find({model, k});
            if (it == window_mse.end() || it->second.empty()) continue;
            RollingCell c;
            c.k = k;
            c.mean_mse = mean(it->second);
            c.sd_mse = it->second.size() > 1 ? stddev_sample(it->second) : 0.0;
            c.n_windows = static_cast<int>(it->second.size());
            cells.push_back(c);
        }
        return cells;
    };
    out.baseline = collect(0);
    out.qsmf = collect(1);

    std::vector<std::pair<int, double>> curve_bl, curve_qs;
    for (const auto& c : out.baseline) curve_bl.emplace_back(c.k, c.mean_mse);
    for (const auto& c : out.qsmf) curve_qs.emplace_back(c.k, c.mean_mse);
    if (curve_bl.size() >= 2 && curve_qs.size() >= 2) {
        for (const auto& [k, v] : curve_bl)
            out.ratings_saved_pct.emplace_back(k, ratings_saved(curve_bl, curve_qs, k));
    }
    return out;
}

// --- synthetic ground-truth recovery -------------------------------------------

struct RecoveryRow {
    double f_bad = 0.0;
    int seed_index = 0;
    double mse_z_baseline = 0.0;
    double mse_z_qsmf = 0.0;
    double delta_mse_z = 0.0;
    std::optional<double> auc_rho;  // absent when one class is empty
};

// Generate a world per (f_bad, seed), fit both models, and score recovery of
// the true note quality plus good/bad separation by fitted rho.
inline std::vector<RecoveryRow> recover_synthetic(const SyntheticSpec& base,
                                                  const Hyperparams& h,
                                                  std::span<const double> f_bad_list, int n_seeds,
                                                  int threads = 1) {
    if (n_seeds < 1) throw ArgumentError("recover_synthetic: n_seeds < 1");
    std::vector<RecoveryRow> rows;
    for (std::size_t fi = 0; fi < f_bad_list.size(); ++fi) {
        for (int s = 0; s < n_seeds; ++s) {
            SyntheticSpec spec = base;
            spec.f_bad = f_bad_list[fi];
            spec.seed = derive_seed(base.seed, (static_cast<std::uint64_t>(fi) << 16) ^
                                                   static_cast<std::uint64_t>(s));
            const auto world = generate(spec);
            Hyperparams hs = h;
            hs.seed = derive_seed(h.seed, (static_cast<std::uint64_t>(fi) << 20) ^
                                              static_cast<std::uint64_t>(s));
            FitOptions opts;
            opts.threads = threads;
            auto [pb, rb] = fit(world.dataset, hs, ModelKind::baseline, nullptr, opts);
            auto [pq, rq] = fit(world.dataset, hs, ModelKind::qsmf, nullptr, opts);
            RecoveryRow row;
            row.f_bad = f_bad_list[fi];
            row.seed_index = s;
            row.mse_z_baseline = mse_z(pb.beta, world.truth.beta);
            row.mse_z_qsmf = mse_z(pq.beta, world.truth.beta);
            row.delta_mse_z = row.mse_z_baseline - row.mse_z_qsmf;
            const auto good = world.good_mask();
            bool has_good = false, has_bad = false;
            for (auto g : good) (g ? has_good : has_bad) = true;
            if (has_good && has_bad) row.auc_rho = auc(pq.rho, good);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace qsmf
