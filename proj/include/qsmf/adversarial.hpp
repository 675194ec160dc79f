#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "qsmf/dataset.hpp"
#include "qsmf/model.hpp"
#include "qsmf/stats.hpp"
#include "qsmf/synthetic.hpp"

namespace qsmf {

struct UntargetedSpec {
    std::int64_t n_corrupted = 0;     // K
    std::int64_t min_history = 50;    // eligibility: existing rating count
    // partisan, random, lazy always-helpful
    std::array<double, 3> split{1.0 / 3, 1.0 / 3, 1.0 / 3};
    std::uint64_t seed = 0;
};

struct UntargetedResult {
    RatingDataset attacked;
    std::vector<std::uint8_t> attacker;  // per rater
    std::vector<RaterType> assigned;     // good for untouched raters
    std::int64_t n_eligible = 0;
};

// Rewrite K sampled raters' existing ratings in place by behavioral type.
// Partisan rewriting follows the ideology alignment of the reference
// parameters (a clean fit on real data, the generating truth on synthetic).
inline UntargetedResult corrupt_untargeted(const RatingDataset& ds, const ModelParams& ref,
                                           const UntargetedSpec& spec) {
    ref.check_sized_to(ds);
    double wsum = 0.0;
    for (double w : spec.split) {
        if (w < 0.0) throw ArgumentError("corrupt_untargeted: negative split weight");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9)
        throw ArgumentError("corrupt_untargeted: split must sum to 1");
    std::vector<std::int32_t> eligible;
    for (std::int32_t i = 0; i < ds.n_raters; ++i)
        if (ds.ratings_of_rater(i) >= spec.min_history) eligible.push_back(i);
    if (spec.n_corrupted < 0 || spec.n_corrupted > static_cast<std::int64_t>(eligible.size()))
        throw ArgumentError("corrupt_untargeted: K exceeds eligible pool (" +
                            std::to_string(eligible.size()) + ")");
    auto rng = make_rng(derive_seed(spec.seed, 0xa77));
    std::shuffle(eligible.begin(), eligible.end(), rng);
    eligible.resize(static_cast<std::size_t>(spec.n_corrupted));

    UntargetedResult res;
    res.n_eligible = static_cast<std::int64_t>(eligible.size());
    res.attacked = ds;
    res.attacker.assign(static_cast<std::size_t>(ds.n_raters), 0);
    res.assigned.assign(static_cast<std::size_t>(ds.n_raters), RaterType::good);
    const auto counts = detail::allocate_counts(spec.n_corrupted, spec.split);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::size_t pos = 0;
    const std::array<RaterType, 3> types{RaterType::partisan, RaterType::random_voter,
                                         RaterType::always_helpful};
    for (std::size_t t = 0; t < types.size(); ++t) {
        for (std::int64_t c = 0; c < counts[t]; ++c, ++pos) {
            const std::int32_t i = eligible[pos];
            res.attacker[static_cast<std::size_t>(i)] = 1;
            res.assigned[static_cast<std::size_t>(i)] = types[t];
            for (std::int64_t q = ds.rater_ptr[i]; q < ds.rater_ptr[i + 1]; ++q) {
                const std::int32_t row = ds.rater_rows[q];
                double v = 0.0;
                switch (types[t]) {
                    case RaterType::partisan:
                        v = ref.ideology_term(i, ds.note[row]) > 0.0 ? 1.0 : 0.0;
                        break;
                    case RaterType::random_voter:
                        v = unit(rng) < 0.5 ? 1.0 : 0.0;
                        break;
                    default:
                        v = 1.0;
                        break;
                }
                res.attacked.value[row] = v;
            }
        }
    }
    return res;
}

struct CoordinatedSpec {
    int n_groups = 100;
    int per_group = 0;                    // K_pg: attackers and targets per group
    std::int64_t attacker_min_history = 50;
    double attacker_min_abs_gamma = 0.3;
    std::int64_t target_min_ratings = 200;
    double target_quantile = 0.75;        // targets come from above this quality quantile
    double attack_value = 0.0;
    std::uint64_t seed = 0;
};

struct CoordinatedResult {
    RatingDataset attacked;
    std::vector<std::int32_t> targets;  // deduplicated target notes
    std::int64_t injections = 0;        // newly inserted pairs
    std::int64_t overwrites = 0;        // pre-existing pairs set to attack_value
    std::int64_t n_attackers = 0;       // unique attackers across groups
    int groups_skipped = 0;
};

// Coordinated suppression: each group picks an ideology sign, samples aligned
// attackers, and sets their ratings on opposite-sign, high-quality notes to
// attack_value, injecting missing pairs. All eligibility is computed from the
// clean reference fit; first ideology dimension defines the sign classes.
inline CoordinatedResult attack_coordinated(const RatingDataset& ds, const ModelParams& p_ref,
                                            const CoordinatedSpec& spec) {
    p_ref.check_sized_to(ds);
    if (spec.per_group < 0) throw ArgumentError("attack_coordinated: negative per_group");
    auto gamma1 = [&](std::int32_t i) { return p_ref.gamma[static_cast<std::size_t>(i) * p_ref.k]; };
    auto delta1 = [&](std::int32_t j) { return p_ref.delta[static_cast<std::size_t>(j) * p_ref.k]; };

    std::array<std::vector<std::int32_t>, 2> attacker_pool;  // by sign of gamma
    for (std::int32_t i = 0; i < ds.n_raters; ++i) {
        if (ds.ratings_of_rater(i) < spec.attacker_min_history) continue;
        if (std::abs(gamma1(i)) <= spec.attacker_min_abs_gamma) continue;
        attacker_pool[gamma1(i) > 0.0 ? 0 : 1].push_back(i);
    }
    std::array<std::vector<std::int32_t>, 2> target_pool;  // by sign of delta
    for (int sign = 0; sign < 2; ++sign) {
        std::vector<std::int32_t> cls;
        std::vector<double> quality;
        for (std::int32_t j = 0; j < ds.n_notes; ++j) {
            if (ds.ratings_of_note(j) < spec.target_min_ratings) continue;
            const bool pos = delta1(j) > 0.0;
            if (pos != (sign == 0)) continue;
            cls.push_back(j);
            quality.push_back(p_ref.beta[static_cast<std::size_t>(j)]);
        }
        if (cls.empty()) continue;
        const double cut = percentile(quality, 100.0 * spec.target_quantile);
        for (std::size_t t = 0; t < cls.size(); ++t)
            if (quality[t] >= cut) target_pool[sign].push_back(cls[t]);
    }

    // pair -> attack rows, deduplicated across groups
    std::unordered_map<std::int64_t, double> pairs;
    std::set<std::int32_t> attacker_set;
    std::set<std::int32_t> target_set;
    CoordinatedResult res;
    auto rng = make_rng(derive_seed(spec.seed, 0xc0));
    for (int g = 0; g < spec.n_groups; ++g) {
        const int sign = std::uniform_int_distribution<int>(0, 1)(rng);
        auto att = attacker_pool[static_cast<std::size_t>(sign)];
        auto tgt = target_pool[static_cast<std::size_t>(1 - sign)];
        if (static_cast<int>(att.size()) < spec.per_group ||
            static_cast<int>(tgt.size()) < spec.per_group) {
            ++res.groups_skipped;
            continue;
        }
        std::shuffle(att.begin(), att.end(), rng);
        std::shuffle(tgt.begin(), tgt.end(), rng);
        for (int a = 0; a < spec.per_group; ++a)
            for (int t = 0; t < spec.per_group; ++t) {
                const std::int64_t key = (static_cast<std::int64_t>(att[a]) << 32) |
                                         static_cast<std::uint32_t>(tgt[t]);
                pairs[key] = spec.attack_value;
                attacker_set.insert(att[a]);
                target_set.insert(tgt[t]);
            }
    }

    res.attacked = ds;
    // overwrite existing pairs, then append the rest as new triples
    for (std::int64_t row = 0; row < ds.size(); ++row) {
        const std::int64_t key = (static_cast<std::int64_t>(ds.rater[row]) << 32) |
                                 static_cast<std::uint32_t>(ds.note[row]);
        auto it = pairs.find(key);
        if (it != pairs.end()) {
            res.attacked.value[row] = it->second;
            ++res.overwrites;
            pairs.erase(it);
        }
    }
    std::vector<std::int64_t> remaining;
    remaining.reserve(pairs.size());
    for (const auto& [key, v] : pairs) remaining.push_back(key);
    std::sort(remaining.begin(), remaining.end());
    const std::int64_t ts_fill =
        ds.has_timestamps() ? *std::max_element(ds.timestamp.begin(), ds.timestamp.end()) : 0;
    for (std::int64_t key : remaining) {
        res.attacked.rater.push_back(static_cast<std::int32_t>(key >> 32));
        res.attacked.note.push_back(static_cast<std::int32_t>(key & 0xffffffff));
        res.attacked.value.push_back(spec.attack_value);
        if (ds.has_timestamps()) res.attacked.timestamp.push_back(ts_fill);
        ++res.injections;
    }
    res.attacked.build_index();
    res.targets.assign(target_set.begin(), target_set.end());
    res.n_attackers = static_cast<std::int64_t>(attacker_set.size());
    return res;
}

// Mean squared change of z-scored quality on the target notes. Each model's
// full note vector is z-scored before restriction so shifts of the whole
// distribution register too.
inline double displacement(const ModelParams& clean, const ModelParams& attacked,
                           std::span<const std::int32_t> targets) {
    if (clean.n_notes != attacked.n_notes)
        throw ArgumentError("displacement: models cover different note sets");
    if (targets.empty()) throw UndefinedMetricError("displacement: empty target set");
    const auto zc = zscore(clean.beta);
    const auto za = zscore(attacked.beta);
    double s = 0.0;
    for (std::int32_t j : targets) {
        if (j < 0 || j >= clean.n_notes) throw ArgumentError("displacement: target out of range");
        const double d = za[static_cast<std::size_t>(j)] - zc[static_cast<std::size_t>(j)];
        s += d * d;
    }
    return s / static_cast<double>(targets.size());
}

// Percent reduction of QS-MF displacement relative to the baseline's.
inline double protection(double disp_baseline, double disp_qs) {
    if (disp_baseline <= 0.0)
        throw UndefinedMetricError("protection: baseline displacement is zero");
    return (1.0 - disp_qs / disp_baseline) * 100.0;
}

// Mann-Whitney AUC: P(score | label=1 > score | label=0), ties counted half.
inline double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw ArgumentError("auc: size mismatch");
    const auto ranks = average_ranks(scores);
    double rank_sum_pos = 0.0;
    std::int64_t n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i]) {
            rank_sum_pos += ranks[i];
            ++n_pos;
        } else {
            ++n_neg;
        }
    }
    if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("auc: single-class input");
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace qsmf
