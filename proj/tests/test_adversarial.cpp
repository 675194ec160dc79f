#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

#include "qsmf/adversarial.hpp"
#include "test_util.hpp"

using namespace qsmf;
using Catch::Approx;

TEST_CASE("untargeted corruption with K=0 changes nothing", "[adversarial]") {
    const auto ds = testutil::random_dataset(20, 15, 0.4, 1);
    const auto ref = testutil::random_params(ModelKind::qsmf, 20, 15, 1, 2);
    UntargetedSpec spec;
    spec.n_corrupted = 0;
    spec.min_history = 0;
    const auto res = corrupt_untargeted(ds, ref, spec);
    CHECK(res.attacked.value == ds.value);
    for (auto a : res.attacker) CHECK(a == 0);
}

TEST_CASE("untargeted corruption assigns one rater per type at K=3", "[adversarial]") {
    const auto ds = testutil::random_dataset(30, 20, 0.5, 3);
    const auto ref = testutil::random_params(ModelKind::qsmf, 30, 20, 1, 4);
    UntargetedSpec spec;
    spec.n_corrupted = 3;
    spec.min_history = 1;
    spec.seed = 5;
    const auto res = corrupt_untargeted(ds, ref, spec);
    std::map<RaterType, int> counts;
    for (std::size_t i = 0; i < res.attacker.size(); ++i)
        if (res.attacker[i]) ++counts[res.assigned[i]];
    CHECK(counts[RaterType::partisan] == 1);
    CHECK(counts[RaterType::random_voter] == 1);
    CHECK(counts[RaterType::always_helpful] == 1);
}

TEST_CASE("untargeted corruption rewrites only sampled raters' rows", "[adversarial]") {
    const auto ds = testutil::random_dataset(25, 18, 0.4, 6);
    const auto ref = testutil::random_params(ModelKind::qsmf, 25, 18, 1, 7);
    UntargetedSpec spec;
    spec.n_corrupted = 8;
    spec.min_history = 1;
    spec.seed = 9;
    const auto res = corrupt_untargeted(ds, ref, spec);
    CHECK(res.attacked.size() == ds.size());  // triple count unchanged
    for (std::int64_t t = 0; t < ds.size(); ++t) {
        if (!res.attacker[static_cast<std::size_t>(ds.rater[t])])
            CHECK(res.attacked.value[t] == ds.value[t]);
        else
            CHECK((res.attacked.value[t] == 0.0 || res.attacked.value[t] == 1.0));
    }
    // partisan rewrite follows the reference ideology sign
    for (std::size_t i = 0; i < res.attacker.size(); ++i) {
        if (!res.attacker[i] || res.assigned[i] != RaterType::partisan) continue;
        const auto ri = static_cast<std::int32_t>(i);
        for (std::int64_t q = ds.rater_ptr[ri]; q < ds.rater_ptr[ri + 1]; ++q) {
            const auto row = ds.rater_rows[q];
            CHECK(res.attacked.value[row] ==
                  (ref.ideology_term(ri, ds.note[row]) > 0.0 ? 1.0 : 0.0));
        }
    }
}

TEST_CASE("untargeted corruption rejects oversized K", "[adversarial]") {
    const auto ds = testutil::random_dataset(10, 8, 0.5, 10);
    const auto ref = testutil::random_params(ModelKind::qsmf, 10, 8, 1, 11);
    UntargetedSpec spec;
    spec.n_corrupted = 11;
    spec.min_history = 0;
    CHECK_THROWS_AS(corrupt_untargeted(ds, ref, spec), ArgumentError);
}

namespace {

// Forced pools: exactly 2 attackers and 2 eligible targets per ideology sign,
// with one pre-existing attacker-target pair on each side, so either coin flip
// sees the same counts. Rater history lives on private notes that stay below
// target_min_ratings and can never be sampled as targets.
struct CoordinatedFixture {
    RatingDataset ds;
    ModelParams ref;

    CoordinatedFixture() {
        // raters 0,1: gamma +0.5; raters 2,3: gamma -0.5; raters 4,5 neutral
        // notes 0,1: delta -0.6; notes 2,3: delta +0.6; notes 4..19 private
        std::vector<std::int32_t> r, n;
        std::vector<double> v;
        auto add = [&](std::int32_t i, std::int32_t j, double val) {
            r.push_back(i);
            n.push_back(j);
            v.push_back(val);
        };
        std::int32_t next_private = 4;
        for (std::int32_t i = 0; i < 4; ++i)
            for (int t = 0; t < 4; ++t) add(i, next_private++, 0.5);
        for (std::int32_t j = 0; j < 4; ++j) {
            add(4, j, 1.0);  // filler raters give each target note history
            add(5, j, 1.0);
        }
        add(0, 0, 1.0);  // pre-existing pair: +sign attacker on -sign note
        add(2, 2, 1.0);  // pre-existing pair: -sign attacker on +sign note
        ds = make_dataset_dense(6, 20, r, n, v);
        ref = ModelParams::zeros(ModelKind::qsmf, 6, 20, 1);
        ref.gamma = {0.5, 0.5, -0.5, -0.5, 0.0, 0.0};
        ref.delta.assign(20, 0.0);
        ref.delta[0] = ref.delta[1] = -0.6;
        ref.delta[2] = ref.delta[3] = 0.6;
        ref.beta.assign(20, 0.0);
        ref.beta[0] = ref.beta[2] = 0.5;
        ref.beta[1] = ref.beta[3] = 0.4;
    }
};

}  // namespace

TEST_CASE("coordinated attack with zero group size is a no-op", "[adversarial]") {
    CoordinatedFixture f;
    CoordinatedSpec spec;
    spec.n_groups = 5;
    spec.per_group = 0;
    spec.attacker_min_history = 2;
    spec.target_min_ratings = 2;
    const auto res = attack_coordinated(f.ds, f.ref, spec);
    CHECK(res.injections == 0);
    CHECK(res.overwrites == 0);
    CHECK(res.targets.empty());
    CHECK(res.attacked.size() == f.ds.size());
}

TEST_CASE("coordinated attack counts injections and overwrites", "[adversarial]") {
    CoordinatedFixture f;
    CoordinatedSpec spec;
    spec.n_groups = 1;
    spec.per_group = 2;
    spec.attacker_min_history = 2;
    spec.target_min_ratings = 2;
    spec.target_quantile = 0.0;  // whole opposite-sign class is eligible
    spec.attack_value = 0.0;
    spec.seed = 12;
    const auto res = attack_coordinated(f.ds, f.ref, spec);
    // 2 attackers x 2 targets with exactly one pre-existing pair
    CHECK(res.injections == 3);
    CHECK(res.overwrites == 1);
    CHECK(res.targets.size() == 2);
    CHECK(res.n_attackers == 2);
    CHECK(res.attacked.size() == f.ds.size() + res.injections);
    // attacked pairs all carry the attack value
    for (std::int64_t t = 0; t < res.attacked.size(); ++t) {
        const bool is_attacker = res.attacked.rater[t] <= 3;
        const bool is_target =
            std::find(res.targets.begin(), res.targets.end(), res.attacked.note[t]) !=
            res.targets.end();
        if (is_attacker && is_target) {
            // only pairs from the attacking sign class were set
            const double g = f.ref.gamma[static_cast<std::size_t>(res.attacked.rater[t])];
            const double d = f.ref.delta[static_cast<std::size_t>(res.attacked.note[t])];
            if (g * d < 0.0) CHECK(res.attacked.value[t] == 0.0);
        }
    }
    // invariant: injections + overwrites = deduplicated attacker x target pairs
    CHECK(res.injections + res.overwrites == 4);
}

TEST_CASE("coordinated attack skips infeasible groups", "[adversarial]") {
    CoordinatedFixture f;
    CoordinatedSpec spec;
    spec.n_groups = 4;
    spec.per_group = 50;  // more than any pool holds
    spec.attacker_min_history = 2;
    spec.target_min_ratings = 2;
    const auto res = attack_coordinated(f.ds, f.ref, spec);
    CHECK(res.groups_skipped == 4);
    CHECK(res.injections == 0);
}

TEST_CASE("displacement is zero for identical fits and algebraic for sign flips",
          "[adversarial]") {
    auto clean = testutil::random_params(ModelKind::qsmf, 4, 12, 1, 21);
    std::vector<std::int32_t> targets{1, 4, 7};
    CHECK(displacement(clean, clean, targets) == Approx(0.0).margin(1e-15));

    auto flipped = clean;
    for (auto& b : flipped.beta) b = -b;
    const auto zc = zscore(clean.beta);
    double expect = 0.0;
    for (auto j : targets) expect += 4.0 * zc[static_cast<std::size_t>(j)] * zc[static_cast<std::size_t>(j)];
    expect /= static_cast<double>(targets.size());
    CHECK(displacement(clean, flipped, targets) == Approx(expect).margin(1e-10));

    CHECK_THROWS_AS(displacement(clean, flipped, std::vector<std::int32_t>{}),
                    UndefinedMetricError);
}

TEST_CASE("protection percentages", "[adversarial]") {
    CHECK(protection(0.25, 0.25) == Approx(0.0));
    CHECK(protection(0.25, 0.0) == Approx(100.0));
    CHECK(protection(0.146, 0.104) == Approx(28.767).margin(0.01));
    CHECK_THROWS_AS(protection(0.0, 0.1), UndefinedMetricError);
}

TEST_CASE("auc on hand cases", "[adversarial]") {
    // perfectly separated
    CHECK(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1},
              std::vector<std::uint8_t>{1, 1, 0, 0}) == Approx(1.0));
    // all ties
    CHECK(auc(std::vector<double>{0.5, 0.5, 0.5, 0.5},
              std::vector<std::uint8_t>{1, 1, 0, 0}) == Approx(0.5));
    // enumerated 4-pair case: honest raters (label 1) hold the high scores
    CHECK(auc(std::vector<double>{0.2, 0.4, 0.9, 0.8},
              std::vector<std::uint8_t>{0, 0, 1, 1}) == Approx(1.0));
    // attacker-as-positive flips the direction
    CHECK(auc(std::vector<double>{0.2, 0.4, 0.9, 0.8},
              std::vector<std::uint8_t>{1, 1, 0, 0}) == Approx(0.0));
    CHECK_THROWS_AS(auc(std::vector<double>{1.0, 2.0}, std::vector<std::uint8_t>{1, 1}),
                    UndefinedMetricError);
}

TEST_CASE("auc equals the brute-force pair count", "[adversarial]") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> s(40);
    std::vector<std::uint8_t> l(40);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = std::round(u(rng) * 10.0) / 10.0;  // force ties
        l[i] = u(rng) < 0.4 ? 1 : 0;
    }
    double pairs = 0.0, wins = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (!(l[i] == 1 && l[j] == 0)) continue;
            pairs += 1.0;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    CHECK(auc(s, l) == Approx(wins / pairs).margin(1e-12));
}
