#include <catch2/catch_amalgamated.hpp>

#include "qsmf/evaluation.hpp"
#include "test_util.hpp"

using namespace qsmf;
using Catch::Approx;

TEST_CASE("mse_z on hand cases", "[evaluation]") {
    std::vector<double> x{0.1, 0.5, 0.9, 0.3};
    CHECK(mse_z(x, x) == Approx(0.0).margin(1e-15));
    std::vector<double> neg(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
    CHECK(mse_z(neg, x) == Approx(4.0).margin(1e-12));
    CHECK_THROWS_AS(mse_z(std::vector<double>{1, 1, 1}, x), ArgumentError);
    CHECK_THROWS_AS(mse_z(std::vector<double>{1, 1, 1, 1}, x), UndefinedMetricError);
}

TEST_CASE("mse_z is invariant to positive affine maps", "[evaluation]") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> x(50), y(50);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = u(rng);
        y[i] = u(rng);
    }
    const double base = mse_z(x, y);
    std::vector<double> ax(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) ax[i] = 3.7 * x[i] + 11.0;
    CHECK(std::abs(mse_z(ax, y) - base) <= 1e-10);
}

TEST_CASE("ratings_saved on constructed curves", "[evaluation]") {
    std::vector<std::pair<int, double>> bl, qs_same, qs_double;
    for (int k : {10, 20, 40, 80, 160}) {
        bl.emplace_back(k, 1.0 / k);
        qs_same.emplace_back(k, 1.0 / k);
        qs_double.emplace_back(k, 1.0 / (2.0 * k));  // as good as baseline at 2k
    }
    // identical curves: exactly zero
    for (int k : {20, 40, 80, 160}) {
        const auto s = ratings_saved(bl, qs_same, k);
        REQUIRE(s.has_value());
        CHECK(*s == 0.0);
    }
    // half-sample equivalence: 50% saved
    for (int k : {40, 80, 160}) {
        const auto s = ratings_saved(bl, qs_double, k);
        REQUIRE(s.has_value());
        CHECK(*s == Approx(50.0).margin(1e-9));
    }
    // baseline error at the smallest k exceeds the whole QS range: unavailable
    CHECK_FALSE(ratings_saved(bl, qs_double, 10).has_value());
    CHECK_THROWS_AS(ratings_saved(bl, qs_double, 15), ArgumentError);
}

TEST_CASE("eval_oos on a noiseless homogeneous world reaches near-zero error", "[evaluation]") {
    SyntheticSpec spec;
    spec.n_raters = 80;
    spec.n_notes = 50;
    spec.ratings_per_rater = 20;
    spec.binary = false;
    spec.noise_range = {0.0, 0.0};
    spec.mu = 0.5;
    spec.sd_alpha = 0.05;
    spec.sd_beta = 0.1;
    spec.sd_gamma = 0.1;
    spec.sd_delta = 0.1;
    spec.seed = 3;
    const auto world = generate(spec);
    Hyperparams h;
    h.epoch_ceiling = 800;
    h.rounds = 2;
    h.lambda_alpha = h.lambda_beta = h.lambda_gamma = h.lambda_delta = h.lambda_rho = 0.002;
    h.seed = 4;
    const auto res = eval_oos(world.dataset, h, 0.2, 2);
    for (const auto& row : res.rows) {
        CHECK(row.mse_baseline < 0.01);
        CHECK(row.mse_qsmf < 0.01);
    }
}

TEST_CASE("eval_oos is deterministic per seed", "[evaluation]") {
    SyntheticSpec spec;
    spec.n_raters = 60;
    spec.n_notes = 40;
    spec.ratings_per_rater = 12;
    spec.seed = 5;
    const auto world = generate(spec);
    Hyperparams h;
    h.epoch_ceiling = 60;
    h.rounds = 1;
    h.seed = 9;
    const auto a = eval_oos(world.dataset, h, 0.25, 2);
    const auto b = eval_oos(world.dataset, h, 0.25, 2);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].mse_baseline == b.rows[i].mse_baseline);
        CHECK(a.rows[i].mse_qsmf == b.rows[i].mse_qsmf);
        CHECK(a.rows[i].n_test == b.rows[i].n_test);
    }
}

TEST_CASE("synthetic timestamps respect the horizon and note openings", "[evaluation]") {
    SyntheticSpec spec;
    spec.n_raters = 50;
    spec.n_notes = 30;
    spec.ratings_per_rater = 10;
    spec.seed = 6;
    const auto world = generate(spec);
    const std::int64_t horizon = 1000000;
    const auto ds = assign_synthetic_timestamps(world.dataset, horizon, 0.7, 11);
    REQUIRE(ds.has_timestamps());
    for (std::int64_t t = 0; t < ds.size(); ++t) {
        CHECK(ds.timestamp[static_cast<std::size_t>(t)] >= 0);
        CHECK(ds.timestamp[static_cast<std::size_t>(t)] < horizon);
    }
    // per-note spread stays within the offset span
    for (std::int32_t j = 0; j < ds.n_notes; ++j) {
        std::int64_t lo = horizon, hi = 0;
        for (std::int64_t q = ds.note_ptr[j]; q < ds.note_ptr[j + 1]; ++q) {
            const auto ts = ds.timestamp[static_cast<std::size_t>(ds.note_rows[q])];
            lo = std::min(lo, ts);
            hi = std::max(hi, ts);
        }
        CHECK(hi - lo <= static_cast<std::int64_t>(0.3 * horizon) + 1);
    }
}

TEST_CASE("bootstrap subsample of the full pool equals the full-pool solve", "[evaluation]") {
    // with k = pool size, every subsample is the whole pool, so the bootstrap
    // estimate must be constant and equal to the temporal estimate at full k
    SyntheticSpec spec;
    spec.n_raters = 40;
    spec.n_notes = 8;
    spec.ratings_per_rater = 6;
    spec.seed = 7;
    const auto world = generate(spec);
    const auto ds = assign_synthetic_timestamps(world.dataset, 100000, 0.5, 3);
    Hyperparams h;
    h.epoch_ceiling = 50;
    h.rounds = 1;
    h.seed = 8;
    RollingSpec rs;
    // single window covering everything after a small training prefix
    rs.cutoffs = {20000};
    rs.window_len = 80001;
    rs.min_eventual = 1;
    const std::int64_t pool_min = [&] {
        std::int64_t mn = std::numeric_limits<std::int64_t>::max();
        for (std::int32_t j = 0; j < ds.n_notes; ++j) mn = std::min(mn, ds.ratings_of_note(j));
        return mn;
    }();
    rs.k_list = {static_cast<int>(pool_min)};
    rs.n_boot = 5;
    rs.seed = 4;
    rs.mode = RollingSpec::Mode::bootstrap;
    // may skip the window when no note opens inside it; only assert agreement
    // when both modes produced values
    const auto boot = eval_rolling(ds, h, rs);
    rs.mode = RollingSpec::Mode::temporal;
    const auto temp = eval_rolling(ds, h, rs);
    if (!boot.qsmf.empty() && !temp.qsmf.empty()) {
        // note pools larger than k differ between modes; equality holds only
        // for notes whose pool is exactly k, so compare on the common window
        // rows where cohort sizes match
        for (const auto& brow : boot.window_rows)
            for (const auto& trow : temp.window_rows)
                if (brow.model == trow.model && brow.k == trow.k &&
                    brow.cohort_size == trow.cohort_size && brow.cohort_size == 1)
                    CHECK(brow.mse == Approx(trow.mse).margin(1e-9));
    }
    SUCCEED("rolling evaluation executed on both modes");
}

TEST_CASE("recover_synthetic reports the auc only when both classes exist", "[evaluation]") {
    SyntheticSpec spec;
    spec.n_raters = 60;
    spec.n_notes = 40;
    spec.ratings_per_rater = 12;
    spec.seed = 12;
    Hyperparams h;
    h.epoch_ceiling = 60;
    h.rounds = 1;
    h.seed = 13;
    const std::vector<double> fb{0.0, 0.3};
    const auto rows = recover_synthetic(spec, h, fb, 2);
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) {
        if (r.f_bad == 0.0)
            CHECK_FALSE(r.auc_rho.has_value());
        else
            CHECK(r.auc_rho.has_value());
        CHECK(r.delta_mse_z == Approx(r.mse_z_baseline - r.mse_z_qsmf));
    }
}

TEST_CASE("rolling spec validation", "[evaluation]") {
    RollingSpec rs;
    rs.cutoffs = {100, 50};
    rs.window_len = 10;
    Hyperparams h;
    const auto world = generate(SyntheticSpec{});
    const auto ds = assign_synthetic_timestamps(world.dataset, 1000, 0.5, 1);
    CHECK_THROWS_AS(eval_rolling(ds, h, rs), ArgumentError);
    rs.cutoffs = {50, 100};
    rs.k_list = {10, 10};
    CHECK_THROWS_AS(eval_rolling(ds, h, rs), ArgumentError);
}
