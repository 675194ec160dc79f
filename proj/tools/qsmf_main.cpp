// Command-line front end: fit, predict, diagnose, synth, attack, eval.
// Every run writes its resolved config next to the outputs so it can be
// reproduced exactly.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "qsmf/adversarial.hpp"
#include "qsmf/dataset.hpp"
#include "qsmf/diagnostics.hpp"
#include "qsmf/evaluation.hpp"
#include "qsmf/report.hpp"
#include "qsmf/synthetic.hpp"
#include "qsmf/trainer.hpp"
#include "qsmf/version.hpp"

namespace fs = std::filesystem;
using qsmf::json;

namespace {

// Reject unknown keys everywhere so typos fail loudly instead of silently
// falling back to defaults.
void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw qsmf::ConfigError("config section '" + where + "' must be an object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw qsmf::ConfigError("unknown config key '" + where + "." + key + "'");
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    return obj.at(key).get<T>();
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw qsmf::IoError("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw qsmf::ConfigError("config parse error in " + path + ": " + e.what());
    }
    return j;
}

qsmf::IngestFormat parse_ingest(const json& cfg) {
    qsmf::IngestFormat fmt;
    if (!cfg.contains("ingest")) return fmt;
    const json& j = cfg.at("ingest");
    if (j.is_string() && j.get<std::string>() == "community_notes")
        return qsmf::IngestFormat::community_notes();
    check_keys(j, {"delimiter", "rater_col", "note_col", "label_col", "timestamp_col", "value_map"},
               "ingest");
    const auto delim = get_or<std::string>(j, "delimiter", "\t");
    if (delim.size() != 1) throw qsmf::ConfigError("ingest.delimiter must be one character");
    fmt.delimiter = delim[0];
    fmt.rater_col = get_or<std::string>(j, "rater_col", fmt.rater_col);
    fmt.note_col = get_or<std::string>(j, "note_col", fmt.note_col);
    fmt.label_col = get_or<std::string>(j, "label_col", fmt.label_col);
    fmt.timestamp_col = get_or<std::string>(j, "timestamp_col", fmt.timestamp_col);
    if (j.contains("value_map")) {
        if (j.at("value_map").is_string()) {
            if (j.at("value_map").get<std::string>() != "community_notes")
                throw qsmf::ConfigError("ingest.value_map: unknown preset");
            fmt.value_map = qsmf::IngestFormat::community_notes().value_map;
        } else {
            for (const auto& [label, v] : j.at("value_map").items())
                fmt.value_map[label] = v.get<double>();
        }
    }
    return fmt;
}

qsmf::Hyperparams parse_hyper(const json& cfg, std::uint64_t seed) {
    qsmf::Hyperparams h;
    h.seed = seed;
    if (!cfg.contains("hyper")) return h;
    const json& j = cfg.at("hyper");
    check_keys(j,
               {"lambda_alpha", "lambda_beta", "lambda_gamma", "lambda_delta", "lambda_rho",
                "learning_rate", "rounds", "epoch_ceiling", "conv_tol", "conv_patience",
                "clip_norm", "k"},
               "hyper");
    h.lambda_alpha = get_or(j, "lambda_alpha", h.lambda_alpha);
    h.lambda_beta = get_or(j, "lambda_beta", h.lambda_beta);
    h.lambda_gamma = get_or(j, "lambda_gamma", h.lambda_gamma);
    h.lambda_delta = get_or(j, "lambda_delta", h.lambda_delta);
    h.lambda_rho = get_or(j, "lambda_rho", h.lambda_rho);
    h.learning_rate = get_or(j, "learning_rate", h.learning_rate);
    h.rounds = get_or(j, "rounds", h.rounds);
    h.epoch_ceiling = get_or(j, "epoch_ceiling", h.epoch_ceiling);
    h.conv_tol = get_or(j, "conv_tol", h.conv_tol);
    h.conv_patience = get_or(j, "conv_patience", h.conv_patience);
    h.clip_norm = get_or(j, "clip_norm", h.clip_norm);
    h.k = get_or(j, "k", h.k);
    h.validate();
    return h;
}

json hyper_to_json(const qsmf::Hyperparams& h) {
    return json{{"lambda_alpha", h.lambda_alpha},
                {"lambda_beta", h.lambda_beta},
                {"lambda_gamma", h.lambda_gamma},
                {"lambda_delta", h.lambda_delta},
                {"lambda_rho", h.lambda_rho},
                {"learning_rate", h.learning_rate},
                {"rounds", h.rounds},
                {"epoch_ceiling", h.epoch_ceiling},
                {"conv_tol", h.conv_tol},
                {"conv_patience", h.conv_patience},
                {"clip_norm", h.clip_norm},
                {"k", h.k}};
}

qsmf::SyntheticSpec parse_synth(const json& cfg, std::uint64_t seed) {
    if (!cfg.contains("synth"))
        throw qsmf::ConfigError("missing config section 'synth' (required to generate data)");
    const json& j = cfg.at("synth");
    check_keys(j,
               {"n_raters", "n_notes", "ratings_per_rater", "activity_mix", "mu", "sd_alpha",
                "sd_beta", "sd_gamma", "sd_delta", "noise_lo", "noise_hi", "f_bad", "bad_split",
                "binary", "threshold", "k"},
               "synth");
    qsmf::SyntheticSpec s;
    s.seed = seed;
    s.n_raters = get_or(j, "n_raters", s.n_raters);
    s.n_notes = get_or(j, "n_notes", s.n_notes);
    s.ratings_per_rater = get_or(j, "ratings_per_rater", s.ratings_per_rater);
    if (j.contains("activity_mix"))
        for (const auto& pair : j.at("activity_mix"))
            s.activity_mix.emplace_back(pair.at(0).get<std::int32_t>(), pair.at(1).get<double>());
    s.mu = get_or(j, "mu", s.mu);
    s.sd_alpha = get_or(j, "sd_alpha", s.sd_alpha);
    s.sd_beta = get_or(j, "sd_beta", s.sd_beta);
    s.sd_gamma = get_or(j, "sd_gamma", s.sd_gamma);
    s.sd_delta = get_or(j, "sd_delta", s.sd_delta);
    s.noise_range.first = get_or(j, "noise_lo", s.noise_range.first);
    s.noise_range.second = get_or(j, "noise_hi", s.noise_range.second);
    s.f_bad = get_or(j, "f_bad", s.f_bad);
    if (j.contains("bad_split")) {
        const auto& bs = j.at("bad_split");
        if (!bs.is_array() || bs.size() != 4)
            throw qsmf::ConfigError("synth.bad_split must be an array of 4 weights");
        for (std::size_t i = 0; i < 4; ++i) s.bad_split[i] = bs[i].get<double>();
    }
    s.binary = get_or(j, "binary", s.binary);
    s.threshold = get_or(j, "threshold", s.threshold);
    s.k = get_or(j, "k", s.k);
    s.validate();
    return s;
}

json synth_to_json(const qsmf::SyntheticSpec& s) {
    json mix = json::array();
    for (const auto& [c, w] : s.activity_mix) mix.push_back(json::array({c, w}));
    return json{{"n_raters", s.n_raters},
                {"n_notes", s.n_notes},
                {"ratings_per_rater", s.ratings_per_rater},
                {"activity_mix", mix},
                {"mu", s.mu},
                {"sd_alpha", s.sd_alpha},
                {"sd_beta", s.sd_beta},
                {"sd_gamma", s.sd_gamma},
                {"sd_delta", s.sd_delta},
                {"noise_lo", s.noise_range.first},
                {"noise_hi", s.noise_range.second},
                {"f_bad", s.f_bad},
                {"bad_split", s.bad_split},
                {"binary", s.binary},
                {"threshold", s.threshold},
                {"k", s.k}};
}

// Shared state resolved from flags + config.
struct Run {
    json cfg;
    fs::path out;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string data_path;
    std::string save_cache_path;
    std::string subcommand;

    void prepare(std::set<std::string> allowed_sections) {
        allowed_sections.insert("seed");
        allowed_sections.insert("threads");
        check_keys(cfg, allowed_sections, "config");
        if (out.empty()) throw qsmf::ConfigError("--out is required");
        fs::create_directories(out);
    }

    void write_resolved(json resolved) const {
        resolved["version"] = qsmf::kVersion;
        resolved["subcommand"] = subcommand;
        resolved["seed"] = seed;
        resolved["threads"] = threads;
        qsmf::write_json(resolved, out / "resolved_config.json");
    }
};

qsmf::RatingDataset load_data(const Run& run) {
    if (run.data_path.empty()) throw qsmf::ConfigError("--data is required");
    if (!fs::exists(run.data_path))
        throw qsmf::IoError("missing input data file: " + run.data_path);
    qsmf::RatingDataset ds;
    std::ifstream probe(run.data_path, std::ios::binary);
    char magic[8] = {};
    probe.read(magic, 8);
    if (probe && std::string(magic, 8) == "QSMFDS1\n") {
        ds = qsmf::load_cache(run.data_path);
    } else {
        ds = qsmf::ingest(run.data_path, parse_ingest(run.cfg));
    }
    const auto min_ratings = get_or<std::int64_t>(run.cfg, "filter_min_ratings", 0);
    if (min_ratings > 0) ds = qsmf::filter_activity(ds, min_ratings);
    if (!run.save_cache_path.empty()) qsmf::save_cache(ds, run.save_cache_path);
    return ds;
}

qsmf::ModelParams load_model(const std::string& path, const char* what) {
    if (path.empty()) throw qsmf::ConfigError(std::string("missing required artifact: ") + what);
    if (!fs::exists(path))
        throw qsmf::IoError(std::string("missing required artifact: ") + what + " (" + path + ")");
    return qsmf::load_params(path);
}

int cmd_fit(Run& run, const std::string& model_name) {
    run.prepare({"ingest", "filter_min_ratings", "hyper", "model", "loss_trace"});
    const std::string name = model_name.empty() ? get_or<std::string>(run.cfg, "model", "qsmf")
                                                : model_name;
    if (name != "baseline" && name != "qsmf")
        throw qsmf::ConfigError("model must be 'baseline' or 'qsmf', got '" + name + "'");
    const auto kind = name == "baseline" ? qsmf::ModelKind::baseline : qsmf::ModelKind::qsmf;
    const auto ds = load_data(run);
    if (ds.empty()) throw qsmf::InsufficientDataError("dataset is empty after filtering");
    auto h = parse_hyper(run.cfg, run.seed);
    qsmf::FitOptions opts;
    opts.threads = run.threads;
    std::vector<double> trace;
    const bool want_trace = get_or(run.cfg, "loss_trace", false);
    if (want_trace) opts.loss_trace = &trace;
    auto [params, report] = qsmf::fit(ds, h, kind, nullptr, opts);
    qsmf::save_params(params, run.out / "params.bin");
    qsmf::write_json(qsmf::to_json(report), run.out / "fit_report.json");
    if (want_trace) {
        qsmf::CsvWriter csv(run.out / "loss_trace.csv");
        csv.row("epoch", "loss");
        for (std::size_t e = 0; e < trace.size(); ++e) csv.row(e, trace[e]);
    }
    run.write_resolved(json{{"model", name},
                            {"hyper", hyper_to_json(h)},
                            {"data", run.data_path},
                            {"n_raters", ds.n_raters},
                            {"n_notes", ds.n_notes},
                            {"n_ratings", ds.size()}});
    std::cout << "fit " << name << ": " << ds.n_raters << " raters, " << ds.n_notes << " notes, "
              << ds.size() << " ratings; final loss " << report.final_loss << "\n";
    return 0;
}

int cmd_predict(Run& run, const std::string& params_path) {
    run.prepare({"ingest", "filter_min_ratings"});
    const auto params = load_model(params_path, "model parameter file (--params)");
    const auto ds = load_data(run);
    params.check_sized_to(ds);
    qsmf::CsvWriter csv(run.out / "predictions.csv");
    csv.row("rater_id", "note_id", "value", "prediction");
    for (std::int64_t t = 0; t < ds.size(); ++t)
        csv.row(ds.rater_ids[static_cast<std::size_t>(ds.rater[t])],
                ds.note_ids[static_cast<std::size_t>(ds.note[t])], ds.value[t],
                params.predict_unchecked(ds.rater[t], ds.note[t]));
    run.write_resolved(json{{"params", params_path}, {"data", run.data_path}});
    std::cout << "predicted " << ds.size() << " pairs\n";
    return 0;
}

int cmd_synth(Run& run) {
    run.prepare({"synth", "ingest", "filter_min_ratings"});
    const auto spec = parse_synth(run.cfg, run.seed);
    // an input dataset, when given, donates its sparsity pattern
    std::optional<qsmf::RatingDataset> pattern;
    if (!run.data_path.empty()) pattern = load_data(run);
    const auto world = qsmf::generate(spec, pattern ? &*pattern : nullptr);
    qsmf::save_ratings_text(world.dataset, run.out / "ratings.tsv");
    qsmf::save_params(world.truth, run.out / "truth_params.bin");
    qsmf::save_truth_sidecar(world, run.out / "truth_raters.csv", run.out / "truth_notes.csv");
    json resolved{{"synth", synth_to_json(spec)}};
    if (pattern) resolved["pattern_data"] = run.data_path;
    run.write_resolved(std::move(resolved));
    std::cout << "generated " << world.dataset.size() << " ratings over "
              << world.dataset.n_raters << " raters and " << world.dataset.n_notes << " notes\n";
    return 0;
}

int cmd_diagnose(Run& run, const std::string& baseline_path, const std::string& qs_path) {
    run.prepare({"ingest", "filter_min_ratings", "diagnose"});
    json dcfg = run.cfg.contains("diagnose") ? run.cfg.at("diagnose") : json::object();
    check_keys(dcfg, {"min_ratings", "n_bootstrap", "n_perm", "ivw_reg"}, "diagnose");
    const auto min_ratings = get_or<std::int64_t>(dcfg, "min_ratings", 20);
    const auto n_bootstrap = get_or<int>(dcfg, "n_bootstrap", 1000);
    const auto n_perm = get_or<int>(dcfg, "n_perm", 100);
    const auto ivw_reg = get_or<double>(dcfg, "ivw_reg", 5.0);

    const auto p_base = load_model(baseline_path, "baseline parameter file (--params)");
    const auto ds = load_data(run);
    p_base.check_sized_to(ds);

    const auto table = qsmf::slopes(p_base, ds);
    const auto sh = qsmf::split_half(p_base, ds, min_ratings, run.seed, n_bootstrap);
    const auto disp = qsmf::dispersion_test(p_base, ds, n_perm, run.seed);
    const auto ivw = qsmf::ivw_reputation(p_base, ds, ivw_reg);

    json report{{"split_half", qsmf::to_json(sh)}, {"dispersion", qsmf::to_json(disp)}};

    {
        qsmf::CsvWriter csv(run.out / "slopes.csv");
        csv.row("rater_id", "slope", "n_ratings", "activity_bin", "score_u", "b_sum", "defined");
        for (std::size_t i = 0; i < table.slope.size(); ++i)
            csv.row(ds.rater_ids[i], table.slope[i], table.n_ratings[i],
                    qsmf::activity_bin_label(qsmf::activity_bin(table.n_ratings[i])),
                    table.score_u[i], table.b_sum[i], static_cast<int>(table.defined[i]));
    }
    {
        qsmf::CsvWriter csv(run.out / "split_half_bins.csv");
        csv.row("bin", "n_raters", "r");
        for (const auto& b : sh.by_bin)
            csv.row(b.bin, b.n_raters, b.r ? std::to_string(*b.r) : "");
    }
    {
        qsmf::CsvWriter csv(run.out / "ivw_reputation_deciles.csv");
        csv.row("decile", "abs_gamma_lo", "abs_gamma_hi", "mean_abs_gamma", "mean_reputation",
                "n_raters");
        int d = 0;
        for (const auto& row : ivw.by_abs_gamma_decile)
            csv.row(d++, row.gamma_lo, row.gamma_hi, row.mean_abs_gamma, row.mean_reputation,
                    row.n_raters);
    }

    if (!qs_path.empty()) {
        const auto p_qs = load_model(qs_path, "qsmf parameter file (--qs-params)");
        p_qs.check_sized_to(ds);
        const auto conv = qsmf::convergent_validity(p_qs, table, run.seed, n_bootstrap);
        const auto r2 = qsmf::quality_r2(p_qs, ds);
        report["convergent"] = qsmf::to_json(conv);
        std::vector<double> rho_defined, gamma_defined;
        qsmf::CsvWriter csv(run.out / "rho_vs_gamma.csv");
        csv.row("rater_id", "rho", "abs_gamma", "quality_r2", "slope", "n_ratings");
        for (std::int32_t i = 0; i < ds.n_raters; ++i) {
            double g2 = 0.0;
            for (std::int32_t l = 0; l < p_qs.k; ++l) {
                const double g = p_qs.gamma[static_cast<std::size_t>(i) * p_qs.k + l];
                g2 += g * g;
            }
            const double ag = std::sqrt(g2);
            csv.row(ds.rater_ids[static_cast<std::size_t>(i)], p_qs.rho[static_cast<std::size_t>(i)],
                    ag, r2[static_cast<std::size_t>(i)], table.slope[static_cast<std::size_t>(i)],
                    table.n_ratings[static_cast<std::size_t>(i)]);
            if (table.defined[static_cast<std::size_t>(i)]) {
                rho_defined.push_back(p_qs.rho[static_cast<std::size_t>(i)]);
                gamma_defined.push_back(ag);
            }
        }
        if (rho_defined.size() >= 3)
            report["rho_abs_gamma_spearman"] = qsmf::spearman(rho_defined, gamma_defined);
    }

    qsmf::write_json(report, run.out / "diagnostics.json");
    run.write_resolved(json{{"diagnose",
                             json{{"min_ratings", min_ratings},
                                  {"n_bootstrap", n_bootstrap},
                                  {"n_perm", n_perm},
                                  {"ivw_reg", ivw_reg}}},
                            {"params", baseline_path},
                            {"qs_params", qs_path},
                            {"data", run.data_path}});
    std::cout << "split-half r " << sh.r << ", dispersion p " << disp.p_value << "\n";
    return 0;
}

int cmd_attack(Run& run) {
    run.prepare({"ingest", "filter_min_ratings", "hyper", "synth", "attack"});
    if (!run.cfg.contains("attack")) throw qsmf::ConfigError("missing config section 'attack'");
    const json& a = run.cfg.at("attack");
    check_keys(a,
               {"mode", "n_seeds", "k_list", "k_pg_list", "min_history", "n_groups",
                "min_abs_gamma", "target_min_ratings", "target_quantile", "attack_value"},
               "attack");
    const auto mode = get_or<std::string>(a, "mode", "untargeted");
    const int n_seeds = get_or<int>(a, "n_seeds", 3);
    auto h = parse_hyper(run.cfg, run.seed);
    qsmf::FitOptions opts;
    opts.threads = run.threads;

    qsmf::RatingDataset ds;
    if (!run.data_path.empty())
        ds = load_data(run);
    else
        ds = qsmf::generate(parse_synth(run.cfg, run.seed)).dataset;
    if (ds.empty()) throw qsmf::InsufficientDataError("dataset is empty");

    // clean reference fits, shared across conditions and seeds
    auto [clean_bl, crep_bl] = qsmf::fit(ds, h, qsmf::ModelKind::baseline, nullptr, opts);
    auto [clean_qs, crep_qs] = qsmf::fit(ds, h, qsmf::ModelKind::qsmf, nullptr, opts);

    json rows = json::array();
    qsmf::CsvWriter csv(run.out / "attack_rows.csv");
    csv.row("mode", "size", "seed_index", "auc_rho", "mean_rho_attacker", "mean_rho_honest",
            "disp_baseline", "disp_qsmf", "protection_pct", "n_attackers", "n_targets",
            "n_injections", "n_overwrites");

    auto rho_means = [&](const qsmf::ModelParams& p, const std::vector<std::uint8_t>& attacker) {
        double sa = 0.0, sh = 0.0;
        std::int64_t na = 0, nh = 0;
        for (std::size_t i = 0; i < attacker.size(); ++i) {
            if (attacker[i]) {
                sa += p.rho[i];
                ++na;
            } else {
                sh += p.rho[i];
                ++nh;
            }
        }
        return std::make_pair(na ? sa / na : 0.0, nh ? sh / nh : 0.0);
    };

    if (mode == "untargeted") {
        std::vector<std::int64_t> k_list;
        if (a.contains("k_list"))
            for (const auto& v : a.at("k_list")) k_list.push_back(v.get<std::int64_t>());
        if (k_list.empty()) throw qsmf::ConfigError("attack.k_list required for untargeted mode");
        qsmf::UntargetedSpec spec;
        spec.min_history = get_or<std::int64_t>(a, "min_history", spec.min_history);
        for (std::int64_t K : k_list) {
            for (int s = 0; s < n_seeds; ++s) {
                spec.n_corrupted = K;
                spec.seed = qsmf::derive_seed(run.seed, (static_cast<std::uint64_t>(K) << 8) ^
                                                            static_cast<std::uint64_t>(s));
                auto att = qsmf::corrupt_untargeted(ds, clean_bl, spec);
                qsmf::Hyperparams hs = h;
                hs.seed = spec.seed;
                auto [pq, rq] = qsmf::fit(att.attacked, hs, qsmf::ModelKind::qsmf, nullptr, opts);
                // separating honest raters from attackers by fitted rho
                std::vector<std::uint8_t> honest(att.attacker.size());
                for (std::size_t i = 0; i < honest.size(); ++i) honest[i] = att.attacker[i] ? 0 : 1;
                const double auc_rho = qsmf::auc(pq.rho, honest);
                const auto [mra, mrh] = rho_means(pq, att.attacker);
                rows.push_back(json{{"mode", "untargeted"},
                                    {"K", K},
                                    {"seed_index", s},
                                    {"auc_rho", auc_rho},
                                    {"mean_rho_attacker", mra},
                                    {"mean_rho_honest", mrh}});
                csv.row("untargeted", K, s, auc_rho, mra, mrh, "", "", "", K, "", "", "");
            }
        }
    } else if (mode == "coordinated") {
        std::vector<int> kpg_list;
        if (a.contains("k_pg_list"))
            for (const auto& v : a.at("k_pg_list")) kpg_list.push_back(v.get<int>());
        if (kpg_list.empty())
            throw qsmf::ConfigError("attack.k_pg_list required for coordinated mode");
        qsmf::CoordinatedSpec spec;
        spec.n_groups = get_or<int>(a, "n_groups", spec.n_groups);
        spec.attacker_min_history = get_or<std::int64_t>(a, "min_history", spec.attacker_min_history);
        spec.attacker_min_abs_gamma = get_or<double>(a, "min_abs_gamma", spec.attacker_min_abs_gamma);
        spec.target_min_ratings = get_or<std::int64_t>(a, "target_min_ratings", spec.target_min_ratings);
        spec.target_quantile = get_or<double>(a, "target_quantile", spec.target_quantile);
        spec.attack_value = get_or<double>(a, "attack_value", spec.attack_value);
        for (int kpg : kpg_list) {
            for (int s = 0; s < n_seeds; ++s) {
                spec.per_group = kpg;
                spec.seed = qsmf::derive_seed(run.seed, (static_cast<std::uint64_t>(kpg) << 8) ^
                                                            static_cast<std::uint64_t>(s));
                auto att = qsmf::attack_coordinated(ds, clean_bl, spec);
                qsmf::Hyperparams hs = h;
                hs.seed = spec.seed;
                double disp_bl = 0.0, disp_qs = 0.0, prot = 0.0;
                if (!att.targets.empty()) {
                    auto [ab, r1] = qsmf::fit(att.attacked, hs, qsmf::ModelKind::baseline, nullptr, opts);
                    auto [aq, r2] = qsmf::fit(att.attacked, hs, qsmf::ModelKind::qsmf, nullptr, opts);
                    disp_bl = qsmf::displacement(clean_bl, ab, att.targets);
                    disp_qs = qsmf::displacement(clean_qs, aq, att.targets);
                    prot = qsmf::protection(disp_bl, disp_qs);
                }
                rows.push_back(json{{"mode", "coordinated"},
                                    {"K_pg", kpg},
                                    {"seed_index", s},
                                    {"disp_baseline", disp_bl},
                                    {"disp_qsmf", disp_qs},
                                    {"protection_pct", prot},
                                    {"n_attackers", att.n_attackers},
                                    {"n_targets", static_cast<std::int64_t>(att.targets.size())},
                                    {"n_injections", att.injections},
                                    {"n_overwrites", att.overwrites},
                                    {"groups_skipped", att.groups_skipped}});
                csv.row("coordinated", kpg, s, "", "", "", disp_bl, disp_qs, prot, att.n_attackers,
                        att.targets.size(), att.injections, att.overwrites);
            }
        }
    } else {
        throw qsmf::ConfigError("attack.mode must be 'untargeted' or 'coordinated'");
    }

    qsmf::write_json(json{{"mode", mode}, {"rows", rows}}, run.out / "attack_report.json");
    json resolved{{"attack", a}, {"hyper", hyper_to_json(h)}};
    if (!run.data_path.empty()) resolved["data"] = run.data_path;
    if (run.cfg.contains("synth")) resolved["synth"] = run.cfg.at("synth");
    run.write_resolved(resolved);
    std::cout << "attack report with " << rows.size() << " condition rows\n";
    return 0;
}

int cmd_eval(Run& run) {
    run.prepare({"ingest", "filter_min_ratings", "hyper", "synth", "eval"});
    if (!run.cfg.contains("eval")) throw qsmf::ConfigError("missing config section 'eval'");
    const json& e = run.cfg.at("eval");
    check_keys(e,
               {"task", "fraction", "n_seeds", "f_bad_list", "cutoffs_ms", "window_ms", "k_list",
                "mode", "n_boot", "min_eventual", "horizon_ms", "note_start_frac"},
               "eval");
    const auto task = get_or<std::string>(e, "task", "");
    auto h = parse_hyper(run.cfg, run.seed);

    if (task == "oos") {
        const auto ds = run.data_path.empty()
                            ? qsmf::generate(parse_synth(run.cfg, run.seed)).dataset
                            : load_data(run);
        const auto res = qsmf::eval_oos(ds, h, get_or<double>(e, "fraction", 0.2),
                                        get_or<int>(e, "n_seeds", 5), run.threads);
        qsmf::write_json(qsmf::to_json(res), run.out / "oos.json");
        qsmf::CsvWriter csv(run.out / "oos.csv");
        csv.row("seed_index", "mse_baseline", "mse_qsmf", "pct_reduction", "n_test");
        for (const auto& r : res.rows)
            csv.row(r.seed_index, r.mse_baseline, r.mse_qsmf, r.pct_reduction, r.n_test);
        run.write_resolved(json{{"eval", e}, {"hyper", hyper_to_json(h)}});
        std::cout << "oos: baseline " << res.mean_baseline << ", qsmf " << res.mean_qsmf << " ("
                  << res.qsmf_wins << "/" << res.rows.size() << " wins)\n";
        return 0;
    }
    if (task == "rolling") {
        auto ds = run.data_path.empty() ? qsmf::generate(parse_synth(run.cfg, run.seed)).dataset
                                        : load_data(run);
        bool synthetic_ts = false;
        if (!ds.has_timestamps()) {
            const auto horizon = get_or<std::int64_t>(e, "horizon_ms", 0);
            if (horizon <= 0)
                throw qsmf::ConfigError(
                    "eval.horizon_ms required: dataset has no timestamps, synthetic ones must "
                    "be assigned");
            ds = qsmf::assign_synthetic_timestamps(ds, horizon,
                                                   get_or<double>(e, "note_start_frac", 0.7),
                                                   run.seed);
            synthetic_ts = true;
        }
        qsmf::RollingSpec spec;
        if (!e.contains("cutoffs_ms") || !e.contains("window_ms"))
            throw qsmf::ConfigError("eval.cutoffs_ms and eval.window_ms are required for rolling");
        for (const auto& v : e.at("cutoffs_ms")) spec.cutoffs.push_back(v.get<std::int64_t>());
        spec.window_len = e.at("window_ms").get<std::int64_t>();
        if (e.contains("k_list")) {
            spec.k_list.clear();
            for (const auto& v : e.at("k_list")) spec.k_list.push_back(v.get<int>());
        }
        const auto mode = get_or<std::string>(e, "mode", "bootstrap");
        if (mode != "bootstrap" && mode != "temporal")
            throw qsmf::ConfigError("eval.mode must be 'bootstrap' or 'temporal'");
        spec.mode = mode == "bootstrap" ? qsmf::RollingSpec::Mode::bootstrap
                                        : qsmf::RollingSpec::Mode::temporal;
        spec.n_boot = get_or<int>(e, "n_boot", spec.n_boot);
        spec.min_eventual = get_or<std::int64_t>(e, "min_eventual", spec.min_eventual);
        spec.seed = run.seed;
        auto curve = qsmf::eval_rolling(ds, h, spec, run.threads);
        curve.synthetic_timestamps = synthetic_ts;
        qsmf::write_json(qsmf::to_json(curve), run.out / "rolling.json");
        {
            qsmf::CsvWriter csv(run.out / "rolling_windows.csv");
            csv.row("window_start", "model", "k", "mse_z", "cohort_size");
            for (const auto& r : curve.window_rows)
                csv.row(r.window_start, r.model, r.k, r.mse, r.cohort_size);
        }
        {
            // one row per k, mirroring the published table layout
            qsmf::CsvWriter csv(run.out / "rolling_summary.csv");
            csv.row("k", "baseline_mean", "baseline_sd", "qsmf_mean", "qsmf_sd", "pct_lower",
                    "ratings_saved_pct");
            for (const auto& bc : curve.baseline) {
                const auto qc = std::find_if(curve.qsmf.begin(), curve.qsmf.end(),
                                             [&](const auto& c) { return c.k == bc.k; });
                if (qc == curve.qsmf.end()) continue;
                std::string saved;
                for (const auto& [k, v] : curve.ratings_saved_pct)
                    if (k == bc.k && v) saved = std::to_string(*v);
                csv.row(bc.k, bc.mean_mse, bc.sd_mse, qc->mean_mse, qc->sd_mse,
                        (1.0 - qc->mean_mse / bc.mean_mse) * 100.0, saved);
            }
        }
        run.write_resolved(json{{"eval", e}, {"hyper", hyper_to_json(h)}});
        std::cout << "rolling: " << curve.window_rows.size() << " window rows, "
                  << curve.windows_skipped << " windows skipped\n";
        return 0;
    }
    if (task == "recover") {
        const auto base = parse_synth(run.cfg, run.seed);
        std::vector<double> f_bad_list;
        if (e.contains("f_bad_list"))
            for (const auto& v : e.at("f_bad_list")) f_bad_list.push_back(v.get<double>());
        if (f_bad_list.empty()) throw qsmf::ConfigError("eval.f_bad_list required for recover");
        const int n_seeds = get_or<int>(e, "n_seeds", 3);
        const auto rows = qsmf::recover_synthetic(base, h, f_bad_list, n_seeds, run.threads);
        qsmf::write_json(qsmf::to_json(rows), run.out / "recover.json");
        qsmf::CsvWriter csv(run.out / "recover.csv");
        csv.row("f_bad", "seed_index", "model", "mse_z", "auc_rho");
        for (const auto& r : rows) {
            csv.row(r.f_bad, r.seed_index, "baseline", r.mse_z_baseline, "");
            csv.row(r.f_bad, r.seed_index, "qsmf", r.mse_z_qsmf,
                    r.auc_rho ? std::to_string(*r.auc_rho) : "");
        }
        run.write_resolved(
            json{{"eval", e}, {"hyper", hyper_to_json(h)}, {"synth", synth_to_json(base)}});
        std::cout << "recover: " << rows.size() << " rows\n";
        return 0;
    }
    throw qsmf::ConfigError("eval.task must be one of 'oos', 'rolling', 'recover'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quality-sensitive matrix factorization for crowdsourced note ratings"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string config_path, data_path, out_dir, params_path, qs_params_path, model_name;
    std::int64_t seed_flag = -1;
    int threads = 0;

    std::string save_cache_path;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--data", data_path, "rating dump (text) or dataset cache (binary)");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed_flag, "seed override (wins over config)");
    app.add_option("--threads", threads, "worker threads (results identical for any count)");
    app.add_option("--save-cache", save_cache_path,
                   "write the loaded (and filtered) dataset as a binary cache");

    auto* fit_cmd = app.add_subcommand("fit", "fit a model and write its parameter file");
    fit_cmd->add_option("--model", model_name, "baseline or qsmf (overrides config)");
    auto* predict_cmd = app.add_subcommand("predict", "write predictions for observed pairs");
    predict_cmd->add_option("--params", params_path, "fitted parameter file");
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic world with ground truth");
    auto* diag_cmd = app.add_subcommand("diagnose", "rating-process validation statistics");
    diag_cmd->add_option("--params", params_path, "baseline parameter file");
    diag_cmd->add_option("--qs-params", qs_params_path, "qsmf parameter file (optional)");
    auto* attack_cmd = app.add_subcommand("attack", "corruption and coordinated-attack harness");
    auto* eval_cmd = app.add_subcommand("eval", "out-of-sample, rolling-window, recovery");

    CLI11_PARSE(app, argc, argv);

    try {
        Run run;
        run.cfg = load_config(config_path);
        run.out = out_dir;
        run.data_path = data_path;
        run.save_cache_path = save_cache_path;
        run.seed = seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag)
                                  : get_or<std::uint64_t>(run.cfg, "seed", 0);
        run.threads = threads > 0 ? threads : get_or<int>(run.cfg, "threads", 1);
        if (fit_cmd->parsed()) {
            run.subcommand = "fit";
            return cmd_fit(run, model_name);
        }
        if (predict_cmd->parsed()) {
            run.subcommand = "predict";
            return cmd_predict(run, params_path);
        }
        if (synth_cmd->parsed()) {
            run.subcommand = "synth";
            return cmd_synth(run);
        }
        if (diag_cmd->parsed()) {
            run.subcommand = "diagnose";
            return cmd_diagnose(run, params_path, qs_params_path);
        }
        if (attack_cmd->parsed()) {
            run.subcommand = "attack";
            return cmd_attack(run);
        }
        if (eval_cmd->parsed()) {
            run.subcommand = "eval";
            return cmd_eval(run);
        }
        throw qsmf::ConfigError("no subcommand given");
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}
