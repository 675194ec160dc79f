#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "qsmf/adversarial.hpp"
#include "qsmf/diagnostics.hpp"
#include "qsmf/evaluation.hpp"
#include "qsmf/synthetic.hpp"
#include "qsmf/trainer.hpp"
#include "qsmf/version.hpp"

namespace qsmf {

using json = nlohmann::json;

inline json to_json(const ConfidenceInterval& ci) { return json{{"lo", ci.lo}, {"hi", ci.hi}}; }

inline json to_json(const FitReport& r) {
    json pct = json::object();
    for (const auto& [p, v] : r.rho_percentiles) pct[std::to_string(p)] = v;
    return json{{"final_loss", r.final_loss},
                {"epochs_per_round", r.epochs_per_round},
                {"converged", r.converged},
                {"rho_percentiles", pct},
                {"normalization_scale", r.normalization_scale}};
}

inline json to_json(const SplitHalfResult& r) {
    json bins = json::array();
    for (const auto& b : r.by_bin) {
        json row{{"bin", b.bin}, {"n_raters", b.n_raters}};
        if (b.r)
            row["r"] = *b.r;
        else
            row["r"] = nullptr;
        bins.push_back(row);
    }
    return json{{"r", r.r},
                {"ci", to_json(r.ci)},
                {"partial_r", r.partial_r},
                {"n_raters", r.n_raters},
                {"by_bin", bins}};
}

inline json to_json(const DispersionResult& r) {
    return json{{"d_obs", r.d_obs},
                {"null_mean", r.null_mean},
                {"null_sd", r.null_sd},
                {"p_value", r.p_value},
                {"n_perm", r.n_perm}};
}

inline json to_json(const ConvergentResult& r) {
    return json{{"pearson", r.pearson_r},
                {"pearson_ci", to_json(r.pearson_ci)},
                {"spearman", r.spearman_r},
                {"spearman_ci", to_json(r.spearman_ci)},
                {"partial_pearson", r.partial_pearson_r},
                {"n_raters", r.n_raters}};
}

inline json to_json(const OosResult& r) {
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back(json{{"seed_index", row.seed_index},
                            {"mse_baseline", row.mse_baseline},
                            {"mse_qsmf", row.mse_qsmf},
                            {"pct_reduction", row.pct_reduction},
                            {"n_test", row.n_test}});
    return json{{"rows", rows},
                {"mean_baseline", r.mean_baseline},
                {"sd_baseline", r.sd_baseline},
                {"mean_qsmf", r.mean_qsmf},
                {"sd_qsmf", r.sd_qsmf},
                {"mean_reduction_pct", r.mean_reduction},
                {"sd_reduction_pct", r.sd_reduction},
                {"qsmf_wins", r.qsmf_wins}};
}

inline json to_json(const EfficiencyCurve& c) {
    auto cells = [](const std::vector<RollingCell>& v) {
        json arr = json::array();
        for (const auto& cell : v)
            arr.push_back(json{{"k", cell.k},
                               {"mean_mse_z", cell.mean_mse},
                               {"sd_mse_z", cell.sd_mse},
                               {"n_windows", cell.n_windows}});
        return arr;
    };
    json saved = json::array();
    for (const auto& [k, v] : c.ratings_saved_pct) {
        json row{{"k", k}};
        if (v)
            row["saved_pct"] = *v;
        else
            row["saved_pct"] = nullptr;
        saved.push_back(row);
    }
    return json{{"baseline", cells(c.baseline)},
                {"qsmf", cells(c.qsmf)},
                {"ratings_saved", saved},
                {"windows_skipped", c.windows_skipped},
                {"synthetic_timestamps", c.synthetic_timestamps}};
}

inline json to_json(const std::vector<RecoveryRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows) {
        json row{{"f_bad", r.f_bad},
                 {"seed_index", r.seed_index},
                 {"mse_z_baseline", r.mse_z_baseline},
                 {"mse_z_qsmf", r.mse_z_qsmf},
                 {"delta_mse_z", r.delta_mse_z}};
        if (r.auc_rho)
            row["auc_rho"] = *r.auc_rho;
        else
            row["auc_rho"] = nullptr;
        arr.push_back(row);
    }
    return arr;
}

inline void write_json(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path.string());
}

// Minimal CSV writer; all our fields are numbers or simple identifiers.
class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path) : out_(path) {
        if (!out_) throw IoError("cannot write " + path.string());
        out_.precision(17);
    }
    template <typename... Ts>
    void row(const Ts&... cells) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cells, first = false), ...);
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

}  // namespace qsmf
