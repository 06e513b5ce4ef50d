#include "eyelab/report.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "eyelab/csv.hpp"
#include "eyelab/error.hpp"
#include "eyelab/rng.hpp"

namespace eyelab {

std::string tool_version() { return "0.1.0"; }

std::string text_digest_hex(const std::string& text) {
    const std::uint64_t h = fnv1a64(text);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_digest_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open file for digesting");
    std::uint64_t h = 14695981039346656037ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

std::string current_timestamp_utc() {
    std::time_t t = 0;
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
        t = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
    } else {
        t = std::time(nullptr);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string manifest_to_json(const RunManifest& manifest) {
    nlohmann::ordered_json j;
    j["command"] = manifest.command;
    j["tool_version"] = manifest.tool_version;
    j["seed"] = manifest.seed;
    j["config_digest"] = manifest.config_digest.empty() ? "-" : manifest.config_digest;
    nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
    for (const auto& [path, digest] : manifest.input_digests) inputs[path] = digest;
    j["input_digests"] = std::move(inputs);
    j["timestamp"] = manifest.timestamp;
    return j.dump(2) + "\n";
}

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << content;
    if (!out) throw DataError(path + ": write failed");
}

std::string md_escape(const std::string& cell) {
    std::string out;
    for (char c : cell) {
        if (c == '|') out += "\\|";
        else out.push_back(c);
    }
    return out;
}

std::string fmt(double v) { return format_double_shortest(v); }

std::string bool_str(bool b) { return b ? "true" : "false"; }

std::string method_str(MatchMethod m) { return m == MatchMethod::Closest ? "closest" : "window_average"; }

}  // namespace

void write_manifest(const RunManifest& manifest, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_file((std::filesystem::path(out_dir) / "manifest.json").string(), manifest_to_json(manifest));
}

void write_table_csv(const Table& table, const std::string& path) {
    std::ostringstream out;
    out << csv_join(table.header) << "\n";
    for (const auto& row : table.rows) out << csv_join(row) << "\n";
    write_file(path, out.str());
}

std::string table_to_markdown(const Table& table) {
    std::ostringstream out;
    out << "|";
    for (const auto& h : table.header) out << " " << md_escape(h) << " |";
    out << "\n|";
    for (std::size_t i = 0; i < table.header.size(); ++i) out << " --- |";
    out << "\n";
    for (const auto& row : table.rows) {
        out << "|";
        for (const auto& cell : row) out << " " << md_escape(cell) << " |";
        out << "\n";
    }
    return out.str();
}

void write_table_markdown(const Table& table, const std::string& path, const std::string& title) {
    std::ostringstream out;
    out << "# " << title << "\n\n" << table_to_markdown(table) << "\nManifest: manifest.json\n";
    write_file(path, out.str());
}

void write_markdown_sections(const std::vector<std::pair<std::string, Table>>& sections, const std::string& path,
                             const std::string& title) {
    std::ostringstream out;
    out << "# " << title << "\n";
    for (const auto& [heading, table] : sections) {
        out << "\n## " << heading << "\n\n" << table_to_markdown(table);
    }
    out << "\nManifest: manifest.json\n";
    write_file(path, out.str());
}

std::string format_auc_ci(const AucEstimate& est) { return format_ci(est.auc, est.ci_low, est.ci_high); }

std::string format_ci(double value, double lo, double hi) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f (%.2f, %.2f)", value, lo, hi);
    return buf;
}

std::string format_p_value(double p) {
    if (p < 0.001) return "<0.001";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", p);
    return buf;
}

std::string format_n_over_pos(std::size_t n, std::size_t pos) {
    char buf[64];
    const double pct = n == 0 ? 0.0 : 100.0 * static_cast<double>(pos) / static_cast<double>(n);
    std::snprintf(buf, sizeof(buf), "%zu / %zu (%.1f%%)", n, pos, pct);
    return buf;
}

Table eval_results_table(const std::vector<EvalResult>& results) {
    Table t;
    t.header = {"target",      "primary",     "n",
                "n_pos",       "baseline_auc", "baseline_ci_low",
                "baseline_ci_high", "dls_auc", "dls_ci_low",
                "dls_ci_high", "improvement", "improvement_ci_low",
                "improvement_ci_high", "p_one_sided", "significance_alpha",
                "significant"};
    for (const auto& r : results) {
        t.rows.push_back({r.target_name, bool_str(r.primary), std::to_string(r.n), std::to_string(r.n_pos),
                          fmt(r.baseline.auc), fmt(r.baseline.ci_low), fmt(r.baseline.ci_high), fmt(r.dls.auc),
                          fmt(r.dls.ci_low), fmt(r.dls.ci_high), fmt(r.improvement), fmt(r.improvement_ci_low),
                          fmt(r.improvement_ci_high), fmt(r.p_one_sided), fmt(r.significance_alpha),
                          bool_str(r.significant)});
    }
    return t;
}

Table eval_results_display(const std::vector<EvalResult>& results) {
    Table t;
    t.header = {"Prediction", "n / N (%)", "Baseline AUC (CI)", "DLS AUC (CI)", "Improvement (CI)", "p"};
    for (const auto& r : results) {
        std::string p = format_p_value(r.p_one_sided);
        if (r.primary && r.significant) p += " \xE2\x80\xA0";  // dagger marks Bonferroni-significant primaries
        t.rows.push_back({r.target_name, format_n_over_pos(r.n, r.n_pos), format_auc_ci(r.baseline),
                          format_auc_ci(r.dls),
                          format_ci(r.improvement, r.improvement_ci_low, r.improvement_ci_high), p});
    }
    return t;
}

Table ppv_results_table(const std::vector<PpvResult>& results) {
    Table t;
    t.header = {"target",      "primary",      "n",
                "n_pos",       "k",            "baseline_ppv",
                "baseline_ci_low", "baseline_ci_high", "dls_ppv",
                "dls_ci_low",  "dls_ci_high",  "improvement",
                "improvement_ci_low", "improvement_ci_high", "p_superiority",
                "redraws"};
    for (const auto& r : results) {
        t.rows.push_back({r.target_name, bool_str(r.primary), std::to_string(r.n), std::to_string(r.n_pos),
                          std::to_string(r.k), fmt(r.baseline_ppv), fmt(r.baseline_ci_low), fmt(r.baseline_ci_high),
                          fmt(r.dls_ppv), fmt(r.dls_ci_low), fmt(r.dls_ci_high), fmt(r.improvement),
                          fmt(r.improvement_ci_low), fmt(r.improvement_ci_high), fmt(r.p_superiority),
                          std::to_string(r.redraws)});
    }
    return t;
}

Table ppv_results_display(const std::vector<PpvResult>& results) {
    Table t;
    t.header = {"Prediction", "n / N (%)", "Baseline PPV (CI)", "DLS PPV (CI)", "Improvement (CI)", "p"};
    for (const auto& r : results) {
        t.rows.push_back({r.target_name, format_n_over_pos(r.n, r.n_pos),
                          format_ci(r.baseline_ppv, r.baseline_ci_low, r.baseline_ci_high),
                          format_ci(r.dls_ppv, r.dls_ci_low, r.dls_ci_high),
                          format_ci(r.improvement, r.improvement_ci_low, r.improvement_ci_high),
                          format_p_value(r.p_superiority)});
    }
    return t;
}

Table subgroup_table(const std::string& target_name, const std::vector<SubgroupRow>& rows) {
    Table t;
    t.header = {"target",      "variable",    "bucket",
                "n",           "n_pos",       "omitted_small",
                "baseline_auc", "baseline_ci_low", "baseline_ci_high",
                "dls_auc",     "dls_ci_low",  "dls_ci_high",
                "improvement", "p_one_sided", "drop_gt_5pct",
                "p_above_005"};
    for (const auto& r : rows) {
        if (r.omitted_small) {
            t.rows.push_back({target_name, r.variable, r.bucket, std::to_string(r.n), std::to_string(r.n_pos),
                              "true", "", "", "", "", "", "", "", "", "", ""});
        } else {
            t.rows.push_back({target_name, r.variable, r.bucket, std::to_string(r.n), std::to_string(r.n_pos),
                              "false", fmt(r.baseline.auc), fmt(r.baseline.ci_low), fmt(r.baseline.ci_high),
                              fmt(r.dls.auc), fmt(r.dls.ci_low), fmt(r.dls.ci_high), fmt(r.improvement),
                              fmt(r.p_one_sided), bool_str(r.drop_gt_5pct), bool_str(r.p_above_005)});
        }
    }
    return t;
}

Table subgroup_display(const std::vector<SubgroupRow>& rows) {
    Table t;
    t.header = {"Subgroup", "n / N (%)", "Baseline AUC (CI)", "DLS AUC (CI)", "Improvement", "p", "Flags"};
    for (const auto& r : rows) {
        const std::string label = r.variable == "All" ? "All" : r.variable + ": " + r.bucket;
        if (r.omitted_small) {
            t.rows.push_back({label, format_n_over_pos(r.n, r.n_pos), "-", "-", "-", "-", "omitted (N < 25)"});
            continue;
        }
        std::string flags;
        if (r.drop_gt_5pct) flags = "drop>5pct";
        if (r.p_above_005) flags += flags.empty() ? "p>0.05" : ";p>0.05";
        char imp[32];
        std::snprintf(imp, sizeof(imp), "%.2f", r.improvement);
        t.rows.push_back({label, format_n_over_pos(r.n, r.n_pos), format_auc_ci(r.baseline), format_auc_ci(r.dls),
                          imp, format_p_value(r.p_one_sided), flags});
    }
    return t;
}

Table sensitivity_table(const std::string& target_name, const std::vector<SensitivityRow>& rows) {
    Table t;
    t.header = {"target",      "subset",      "n",
                "n_pos",       "baseline_auc", "baseline_ci_low",
                "baseline_ci_high", "dls_auc", "dls_ci_low",
                "dls_ci_high", "improvement", "improvement_ci_low",
                "improvement_ci_high", "p_one_sided"};
    for (const auto& row : rows) {
        const EvalResult& r = row.result;
        t.rows.push_back({target_name, row.label, std::to_string(r.n), std::to_string(r.n_pos), fmt(r.baseline.auc),
                          fmt(r.baseline.ci_low), fmt(r.baseline.ci_high), fmt(r.dls.auc), fmt(r.dls.ci_low),
                          fmt(r.dls.ci_high), fmt(r.improvement), fmt(r.improvement_ci_low),
                          fmt(r.improvement_ci_high), fmt(r.p_one_sided)});
    }
    return t;
}

Table sensitivity_display(const std::vector<SensitivityRow>& rows) {
    Table t;
    t.header = {"Subset", "n / N (%)", "Baseline AUC (CI)", "DLS AUC (CI)", "Improvement (CI)", "p"};
    for (const auto& row : rows) {
        const EvalResult& r = row.result;
        t.rows.push_back({row.label, format_n_over_pos(r.n, r.n_pos), format_auc_ci(r.baseline),
                          format_auc_ci(r.dls),
                          format_ci(r.improvement, r.improvement_ci_low, r.improvement_ci_high),
                          format_p_value(r.p_one_sided)});
    }
    return t;
}

Table adjusted_table(const AdjustedTable& table) {
    Table t;
    t.header = {"target", "variable", "odds_ratio", "ci_low", "ci_high", "p"};
    for (const auto& r : table.rows) {
        t.rows.push_back({table.target_name, r.variable, fmt(r.odds_ratio), fmt(r.ci_low), fmt(r.ci_high), fmt(r.p)});
    }
    return t;
}

Table adjusted_display(const AdjustedTable& table) {
    Table t;
    t.header = {"Variable", "Odds ratio (CI)", "p"};
    for (const auto& r : table.rows) {
        t.rows.push_back({r.variable, format_ci(r.odds_ratio, r.ci_low, r.ci_high), format_p_value(r.p)});
    }
    return t;
}

Table derived_table(const std::vector<DerivedRow>& rows) {
    Table t;
    t.header = {"target", "patient_id", "visit_id", "value", "day_gap", "method", "label", "class_index"};
    for (const auto& r : rows) {
        t.rows.push_back({r.target_name, r.patient_id, r.visit_id, fmt(r.value), std::to_string(r.day_gap),
                          method_str(r.method), bool_str(r.label), std::to_string(r.class_index)});
    }
    return t;
}

Table roc_table(const std::string& target_name, const TargetRocCurves& curves) {
    Table t;
    t.header = {"target", "model", "fpr", "tpr", "threshold"};
    for (const auto& p : curves.baseline) {
        t.rows.push_back({target_name, "baseline", fmt(p.fpr), fmt(p.tpr), fmt(p.threshold)});
    }
    for (const auto& p : curves.dls) {
        t.rows.push_back({target_name, "dls", fmt(p.fpr), fmt(p.tpr), fmt(p.threshold)});
    }
    return t;
}

}  // namespace eyelab
