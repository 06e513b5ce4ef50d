#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "eyelab/csv.hpp"
#include "eyelab/error.hpp"
#include "eyelab/report.hpp"

using namespace eyelab;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("eyelab_report_" + tag);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

EvalResult sample_result(bool primary, bool significant) {
    EvalResult r;
    r.target_name = "Hgb<11.0";
    r.primary = primary;
    r.n = 2186;
    r.n_pos = 202;
    r.baseline = {0.712, 0.0004, 0.6731, 0.7509, 202, 1984};
    r.dls = {0.8025, 0.0003, 0.7684, 0.8366, 202, 1984};
    r.improvement = r.dls.auc - r.baseline.auc;
    r.improvement_ci_low = 0.0421;
    r.improvement_ci_high = 0.1389;
    r.p_one_sided = significant ? 0.0004 : 0.2;
    r.significance_alpha = primary ? 0.05 / 9 : 0.05;
    r.significant = significant;
    return r;
}

}  // namespace

TEST_CASE("text and file digests agree on fnv-1a") {
    CHECK(text_digest_hex("") == "cbf29ce484222325");
    CHECK(text_digest_hex("a") == "af63dc4c8601ec8c");
    CHECK(text_digest_hex("hello") == "a430d84680aabd0b");
    CHECK(text_digest_hex("hello").size() == 16);

    TempDir dir("digest");
    const auto path = dir.path / "payload.bin";
    const std::string content = "target,reason\r\nsome bytes \x01\x02";
    {
        std::ofstream out(path, std::ios::binary);
        out << content;
    }
    CHECK(file_digest_hex(path.string()) == text_digest_hex(content));
    CHECK_THROWS_AS(file_digest_hex((dir.path / "absent.bin").string()), DataError);
}

TEST_CASE("timestamps honor the reproducible-build epoch") {
    setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
    CHECK(current_timestamp_utc() == "2023-11-14T22:13:20Z");
    setenv("SOURCE_DATE_EPOCH", "0", 1);
    CHECK(current_timestamp_utc() == "1970-01-01T00:00:00Z");
    unsetenv("SOURCE_DATE_EPOCH");
    // Without the override the clock is live; just check the shape.
    const std::string now = current_timestamp_utc();
    CHECK(now.size() == 20);
    CHECK(now[4] == '-');
    CHECK(now[10] == 'T');
    CHECK(now.back() == 'Z');
}

TEST_CASE("manifests serialize with stable field order") {
    RunManifest m;
    m.command = "evaluate --data d";
    m.tool_version = tool_version();
    m.seed = 5;
    m.config_digest = "";
    m.input_digests = {{"a.csv", "00ff00ff00ff00ff"}};
    m.timestamp = "2024-01-01T00:00:00Z";
    const std::string expected = R"({
  "command": "evaluate --data d",
  "tool_version": "0.1.0",
  "seed": 5,
  "config_digest": "-",
  "input_digests": {
    "a.csv": "00ff00ff00ff00ff"
  },
  "timestamp": "2024-01-01T00:00:00Z"
}
)";
    CHECK(manifest_to_json(m) == expected);

    TempDir dir("manifest");
    const auto nested = dir.path / "deep" / "out";
    write_manifest(m, nested.string());
    CHECK(slurp(nested / "manifest.json") == expected);
}

TEST_CASE("csv tables quote exactly the fields that need it") {
    Table t;
    t.header = {"a", "b"};
    t.rows = {{"1", "x,y"}, {"2", "he said \"hi\""}, {"3", "line\nbreak"}};
    TempDir dir("csv");
    const auto path = dir.path / "t.csv";
    write_table_csv(t, path.string());
    CHECK(slurp(path) == "a,b\n1,\"x,y\"\n2,\"he said \"\"hi\"\"\"\n3,\"line\nbreak\"\n");

    // The written file re-parses to the same cells.
    const CsvTable back = read_csv(path.string());
    CHECK(back.header == t.header);
    REQUIRE(back.rows.size() == 3);
    CHECK(back.rows[1][1] == "he said \"hi\"");
    CHECK(back.rows[2][1] == "line\nbreak");
}

TEST_CASE("markdown tables escape pipes and close with the manifest line") {
    Table t;
    t.header = {"a", "b|c"};
    t.rows = {{"1", "2"}};
    CHECK(table_to_markdown(t) == "| a | b\\|c |\n| --- | --- |\n| 1 | 2 |\n");

    TempDir dir("md");
    const auto path = dir.path / "t.md";
    write_table_markdown(t, path.string(), "Results");
    const std::string text = slurp(path);
    CHECK(text.rfind("# Results\n\n", 0) == 0);
    CHECK(text.find("| a | b\\|c |") != std::string::npos);
    CHECK(text.find("\nManifest: manifest.json\n") != std::string::npos);

    const auto multi = dir.path / "m.md";
    write_markdown_sections({{"First", t}, {"Second", t}}, multi.string(), "Bundle");
    const std::string bundle = slurp(multi);
    CHECK(bundle.rfind("# Bundle\n", 0) == 0);
    CHECK(bundle.find("\n## First\n") != std::string::npos);
    CHECK(bundle.find("\n## Second\n") != std::string::npos);
    CHECK(bundle.find("\nManifest: manifest.json\n") != std::string::npos);
}

TEST_CASE("display formatters match the published style") {
    AucEstimate est;
    est.auc = 0.8025;
    est.ci_low = 0.7684;
    est.ci_high = 0.8366;
    CHECK(format_auc_ci(est) == "0.80 (0.77, 0.84)");
    CHECK(format_ci(0.123456, 0.08, 0.159) == "0.12 (0.08, 0.16)");
    CHECK(format_ci(-0.05, -0.1, 0.0) == "-0.05 (-0.10, 0.00)");

    CHECK(format_p_value(0.0) == "<0.001");
    CHECK(format_p_value(0.0009999) == "<0.001");
    CHECK(format_p_value(0.001) == "0.001");
    CHECK(format_p_value(0.0456) == "0.046");
    CHECK(format_p_value(0.5) == "0.500");
    CHECK(format_p_value(1.0) == "1.000");

    CHECK(format_n_over_pos(2186, 202) == "2186 / 202 (9.2%)");
    CHECK(format_n_over_pos(0, 0) == "0 / 0 (0.0%)");
    CHECK(format_n_over_pos(100, 100) == "100 / 100 (100.0%)");
}

TEST_CASE("evaluation tables carry machine and display layouts") {
    const EvalResult r = sample_result(true, true);
    const Table machine = eval_results_table({r});
    CHECK(machine.header ==
          std::vector<std::string>{"target", "primary", "n", "n_pos", "baseline_auc", "baseline_ci_low",
                                   "baseline_ci_high", "dls_auc", "dls_ci_low", "dls_ci_high", "improvement",
                                   "improvement_ci_low", "improvement_ci_high", "p_one_sided", "significance_alpha",
                                   "significant"});
    REQUIRE(machine.rows.size() == 1);
    const auto& row = machine.rows[0];
    REQUIRE(row.size() == machine.header.size());
    CHECK(row[0] == "Hgb<11.0");
    CHECK(row[1] == "true");
    CHECK(row[2] == "2186");
    CHECK(row[3] == "202");
    CHECK(row[4] == format_double_shortest(0.712));
    CHECK(row[7] == format_double_shortest(0.8025));
    CHECK(row[13] == format_double_shortest(0.0004));
    CHECK(row[15] == "true");

    const Table display = eval_results_display({r});
    CHECK(display.header == std::vector<std::string>{"Prediction", "n / N (%)", "Baseline AUC (CI)", "DLS AUC (CI)",
                                                     "Improvement (CI)", "p"});
    REQUIRE(display.rows.size() == 1);
    CHECK(display.rows[0][1] == "2186 / 202 (9.2%)");
    // Bonferroni-significant primaries earn the dagger.
    CHECK(display.rows[0][5] == "<0.001 \xE2\x80\xA0");
    const Table plain = eval_results_display({sample_result(false, false)});
    CHECK(plain.rows[0][5] == "0.200");
}

TEST_CASE("subgroup tables blank out omitted buckets") {
    SubgroupRow all;
    all.variable = "All";
    all.bucket = "All";
    all.n = 500;
    all.n_pos = 60;
    all.baseline = {0.7, 0.001, 0.65, 0.75, 60, 440};
    all.dls = {0.8, 0.001, 0.76, 0.84, 60, 440};
    all.improvement = 0.1;
    all.p_one_sided = 0.01;
    SubgroupRow small;
    small.variable = "Sex";
    small.bucket = "Male";
    small.n = 30;
    small.n_pos = 4;
    small.omitted_small = true;
    SubgroupRow flagged = all;
    flagged.variable = "Sex";
    flagged.bucket = "Female";
    flagged.improvement = 0.02;
    flagged.p_one_sided = 0.2;
    flagged.drop_gt_5pct = true;
    flagged.p_above_005 = true;

    const Table machine = subgroup_table("Hgb<11.0", {all, small, flagged});
    REQUIRE(machine.rows.size() == 3);
    CHECK(machine.header.size() == 16);
    CHECK(machine.rows[1][5] == "true");
    for (std::size_t c = 6; c < 16; ++c) CHECK(machine.rows[1][c] == "");
    CHECK(machine.rows[2][14] == "true");
    CHECK(machine.rows[2][15] == "true");

    const Table display = subgroup_display({all, small, flagged});
    CHECK(display.rows[0][0] == "All");
    CHECK(display.rows[1][0] == "Sex: Male");
    CHECK(display.rows[1][6] == "omitted (N < 25)");
    CHECK(display.rows[2][6] == "drop>5pct;p>0.05");
}

TEST_CASE("sensitivity rows are keyed by subset label") {
    SensitivityRow all{"All", sample_result(true, true)};
    SensitivityRow capped{"Time delta < 90", sample_result(true, false)};
    const Table t = sensitivity_table("Hgb<11.0", {all, capped});
    CHECK(t.header[0] == "target");
    CHECK(t.header[1] == "subset");
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "All");
    CHECK(t.rows[1][1] == "Time delta < 90");
    CHECK(t.rows[0][0] == "Hgb<11.0");

    const Table d = sensitivity_display({all});
    CHECK(d.header[0] == "Subset");
    CHECK(d.rows[0][0] == "All");
}

TEST_CASE("adjusted, derived, and roc tables map their fields") {
    AdjustedTable at;
    at.target_name = "Hgb<11.0";
    at.rows = {{"Age", 1.05, 1.02, 1.08, 0.0002}, {"DLS", 2.4, 1.9, 3.0, 0.00001}};
    const Table machine = adjusted_table(at);
    CHECK(machine.header == std::vector<std::string>{"target", "variable", "odds_ratio", "ci_low", "ci_high", "p"});
    REQUIRE(machine.rows.size() == 2);
    CHECK(machine.rows[1][1] == "DLS");
    CHECK(machine.rows[1][2] == format_double_shortest(2.4));
    const Table display = adjusted_display(at);
    CHECK(display.rows[0][1] == "1.05 (1.02, 1.08)");
    CHECK(display.rows[1][2] == "<0.001");

    DerivedRow dr;
    dr.target_name = "Hgb<11.0";
    dr.patient_id = "p01";
    dr.visit_id = "v01";
    dr.value = 10.5;
    dr.day_gap = 12;
    dr.method = MatchMethod::WindowAverage;
    dr.label = true;
    dr.class_index = 2;
    const Table dt = derived_table({dr});
    CHECK(dt.header == std::vector<std::string>{"target", "patient_id", "visit_id", "value", "day_gap", "method",
                                                "label", "class_index"});
    CHECK(dt.rows[0] == std::vector<std::string>{"Hgb<11.0", "p01", "v01", format_double_shortest(10.5), "12",
                                                 "window_average", "true", "2"});

    TargetRocCurves curves;
    curves.baseline = {{0.0, 0.0, 1.5}, {0.5, 1.0, 0.25}};
    curves.dls = {{0.0, 0.0, 2.0}};
    const Table rt = roc_table("Hgb<11.0", curves);
    CHECK(rt.header == std::vector<std::string>{"target", "model", "fpr", "tpr", "threshold"});
    REQUIRE(rt.rows.size() == 3);
    CHECK(rt.rows[0][1] == "baseline");
    CHECK(rt.rows[2][1] == "dls");
    CHECK(rt.rows[1][2] == format_double_shortest(0.5));
}
