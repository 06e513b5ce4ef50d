#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eyelab/error.hpp"
#include "eyelab/pipeline.hpp"
#include "eyelab/rng.hpp"
#include "eyelab/roc.hpp"
#include "eyelab/stats.hpp"
#include "eyelab/synth.hpp"
#include "eyelab/targets.hpp"

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
        path = std::filesystem::temp_directory_path() / ("eyelab_synth_" + tag);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("binormal separation inverts the normal-model AUC") {
    for (double auc : {0.55, 0.65, 0.75, 0.80, 0.85, 0.95}) {
        CAPTURE(auc);
        const double delta = binormal_separation(auc);
        CHECK(std::abs(normal_cdf(delta / std::sqrt(2.0)) - auc) <= 1e-10);
    }
    CHECK(binormal_separation(0.5) == 0.0);
}

TEST_CASE("liability loading realizes the covariate AUC") {
    const double rho = calibrate_liability_loading(0.75, 0.2);
    CHECK(rho > 0.0);
    CHECK(rho < 1.0);

    // Monte-Carlo check of the implied covariate-vs-label AUC.
    const int n = 60000;
    Rng rng(123);
    const double tau = normal_quantile(0.8);
    std::vector<ScoredSample> samples;
    samples.reserve(n);
    const double resid = std::sqrt(1.0 - rho * rho);
    for (int i = 0; i < n; ++i) {
        const double a = rng.normal();
        const bool label = rho * a + resid * rng.normal() > tau;
        samples.push_back({std::to_string(i), a, label});
    }
    CHECK(std::abs(auc_midrank(samples) - 0.75) < 0.012);

    // A null AUC needs no loading, and stronger targets need more.
    CHECK(calibrate_liability_loading(0.5, 0.2) == 0.0);
    CHECK(calibrate_liability_loading(0.85, 0.2) > calibrate_liability_loading(0.65, 0.2));

    CHECK_THROWS_AS(calibrate_liability_loading(0.75, 0.0), DataError);
    CHECK_THROWS_AS(calibrate_liability_loading(0.75, 1.0), DataError);
    CHECK_THROWS_AS(calibrate_liability_loading(0.4, 0.2), DataError);
    CHECK_THROWS_AS(calibrate_liability_loading(0.999, 0.2), DataError);
}

TEST_CASE("generation is deterministic and seed-sensitive") {
    SynthConfig cfg;
    cfg.n_patients = 300;
    cfg.seed = 42;

    const SynthOutput a = generate_cohort(cfg);
    const SynthOutput b = generate_cohort(cfg);
    TempDir da("a"), db("b");
    write_synth_dir(a, da.path.string());
    write_synth_dir(b, db.path.string());

    std::set<std::string> names;
    for (const auto& e : std::filesystem::directory_iterator(da.path)) names.insert(e.path().filename().string());
    REQUIRE(names.count("patients.csv") == 1);
    REQUIRE(names.count("ground_truth.json") == 1);
    for (const auto& name : names) {
        CAPTURE(name);
        CHECK(slurp(da.path / name) == slurp(db.path / name));
    }

    // The same recipe under a different seed is a different population.
    SynthConfig other = cfg;
    other.seed = 43;
    TempDir dc("c");
    write_synth_dir(generate_cohort(other), dc.path.string());
    CHECK(slurp(dc.path / "patients.csv") != slurp(da.path / "patients.csv"));
}

TEST_CASE("defaults plant the nine primary targets") {
    SynthConfig cfg;
    cfg.n_patients = 150;
    cfg.seed = 5;
    const SynthOutput out = generate_cohort(cfg);

    std::set<std::string> planted;
    for (const auto& t : out.truths) planted.insert(t.target_name);
    std::set<std::string> expected;
    for (const auto& row : primary_target_rows(builtin_registry())) expected.insert(row.row_name());
    CHECK(planted == expected);
    CHECK(planted.count("eGFR<60.0") == 1);

    // The eGFR plant is expressed through creatinine, never directly.
    std::set<Analyte> measured;
    for (const auto& m : out.cohort.measurements) measured.insert(m.analyte);
    CHECK(measured.count(Analyte::Creatinine) == 1);
    CHECK(measured.count(Analyte::EGFR) == 0);

    // Every patient gets 1..3 visits dated within the recruitment window.
    std::map<std::string, int> visit_count;
    for (const auto& v : out.cohort.visits) ++visit_count[v.patient_id];
    for (const auto& [pid, count] : visit_count) {
        CHECK(count >= 1);
        CHECK(count <= 3);
    }
    CHECK(visit_count.size() == 150);
}

TEST_CASE("planted prevalence and separations are realized") {
    SynthConfig cfg;
    cfg.n_patients = 10000;
    cfg.min_visits = 1;
    cfg.max_visits = 1;
    cfg.plants = {{"Hgb<11.0", 0.25, 0.80, 0.60}};
    cfg.n_members = 1;
    cfg.member_sigma = 0.0;
    cfg.p_both_eyes = 0.0;
    cfg.p_measured = 1.0;
    cfg.gap_max_days = 100;
    cfg.seed = 7;
    const SynthOutput out = generate_cohort(cfg);

    REQUIRE(out.truths.size() == 1);
    const PlantedTruth& t = out.truths[0];
    CHECK(t.target_name == "Hgb<11.0");
    CHECK(t.delta == binormal_separation(0.80));
    CHECK(t.tau == normal_quantile(0.75));
    // The marginal is chosen so that P(value < cutoff) equals the
    // prevalence.
    CHECK(std::abs(normal_cdf((11.0 - t.value_mean) / t.value_sd) - 0.25) <= 1e-12);

    const auto target = *find_target_row(builtin_registry(), "Hgb<11.0");
    const auto rows = derive_labels(out.cohort, {target});
    REQUIRE(rows.size() == 10000);  // one visit, one lab per patient
    std::size_t positives = 0;
    for (const auto& row : rows) positives += row.label ? 1 : 0;
    const double prevalence = static_cast<double>(positives) / static_cast<double>(rows.size());
    CHECK(std::abs(prevalence - 0.25) < 0.01);

    // Ensembled scores against the labels sit at the planted AUC; the
    // patient's age alone sits at the planted baseline AUC.
    std::map<std::string, bool> label_by_visit;
    for (const auto& row : rows) label_by_visit[row.visit_id] = row.label;
    std::vector<ScoredSample> dls, age;
    for (const auto& e : ensemble_scores(out.cohort)) {
        dls.push_back({e.patient_id, e.score, label_by_visit.at(e.visit_id)});
    }
    for (const auto& row : rows) {
        age.push_back({row.patient_id, out.cohort.find_patient(row.patient_id)->age_years, row.label});
    }
    CHECK(std::abs(auc_midrank(dls) - 0.80) < 0.02);
    CHECK(std::abs(auc_midrank(age) - 0.60) < 0.02);

    // Lab dates stay inside the configured gap and fall on both sides.
    int before = 0, after = 0;
    for (const auto& row : rows) CHECK(row.day_gap <= 100);
    std::map<std::string, Date> visit_date;
    for (const auto& v : out.cohort.visits) visit_date[v.patient_id] = v.visit_date;
    for (const auto& m : out.cohort.measurements) {
        const int signed_gap = m.measured_date.days - visit_date.at(m.patient_id).days;
        CHECK(std::abs(signed_gap) <= 100);
        before += signed_gap < 0 ? 1 : 0;
        after += signed_gap > 0 ? 1 : 0;
    }
    CHECK(before > 1000);
    CHECK(after > 1000);
}

TEST_CASE("a patient's label side holds across every visit") {
    SynthConfig cfg;
    cfg.n_patients = 400;
    cfg.min_visits = 2;
    cfg.max_visits = 3;
    cfg.plants = {{"Hgb<11.0", 0.3, 0.8, 0.6}};
    cfg.p_measured = 1.0;
    cfg.seed = 9;
    const SynthOutput out = generate_cohort(cfg);

    const auto target = *find_target_row(builtin_registry(), "Hgb<11.0");
    const auto rows = derive_labels(out.cohort, {target});
    std::map<std::string, std::set<bool>> labels_by_patient;
    std::map<std::string, std::set<double>> values_by_patient;
    for (const auto& row : rows) {
        labels_by_patient[row.patient_id].insert(row.label);
        values_by_patient[row.patient_id].insert(row.value);
    }
    for (const auto& [pid, labels] : labels_by_patient) {
        CAPTURE(pid);
        CHECK(labels.size() == 1);  // no label flips across visits
        CHECK(values_by_patient[pid].size() == 1);
    }
}

TEST_CASE("bmi plants emit height and weight sources") {
    SynthConfig cfg;
    cfg.n_patients = 200;
    cfg.plants = {{"BMI>=30.0", 0.35, 0.75, 0.6}};
    cfg.p_measured = 1.0;
    cfg.seed = 31;
    const SynthOutput out = generate_cohort(cfg);

    std::set<Analyte> measured;
    for (const auto& m : out.cohort.measurements) measured.insert(m.analyte);
    CHECK(measured.count(Analyte::Height) == 1);
    CHECK(measured.count(Analyte::Weight) == 1);
    CHECK(measured.count(Analyte::BMI) == 0);

    // The derived BMI reconstructs the planted prevalence direction.
    const auto target = *find_target_row(builtin_registry(), "BMI>=30.0");
    const auto rows = derive_labels(out.cohort, {target});
    CHECK(!rows.empty());
    std::size_t positives = 0;
    for (const auto& row : rows) positives += row.label ? 1 : 0;
    const double fraction = static_cast<double>(positives) / static_cast<double>(rows.size());
    CHECK(fraction > 0.2);
    CHECK(fraction < 0.5);
}

TEST_CASE("egfr planting requires known sex") {
    SynthConfig cfg;
    cfg.n_patients = 50;
    cfg.plants = {{"eGFR<60.0", 0.2, 0.8, 0.6}};
    cfg.sex_proportions = {{Sex::Female, 0.5}, {Sex::Unknown, 0.5}};
    CHECK_THROWS_AS(generate_cohort(cfg), DataError);
}

TEST_CASE("config json covers every field and rejects unknown keys") {
    const std::string text = R"({
        "n_patients": 77,
        "min_visits": 2,
        "max_visits": 4,
        "age_mean": 58.5,
        "age_sd": 9.0,
        "p_diabetic": 0.9,
        "years_dm_mean": 8.0,
        "p_years_dm_present": 0.8,
        "severity_weight": 0.25,
        "n_members": 3,
        "member_sigma": 0.2,
        "p_both_eyes": 0.7,
        "p_annotated": 0.65,
        "p_cataract": 0.15,
        "p_iol": 0.02,
        "p_measured": 0.85,
        "gap_max_days": 120,
        "seed": 981,
        "sex_proportions": {"Female": 0.6, "Male": 0.4},
        "race_proportions": {"White": 0.5, "Black": 0.5},
        "dataset_proportions": {"DevTrain": 0.8, "ValA": 0.2},
        "extra_analytes": ["Systolic BP", "Weight"],
        "marginal_overrides": {"Hgb": {"mean": 13.0, "sd": 1.4}},
        "plants": [{"target_name": "Hgb<11.0", "prevalence": 0.2, "dls_auc": 0.82, "baseline_auc": 0.61}]
    })";
    const SynthConfig cfg = synth_config_from_json(text, "test");
    CHECK(cfg.n_patients == 77);
    CHECK(cfg.min_visits == 2);
    CHECK(cfg.max_visits == 4);
    CHECK(cfg.age_mean == 58.5);
    CHECK(cfg.p_diabetic == 0.9);
    CHECK(cfg.severity_weight == 0.25);
    CHECK(cfg.n_members == 3);
    CHECK(cfg.member_sigma == 0.2);
    CHECK(cfg.gap_max_days == 120);
    CHECK(cfg.seed == 981);
    REQUIRE(cfg.sex_proportions.size() == 2);
    CHECK(cfg.sex_proportions[0].first == Sex::Female);
    CHECK(cfg.sex_proportions[0].second == 0.6);
    REQUIRE(cfg.race_proportions.size() == 2);
    REQUIRE(cfg.dataset_proportions.size() == 2);
    CHECK(cfg.dataset_proportions[0].first.kind == DatasetId::Kind::DevTrain);
    REQUIRE(cfg.extra_analytes.size() == 2);
    CHECK(cfg.extra_analytes[0] == Analyte::SystolicBP);
    REQUIRE(cfg.marginal_overrides.size() == 1);
    CHECK(cfg.marginal_overrides[0].analyte == Analyte::Hgb);
    CHECK(cfg.marginal_overrides[0].mean == 13.0);
    REQUIRE(cfg.plants.size() == 1);
    CHECK(cfg.plants[0].target_name == "Hgb<11.0");
    CHECK(cfg.plants[0].prevalence == 0.2);
    CHECK(cfg.plants[0].dls_auc == 0.82);

    // Absent fields keep their defaults.
    const SynthConfig bare = synth_config_from_json("{}", "test");
    CHECK(bare.n_patients == 1000);
    CHECK(bare.seed == 1);

    CHECK_THROWS_AS(synth_config_from_json("{\"n_patient\": 5}", "test"), DataError);
    CHECK_THROWS_AS(synth_config_from_json("{\"n_patients\": \"many\"}", "test"), DataError);
    CHECK_THROWS_AS(synth_config_from_json("[1,2]", "test"), DataError);
    CHECK_THROWS_AS(synth_config_from_json("{", "test"), DataError);
    CHECK_THROWS_AS(
        synth_config_from_json("{\"plants\": [{\"target_name\": \"Hgb<11.0\", \"auc\": 0.8}]}", "test"),
        DataError);
    CHECK_THROWS_AS(synth_config_from_json("{\"extra_analytes\": [\"Unobtainium\"]}", "test"), DataError);
}

TEST_CASE("ground truth json carries the planted parameters") {
    SynthConfig cfg;
    cfg.n_patients = 60;
    cfg.plants = {{"Hgb<11.0", 0.2, 0.8, 0.6}};
    cfg.seed = 55;
    const SynthOutput out = generate_cohort(cfg);
    const nlohmann::json j = nlohmann::json::parse(synth_truth_to_json(out));
    CHECK(j.at("seed").get<std::uint64_t>() == 55);
    CHECK(j.at("n_patients").get<int>() == 60);
    REQUIRE(j.at("plants").size() == 1);
    const auto& p = j.at("plants")[0];
    CHECK(p.at("target_name").get<std::string>() == "Hgb<11.0");
    CHECK(p.at("prevalence").get<double>() == 0.2);
    CHECK(p.at("dls_auc").get<double>() == 0.8);
    CHECK(p.at("delta").get<double>() == binormal_separation(0.8));
    CHECK(p.contains("tau"));
    CHECK(p.contains("value_mean"));
    CHECK(p.contains("value_sd"));
}
