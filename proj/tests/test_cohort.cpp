#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "eyelab/cohort.hpp"
#include "eyelab/date.hpp"
#include "eyelab/error.hpp"

using namespace eyelab;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("eyelab-test-" + tag + "-" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name, const std::string& content) const {
        const fs::path p = path / name;
        std::ofstream out(p, std::ios::binary);
        out << content;
        return p.string();
    }
};

Measurement meas(Analyte a, double value, const std::string& date) {
    return {"p1", a, value, parse_date(date)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kPatientsCsv =
    "patient_id,sex,race_ethnicity,age,years_with_diabetes,diabetic,dataset_id\n"
    "p2,Male,White,61.5,10,true,ValA\n"
    "p1,Female,Black,48.25,,false,DevTrain\n";

const char* kVisitsCsv =
    "visit_id,patient_id,visit_date,cataract,iol\n"
    "v2,p1,2021-06-01,true,\n"
    "v1,p1,2021-01-15,false,false\n"
    "v3,p2,2021-03-10,,true\n";

const char* kMeasurementsCsv =
    "patient_id,analyte,value,measured_date\n"
    "p1,HbA1c,7.5,2021-01-20\n"
    "p1,Creatinine,1.1,2021-05-20\n"
    "p2,Systolic BP,141,2021-03-01\n"
    "p2,Systolic BP,135,2021-02-20\n";

const char* kScoresCsv =
    "image_id,visit_id,patient_id,eye,model_member,target_name,score\n"
    "img2,v1,p1,Right,m0,Hgb<11.0,0.4\n"
    "img1,v1,p1,Left,m0,Hgb<11.0,0.8\n"
    "img1,v1,p1,Left,m1,Hgb<11.0,0.6\n";

}  // namespace

TEST_CASE("date parsing and arithmetic") {
    CHECK(format_date(parse_date("2021-02-28")) == "2021-02-28");
    CHECK(days_between(parse_date("2020-02-28"), parse_date("2020-03-01")) == 2);  // leap year
    CHECK(days_between(parse_date("2021-02-28"), parse_date("2021-03-01")) == 1);
    CHECK(days_between(parse_date("2021-06-01"), parse_date("2021-05-20")) == -12);
    CHECK(parse_date("1970-01-01").days == 0);

    CHECK_THROWS_AS(parse_date("2021-02-30"), DataError);
    CHECK_THROWS_AS(parse_date("2021-13-01"), DataError);
    CHECK_THROWS_AS(parse_date("2021-1-01"), DataError);
    CHECK_THROWS_AS(parse_date("21-01-01"), DataError);
    CHECK_THROWS_AS(parse_date("2021/01/01"), DataError);
    CHECK_THROWS_AS(parse_date(""), DataError);
}

TEST_CASE("analyte tables") {
    CHECK(all_analytes().size() == kAnalyteCount);
    for (Analyte a : all_analytes()) CHECK(parse_analyte(to_string(a), "t") == a);
    CHECK_THROWS_AS(parse_analyte("Glucose", "t"), DataError);

    CHECK(analyte_window_days(Analyte::INR) == 30);
    CHECK(analyte_window_days(Analyte::HbA1c) == 90);
    CHECK(analyte_window_days(Analyte::SystolicBP) == 90);
    CHECK(analyte_window_days(Analyte::Weight) == 90);
    CHECK(analyte_window_days(Analyte::Height) == 365);
    CHECK(analyte_window_days(Analyte::ACR) == 180);
    CHECK(analyte_window_days(Analyte::EGFR) == 180);

    int averaged = 0;
    for (Analyte a : all_analytes()) averaged += is_window_averaged(a) ? 1 : 0;
    CHECK(averaged == 6);
    for (Analyte a : {Analyte::SystolicBP, Analyte::DiastolicBP, Analyte::MeanArterialPressure,
                      Analyte::PulsePressure, Analyte::Weight, Analyte::Height})
        CHECK(is_window_averaged(a));
    CHECK_FALSE(is_window_averaged(Analyte::HbA1c));

    CHECK(analyte_unit(Analyte::ACR) == "mg/g");
    CHECK(analyte_unit(Analyte::Platelet) == "10^3/uL");
    CHECK(analyte_unit(Analyte::WBC) == "10^3/uL");
    CHECK(analyte_unit(Analyte::Potassium) == "mEq/L");
    CHECK(analyte_unit(Analyte::TSH) == "mU/L");
    CHECK(analyte_unit(Analyte::EGFR) == "mL/min/1.73m^2");
    CHECK(analyte_unit(Analyte::INR) == "ratio");

    CHECK(to_string(Analyte::NonHDL) == "non-HDL");
    CHECK(to_string(Analyte::MeanArterialPressure) == "Mean arterial pressure");
}

TEST_CASE("enum token round trips") {
    for (Sex s : {Sex::Female, Sex::Male, Sex::Unknown}) CHECK(parse_sex(to_string(s), "t") == s);
    CHECK(parse_sex("", "t") == Sex::Unknown);
    CHECK_THROWS_AS(parse_sex("F", "t"), DataError);

    for (RaceEthnicity r : {RaceEthnicity::Hispanic, RaceEthnicity::White, RaceEthnicity::Black,
                            RaceEthnicity::AsianPacificIslander, RaceEthnicity::NativeAmerican, RaceEthnicity::Other,
                            RaceEthnicity::Unknown})
        CHECK(parse_race(to_string(r), "t") == r);

    for (Eye e : {Eye::Left, Eye::Right, Eye::Unknown}) CHECK(parse_eye(to_string(e), "t") == e);

    for (const std::string tok : {"DevTrain", "DevTune", "ValA", "ValB", "ValC", "clinic-7"}) {
        CHECK(to_string(parse_dataset_id(tok, "t")) == tok);
    }
    CHECK(parse_dataset_id("clinic-7", "t").kind == DatasetId::Kind::Custom);
    CHECK_THROWS_AS(parse_dataset_id("", "t"), DataError);
}

TEST_CASE("eGFR equation against reference values") {
    struct Case {
        double scr, age;
        Sex sex;
        double expect;
    };
    // Reference outputs of the race-free 2021 creatinine equation.
    const Case grid[] = {
        {0.5, 30, Sex::Male, 142.9693},   {0.5, 50, Sex::Female, 114.1919}, {0.5, 70, Sex::Male, 111.4814},
        {0.7, 30, Sex::Male, 127.9872},   {0.7, 50, Sex::Female, 105.2976}, {0.7, 70, Sex::Male, 99.7990},
        {0.9, 30, Sex::Male, 117.8306},   {0.9, 50, Sex::Female, 77.8834},  {0.9, 70, Sex::Male, 91.8793},
        {1.2, 30, Sex::Male, 83.4318},    {1.2, 50, Sex::Female, 55.1466},  {1.2, 70, Sex::Male, 65.0566},
        {1.8, 30, Sex::Male, 51.2888},    {1.8, 50, Sex::Female, 33.9007},  {1.8, 70, Sex::Male, 39.9928},
        {2.5, 30, Sex::Male, 34.5797},    {2.5, 50, Sex::Female, 22.8564},  {2.5, 70, Sex::Male, 26.9638},
        {4.0, 30, Sex::Male, 19.6733},    {4.0, 50, Sex::Female, 13.0036},
    };
    for (const auto& c : grid) {
        CHECK(std::abs(compute_egfr_2021(c.scr, c.age, c.sex) - c.expect) < 5e-4);
    }

    // Monotone in creatinine and in age, for both sexes.
    for (Sex sex : {Sex::Female, Sex::Male}) {
        double prev = 1e9;
        for (double scr = 0.3; scr <= 5.0; scr += 0.1) {
            const double e = compute_egfr_2021(scr, 55, sex);
            CHECK(e <= prev);
            prev = e;
        }
        prev = 1e9;
        for (double age = 18; age <= 95; age += 1.0) {
            const double e = compute_egfr_2021(1.0, age, sex);
            CHECK(e < prev);
            prev = e;
        }
    }

    CHECK_THROWS_AS(compute_egfr_2021(1.0, 50, Sex::Unknown), DataError);
    CHECK_THROWS_AS(compute_egfr_2021(0.0, 50, Sex::Male), DataError);
    CHECK_THROWS_AS(compute_egfr_2021(1.0, 0.0, Sex::Male), DataError);
}

TEST_CASE("BMI") {
    CHECK(std::abs(compute_bmi(70.0, 1.75) - 22.857142857142858) <= 1e-12);
    CHECK_THROWS_AS(compute_bmi(0.0, 1.75), DataError);
    CHECK_THROWS_AS(compute_bmi(70.0, 0.0), DataError);
}

TEST_CASE("closest-measurement matching") {
    const Date visit = parse_date("2021-06-01");
    std::vector<Measurement> series = {
        meas(Analyte::HbA1c, 6.8, "2021-03-10"),  // 83 days before
        meas(Analyte::HbA1c, 7.2, "2021-05-20"),  // 12 days before
        meas(Analyte::HbA1c, 7.9, "2021-06-13"),  // 12 days after
        meas(Analyte::HbA1c, 8.4, "2021-09-20"),  // 111 days after, outside 90
    };

    auto m = match_measurement(visit, series, Analyte::HbA1c);
    REQUIRE(m.has_value());
    CHECK(m->value == 7.2);  // equidistant pair resolves to the earlier date
    CHECK(m->day_gap == 12);
    CHECK(m->method == MatchMethod::Closest);

    // A gap equal to the window still qualifies; one day more does not.
    std::vector<Measurement> edge = {meas(Analyte::HbA1c, 6.0, "2021-03-03")};  // exactly 90 days
    CHECK(match_measurement(visit, edge, Analyte::HbA1c).has_value());
    std::vector<Measurement> past = {meas(Analyte::HbA1c, 6.0, "2021-03-02")};  // 91 days
    CHECK_FALSE(match_measurement(visit, past, Analyte::HbA1c).has_value());

    // max_window_days tightens but never widens.
    auto tight = match_measurement(visit, series, Analyte::HbA1c, 10);
    CHECK_FALSE(tight.has_value());
    auto wide = match_measurement(visit, edge, Analyte::HbA1c, 365);
    CHECK(wide.has_value());
    std::vector<Measurement> inr = {meas(Analyte::INR, 1.2, "2021-05-01")};  // 31 days
    CHECK_FALSE(match_measurement(visit, inr, Analyte::INR).has_value());
    CHECK(match_measurement(visit, inr, Analyte::INR, 365) == std::nullopt);

    CHECK_FALSE(match_measurement(visit, {}, Analyte::HbA1c).has_value());
    std::vector<Measurement> mixed = {meas(Analyte::HbA1c, 6.0, "2021-06-01"), meas(Analyte::TSH, 2.0, "2021-06-01")};
    CHECK_THROWS_AS(match_measurement(visit, mixed, Analyte::HbA1c), DataError);
}

TEST_CASE("window averaging") {
    const Date visit = parse_date("2021-06-01");
    std::vector<Measurement> sbp = {
        meas(Analyte::SystolicBP, 120, "2021-05-22"),  // 10 days
        meas(Analyte::SystolicBP, 130, "2021-03-13"),  // 80 days
        meas(Analyte::SystolicBP, 150, "2021-02-01"),  // 120 days, outside
    };
    auto avg = window_average(visit, sbp, Analyte::SystolicBP);
    REQUIRE(avg.has_value());
    CHECK(avg->value == 125.0);
    CHECK(avg->day_gap == 10);  // the smallest gap among averaged points
    CHECK(avg->method == MatchMethod::WindowAverage);

    // Tightening the window to 30 days leaves one point.
    auto one = window_average(visit, sbp, Analyte::SystolicBP, 30);
    REQUIRE(one.has_value());
    CHECK(one->value == 120.0);

    CHECK_FALSE(window_average(visit, {}, Analyte::SystolicBP).has_value());
    CHECK_THROWS_AS(window_average(visit, sbp, Analyte::HbA1c), DataError);  // not an averaging analyte

    // Height averages over a full year.
    std::vector<Measurement> height = {meas(Analyte::Height, 170, "2020-07-01"),
                                       meas(Analyte::Height, 172, "2021-05-01")};
    auto h = window_average(visit, height, Analyte::Height);
    REQUIRE(h.has_value());
    CHECK(h->value == 171.0);
    CHECK(h->day_gap == 31);
}

TEST_CASE("ingest validates and canonically sorts") {
    TempDir dir("ingest");
    dir.file("patients.csv", kPatientsCsv);
    dir.file("visits.csv", kVisitsCsv);
    dir.file("measurements.csv", kMeasurementsCsv);
    dir.file("scores.csv", kScoresCsv);

    const Cohort c = ingest_cohort_dir(dir.path.string());
    REQUIRE(c.patients.size() == 2);
    CHECK(c.patients[0].patient_id == "p1");  // sorted despite file order
    CHECK(c.patients[1].patient_id == "p2");
    CHECK(c.patients[0].sex == Sex::Female);
    CHECK(c.patients[0].age_years == 48.25);
    CHECK_FALSE(c.patients[0].years_with_diabetes.has_value());
    CHECK(c.patients[1].years_with_diabetes == 10.0);
    CHECK(c.patients[0].diabetic == false);
    CHECK(c.patients[1].dataset_id.kind == DatasetId::Kind::ValA);

    REQUIRE(c.visits.size() == 3);
    CHECK(c.visits[0].visit_id == "v1");  // p1's visits in date order
    CHECK(c.visits[1].visit_id == "v2");
    CHECK(c.visits[2].visit_id == "v3");
    CHECK(c.visits[0].cataract_present == false);
    CHECK(c.visits[1].cataract_present == true);
    CHECK_FALSE(c.visits[1].intraocular_lens.has_value());

    auto p1_visits = c.visits_of("p1");
    REQUIRE(p1_visits.size() == 2);
    CHECK(c.visits[p1_visits[0]].visit_id == "v1");

    auto sbp = c.series("p2", Analyte::SystolicBP);
    REQUIRE(sbp.size() == 2);
    CHECK(sbp[0].measured_date < sbp[1].measured_date);

    REQUIRE(c.scores.size() == 3);
    CHECK(c.scores[0].image_id == "img1");  // (target, patient, visit, image, member)
    CHECK(c.scores[0].model_member == "m0");
    CHECK(c.scores[1].model_member == "m1");
    CHECK(c.scores[2].image_id == "img2");

    const Visit* v1 = c.find_visit("v1");
    REQUIRE(v1 != nullptr);
    REQUIRE(v1->images.size() == 2);
    CHECK(v1->images[0].image_id == "img1");
    CHECK(v1->images[0].eye == Eye::Left);

    CHECK(c.find_patient("p3") == nullptr);
    CHECK(c.visits_of("p3").empty());
    CHECK(c.series("p1", Analyte::TSH).empty());
}

TEST_CASE("ingest referential errors") {
    auto try_ingest = [](const char* patients, const char* visits, const char* measurements, const char* scores) {
        TempDir dir("bad");
        dir.file("patients.csv", patients);
        dir.file("visits.csv", visits);
        dir.file("measurements.csv", measurements);
        if (scores) dir.file("scores.csv", scores);
        return ingest_cohort_dir(dir.path.string());
    };
    const char* min_meas = "patient_id,analyte,value,measured_date\n";

    // Duplicate patient id.
    CHECK_THROWS_AS(try_ingest("patient_id,sex,race_ethnicity,age,years_with_diabetes,diabetic,dataset_id\n"
                               "p1,Male,White,50,,,ValA\np1,Male,White,51,,,ValA\n",
                               "visit_id,patient_id,visit_date,cataract,iol\n", min_meas, nullptr),
                    DataError);
    // Visit referencing an unknown patient.
    CHECK_THROWS_AS(try_ingest(kPatientsCsv,
                               "visit_id,patient_id,visit_date,cataract,iol\nv9,nobody,2021-01-01,,\n", min_meas,
                               nullptr),
                    DataError);
    // Measurement referencing an unknown patient.
    CHECK_THROWS_AS(try_ingest(kPatientsCsv, kVisitsCsv,
                               "patient_id,analyte,value,measured_date\nghost,TSH,2.0,2021-01-01\n", nullptr),
                    DataError);
    // Score referencing an unknown visit.
    CHECK_THROWS_AS(try_ingest(kPatientsCsv, kVisitsCsv, kMeasurementsCsv,
                               "image_id,visit_id,patient_id,eye,model_member,target_name,score\n"
                               "img1,v99,p1,Left,m0,Hgb<11.0,0.5\n"),
                    DataError);
    // Score whose patient does not own the visit.
    CHECK_THROWS_AS(try_ingest(kPatientsCsv, kVisitsCsv, kMeasurementsCsv,
                               "image_id,visit_id,patient_id,eye,model_member,target_name,score\n"
                               "img1,v1,p2,Left,m0,Hgb<11.0,0.5\n"),
                    DataError);
    // Score outside [0,1].
    CHECK_THROWS_AS(try_ingest(kPatientsCsv, kVisitsCsv, kMeasurementsCsv,
                               "image_id,visit_id,patient_id,eye,model_member,target_name,score\n"
                               "img1,v1,p1,Left,m0,Hgb<11.0,1.5\n"),
                    DataError);
    // Unknown analyte name.
    CHECK_THROWS_AS(try_ingest(kPatientsCsv, kVisitsCsv,
                               "patient_id,analyte,value,measured_date\np1,Glucose,99,2021-01-01\n", nullptr),
                    DataError);
    // Negative age.
    CHECK_THROWS_AS(try_ingest("patient_id,sex,race_ethnicity,age,years_with_diabetes,diabetic,dataset_id\n"
                               "p1,Male,White,-3,,,ValA\n",
                               "visit_id,patient_id,visit_date,cataract,iol\n", min_meas, nullptr),
                    DataError);
}

TEST_CASE("jsonl inputs are equivalent to csv") {
    TempDir a("jsonl");
    a.file("patients.jsonl",
           "{\"patient_id\":\"p1\",\"sex\":\"Female\",\"race_ethnicity\":\"Black\",\"age\":48.25,"
           "\"years_with_diabetes\":null,\"diabetic\":false,\"dataset_id\":\"DevTrain\"}\n");
    a.file("visits.jsonl",
           "{\"visit_id\":\"v1\",\"patient_id\":\"p1\",\"visit_date\":\"2021-01-15\",\"cataract\":false,"
           "\"iol\":false}\n");
    a.file("measurements.jsonl",
           "{\"patient_id\":\"p1\",\"analyte\":\"HbA1c\",\"value\":7.5,\"measured_date\":\"2021-01-20\"}\n");
    IngestPaths paths;
    paths.patients = (a.path / "patients.jsonl").string();
    paths.visits = (a.path / "visits.jsonl").string();
    paths.measurements = (a.path / "measurements.jsonl").string();
    const Cohort c = ingest_cohort(paths);
    REQUIRE(c.patients.size() == 1);
    CHECK(c.patients[0].age_years == 48.25);
    CHECK(c.patients[0].diabetic == false);
    REQUIRE(c.measurements.size() == 1);
    CHECK(c.measurements[0].value == 7.5);

    a.file("broken.jsonl", "{\"patient_id\":\n");
    paths.patients = (a.path / "broken.jsonl").string();
    CHECK_THROWS_AS(ingest_cohort(paths), DataError);
}

TEST_CASE("write_cohort_dir round trips byte-identically") {
    TempDir dir("roundtrip");
    dir.file("patients.csv", kPatientsCsv);
    dir.file("visits.csv", kVisitsCsv);
    dir.file("measurements.csv", kMeasurementsCsv);
    dir.file("scores.csv", kScoresCsv);

    const Cohort c = ingest_cohort_dir(dir.path.string());
    const fs::path out1 = dir.path / "out1";
    const fs::path out2 = dir.path / "out2";
    write_cohort_dir(c, out1.string());
    const Cohort again = ingest_cohort_dir(out1.string());
    write_cohort_dir(again, out2.string());

    for (const char* name : {"patients.csv", "visits.csv", "measurements.csv", "scores.csv"}) {
        CAPTURE(name);
        CHECK(slurp(out1 / name) == slurp(out2 / name));
        CHECK_FALSE(slurp(out1 / name).empty());
    }
    CHECK(again.patients.size() == c.patients.size());
    CHECK(again.scores.size() == c.scores.size());
}

TEST_CASE("derived values at the visit level") {
    TempDir dir("derived");
    dir.file("patients.csv", kPatientsCsv);
    dir.file("visits.csv", kVisitsCsv);
    dir.file("measurements.csv",
             "patient_id,analyte,value,measured_date\n"
             "p1,Creatinine,1.1,2021-05-20\n"
             "p1,Weight,82,2021-05-10\n"
             "p1,Weight,78,2021-04-01\n"
             "p1,Height,164,2021-02-01\n"
             "p2,eGFR,47.5,2021-03-01\n"
             "p2,Creatinine,0.8,2021-03-05\n");
    const Cohort c = ingest_cohort_dir(dir.path.string());
    const Patient* p1 = c.find_patient("p1");
    const Patient* p2 = c.find_patient("p2");
    const Visit* v2 = c.find_visit("v2");  // p1, 2021-06-01
    const Visit* v3 = c.find_visit("v3");  // p2, 2021-03-10
    REQUIRE((p1 && p2 && v2 && v3));

    // p1 has no direct eGFR; the creatinine match converts through the
    // equation and keeps the creatinine day gap.
    auto egfr = matched_analyte_value(c, *p1, *v2, Analyte::EGFR);
    REQUIRE(egfr.has_value());
    CHECK(std::abs(egfr->value - compute_egfr_2021(1.1, 48.25, Sex::Female)) <= 1e-12);
    CHECK(egfr->day_gap == 12);
    CHECK(egfr->method == MatchMethod::Closest);

    // p2 has a direct eGFR measurement, which wins over the derivation.
    auto direct = matched_analyte_value(c, *p2, *v3, Analyte::EGFR);
    REQUIRE(direct.has_value());
    CHECK(direct->value == 47.5);

    // BMI from window-averaged weight and height; the day gap is the
    // larger of the two inputs' gaps.
    auto bmi = matched_analyte_value(c, *p1, *v2, Analyte::BMI);
    REQUIRE(bmi.has_value());
    CHECK(std::abs(bmi->value - compute_bmi(80.0, 1.64)) <= 1e-12);
    CHECK(bmi->day_gap == 120);
    CHECK(bmi->method == MatchMethod::WindowAverage);

    // Missing height blocks the BMI derivation.
    auto none = matched_analyte_value(c, *p2, *v3, Analyte::BMI);
    CHECK_FALSE(none.has_value());

    // Unknown sex blocks the eGFR derivation even with creatinine on file.
    Cohort mut = c;
    for (auto& p : mut.patients)
        if (p.patient_id == "p1") p.sex = Sex::Unknown;
    mut.rebuild_indexes();
    CHECK_FALSE(matched_analyte_value(mut, *mut.find_patient("p1"), *mut.find_visit("v2"), Analyte::EGFR).has_value());
}

TEST_CASE("visit sampling is seeded and order-independent") {
    TempDir dir("sample");
    dir.file("patients.csv", kPatientsCsv);
    dir.file("visits.csv", kVisitsCsv);
    dir.file("measurements.csv",
             "patient_id,analyte,value,measured_date\n"
             "p1,TSH,2.2,2021-01-20\n"
             "p1,TSH,2.4,2021-06-10\n"
             "p2,TSH,3.0,2021-03-12\n");
    const Cohort c = ingest_cohort_dir(dir.path.string());

    const auto picks = sample_one_visit_per_patient(c, Analyte::TSH, 17);
    REQUIRE(picks.size() == 2);
    CHECK(picks[0].first == "p1");  // sorted by patient id
    CHECK(picks[1].first == "p2");
    CHECK(picks[1].second == "v3");
    CHECK(sample_one_visit_per_patient(c, Analyte::TSH, 17) == picks);

    // Same rows written in a different file order select the same visits.
    TempDir dir2("sample2");
    dir2.file("patients.csv",
              "patient_id,sex,race_ethnicity,age,years_with_diabetes,diabetic,dataset_id\n"
              "p1,Female,Black,48.25,,false,DevTrain\n"
              "p2,Male,White,61.5,10,true,ValA\n");
    dir2.file("visits.csv",
              "visit_id,patient_id,visit_date,cataract,iol\n"
              "v3,p2,2021-03-10,,true\n"
              "v1,p1,2021-01-15,false,false\n"
              "v2,p1,2021-06-01,true,\n");
    dir2.file("measurements.csv",
              "patient_id,analyte,value,measured_date\n"
              "p2,TSH,3.0,2021-03-12\n"
              "p1,TSH,2.4,2021-06-10\n"
              "p1,TSH,2.2,2021-01-20\n");
    const Cohort c2 = ingest_cohort_dir(dir2.path.string());
    CHECK(sample_one_visit_per_patient(c2, Analyte::TSH, 17) == picks);

    // A patient with no qualifying visit is absent from the output.
    const auto none = sample_one_visit_per_patient(c, Analyte::INR, 17);
    CHECK(none.empty());
}
