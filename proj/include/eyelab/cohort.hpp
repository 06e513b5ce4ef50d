#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eyelab/date.hpp"
#include "eyelab/ellipse.hpp"

namespace eyelab {

enum class Sex { Female, Male, Unknown };
enum class RaceEthnicity { Hispanic, White, Black, AsianPacificIslander, NativeAmerican, Other, Unknown };
enum class Eye { Left, Right, Unknown };

std::string to_string(Sex s);
std::string to_string(RaceEthnicity r);
std::string to_string(Eye e);
Sex parse_sex(const std::string& token, const std::string& context);
RaceEthnicity parse_race(const std::string& token, const std::string& context);
Eye parse_eye(const std::string& token, const std::string& context);

// Which split a patient belongs to. DevTrain/DevTune are the development
// splits; ValA/ValB/ValC are the held-out validation slices. Any other
// nonempty tag is carried through as a custom slice.
struct DatasetId {
    enum class Kind { DevTrain, DevTune, ValA, ValB, ValC, Custom };
    Kind kind = Kind::Custom;
    std::string custom;  // set only for Kind::Custom

    bool operator==(const DatasetId&) const = default;
};

DatasetId parse_dataset_id(const std::string& token, const std::string& context);
std::string to_string(const DatasetId& id);

// Measured quantities. Weight and Height are ingestible inputs used to
// derive BMI; everything else appears directly in the target registry.
enum class Analyte {
    ACR,
    Albumin,
    ALT,
    AST,
    BMI,
    BUN,
    Calcium,
    Creatinine,
    DiastolicBP,
    EGFR,
    HbA1c,
    HCT,
    HDL,
    Hgb,
    INR,
    LDL,
    MeanArterialPressure,
    NonHDL,
    Platelet,
    Potassium,
    PulsePressure,
    RDW,
    Sodium,
    SystolicBP,
    TotalBilirubin,
    TotalCholesterol,
    Triglycerides,
    TSH,
    WBC,
    Weight,
    Height,
};

inline constexpr int kAnalyteCount = 31;

std::span<const Analyte> all_analytes();
std::string to_string(Analyte a);
Analyte parse_analyte(const std::string& token, const std::string& context);

// Canonical unit per analyte; ingestion rejects anything else rather than
// converting.
std::string analyte_unit(Analyte a);

// Matching window in days: 30 for INR, 90 for HbA1c, BP and Weight,
// 365 for Height, 180 otherwise.
int analyte_window_days(Analyte a);

// True for the analytes whose visit value is a window average rather than
// the single closest measurement (BP components, Weight, Height).
bool is_window_averaged(Analyte a);

struct Patient {
    std::string patient_id;
    Sex sex = Sex::Unknown;
    RaceEthnicity race_ethnicity = RaceEthnicity::Unknown;
    double age_years = 0.0;  // age at the reference visit, fractional years
    std::optional<double> years_with_diabetes;
    std::optional<bool> diabetic;
    DatasetId dataset_id;
};

struct ImageRecord {
    std::string image_id;
    std::string visit_id;
    Eye eye = Eye::Unknown;
    int width = 587;  // canonical capture size; annotations are validated
    int height = 587; // against actual pixel data at ablation time
    std::optional<EllipseAnnotation> annotation;
};

struct Visit {
    std::string visit_id;
    std::string patient_id;
    Date visit_date;
    std::vector<ImageRecord> images;
    std::optional<bool> cataract_present;
    std::optional<bool> intraocular_lens;
};

struct Measurement {
    std::string patient_id;
    Analyte analyte = Analyte::ACR;
    double value = 0.0;
    Date measured_date;
};

enum class MatchMethod { Closest, WindowAverage };

// A lab/vital value matched to a visit date.
struct MatchedValue {
    Analyte analyte = Analyte::ACR;
    double value = 0.0;
    int day_gap = 0;  // |measured - visit| in whole days; for window
                      // averages, the smallest gap among included points
    MatchMethod method = MatchMethod::Closest;
};

// One per-image, per-ensemble-member model output for one target.
struct ScoreRecord {
    std::string image_id;
    std::string visit_id;
    std::string patient_id;
    Eye eye = Eye::Unknown;
    std::string model_member;
    std::string target_name;
    double score = 0.0;  // in [0,1]
};

// Immutable after ingestion. All containers are canonically sorted so that
// downstream seeded operations are independent of input file ordering.
struct Cohort {
    std::vector<Patient> patients;          // by patient_id
    std::vector<Visit> visits;              // by (patient_id, date, visit_id)
    std::vector<Measurement> measurements;  // by (patient_id, analyte, date, value)
    std::vector<ScoreRecord> scores;        // by (target, patient, visit, image, member)

    const Patient* find_patient(const std::string& patient_id) const;
    const Visit* find_visit(const std::string& visit_id) const;
    // Indices into `visits` for one patient, in canonical order.
    std::span<const std::size_t> visits_of(const std::string& patient_id) const;
    // Contiguous measurement series for (patient, analyte).
    std::span<const Measurement> series(const std::string& patient_id, Analyte a) const;

    void rebuild_indexes();

  private:
    std::map<std::string, std::size_t> patient_index_;
    std::map<std::string, std::size_t> visit_index_;
    std::map<std::string, std::vector<std::size_t>> visits_by_patient_;
};

struct IngestPaths {
    std::string patients;
    std::string visits;
    std::string measurements;
    std::string scores;       // optional, "" to skip
    std::string annotations;  // optional, "" to skip
};

// Loads and cross-links a cohort. Files may be .csv or .jsonl with the same
// field names. Referential problems (visit with unknown patient, score with
// unknown visit, duplicate ids) raise DataError with file and line.
Cohort ingest_cohort(const IngestPaths& paths);

// Convenience: conventional filenames under one directory; scores.csv and
// annotations.csv are optional.
Cohort ingest_cohort_dir(const std::string& dir);

// Writes the five CSV files in canonical order with shortest round-trip
// number formatting, so re-ingesting reproduces the cohort exactly.
void write_cohort_dir(const Cohort& cohort, const std::string& dir);

// Closest-in-time match for one analyte series, excluded when the day gap
// exceeds the analyte's window (a gap equal to the window still qualifies).
// Equidistant candidates resolve to the earlier-dated one. `max_window_days`
// tightens (never widens) the analyte's own window.
std::optional<MatchedValue> match_measurement(Date visit_date, std::span<const Measurement> series, Analyte analyte,
                                              std::optional<int> max_window_days = std::nullopt);

// Mean of all values within the averaging window (90d for BP and Weight,
// 365d for Height). day_gap is the minimum gap among the averaged points.
std::optional<MatchedValue> window_average(Date visit_date, std::span<const Measurement> series, Analyte analyte,
                                           std::optional<int> max_window_days = std::nullopt);

// Race-free 2021 CKD-EPI creatinine equation, mL/min/1.73m^2.
double compute_egfr_2021(double serum_creatinine_mg_dl, double age_years, Sex sex);

// weight kg, height m -> kg/m^2.
double compute_bmi(double weight_kg, double height_m);

// The visit-level value of an analyte: direct measurements when present,
// otherwise the documented derivations (creatinine -> eGFR; averaged
// Weight + Height -> BMI). Returns nothing when no value qualifies or a
// derivation's inputs are missing/invalid for this patient.
std::optional<MatchedValue> matched_analyte_value(const Cohort& cohort, const Patient& patient, const Visit& visit,
                                                  Analyte analyte, std::optional<int> max_window_days = std::nullopt);

// One uniformly random qualifying visit per patient (qualifying = the
// analyte has a matched value at that visit). Selection depends only on
// (cohort contents, analyte, seed), never on container ordering. Output
// sorted by patient_id.
std::vector<std::pair<std::string, std::string>> sample_one_visit_per_patient(
    const Cohort& cohort, Analyte analyte, std::uint64_t seed, std::optional<int> max_window_days = std::nullopt);

}  // namespace eyelab
