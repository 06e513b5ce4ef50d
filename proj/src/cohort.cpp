#include "eyelab/cohort.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eyelab/csv.hpp"
#include "eyelab/error.hpp"
#include "eyelab/rng.hpp"

namespace eyelab {

namespace {

struct AnalyteInfo {
    Analyte analyte;
    const char* name;
    const char* unit;
    int window_days;
    bool window_averaged;
};

// Canonical names, units, and matching windows. Windows: 30d for INR, 90d
// for HbA1c; BP and Weight average over 90d and Height over 365d; all other
// labs match the closest measurement within 180d.
constexpr std::array<AnalyteInfo, kAnalyteCount> kAnalytes{{
    {Analyte::ACR, "ACR", "mg/g", 180, false},
    {Analyte::Albumin, "Albumin", "g/dL", 180, false},
    {Analyte::ALT, "ALT", "U/L", 180, false},
    {Analyte::AST, "AST", "U/L", 180, false},
    {Analyte::BMI, "BMI", "kg/m^2", 180, false},
    {Analyte::BUN, "BUN", "mg/dL", 180, false},
    {Analyte::Calcium, "Calcium", "mg/dL", 180, false},
    {Analyte::Creatinine, "Creatinine", "mg/dL", 180, false},
    {Analyte::DiastolicBP, "Diastolic BP", "mmHg", 90, true},
    {Analyte::EGFR, "eGFR", "mL/min/1.73m^2", 180, false},
    {Analyte::HbA1c, "HbA1c", "%", 90, false},
    {Analyte::HCT, "HCT", "%", 180, false},
    {Analyte::HDL, "HDL", "mg/dL", 180, false},
    {Analyte::Hgb, "Hgb", "g/dL", 180, false},
    {Analyte::INR, "INR", "ratio", 30, false},
    {Analyte::LDL, "LDL", "mg/dL", 180, false},
    {Analyte::MeanArterialPressure, "Mean arterial pressure", "mmHg", 90, true},
    {Analyte::NonHDL, "non-HDL", "mg/dL", 180, false},
    {Analyte::Platelet, "Platelet", "10^3/uL", 180, false},
    {Analyte::Potassium, "Potassium", "mEq/L", 180, false},
    {Analyte::PulsePressure, "Pulse pressure", "mmHg", 90, true},
    {Analyte::RDW, "RDW", "%", 180, false},
    {Analyte::Sodium, "Sodium", "mEq/L", 180, false},
    {Analyte::SystolicBP, "Systolic BP", "mmHg", 90, true},
    {Analyte::TotalBilirubin, "Total bilirubin", "mg/dL", 180, false},
    {Analyte::TotalCholesterol, "Total cholesterol", "mg/dL", 180, false},
    {Analyte::Triglycerides, "Triglycerides", "mg/dL", 180, false},
    {Analyte::TSH, "TSH", "mU/L", 180, false},
    {Analyte::WBC, "WBC", "10^3/uL", 180, false},
    {Analyte::Weight, "Weight", "kg", 90, true},
    {Analyte::Height, "Height", "cm", 365, true},
}};

const AnalyteInfo& info(Analyte a) { return kAnalytes[static_cast<std::size_t>(a)]; }

}  // namespace

std::span<const Analyte> all_analytes() {
    static const std::array<Analyte, kAnalyteCount> order = [] {
        std::array<Analyte, kAnalyteCount> out{};
        for (std::size_t i = 0; i < kAnalytes.size(); ++i) out[i] = kAnalytes[i].analyte;
        return out;
    }();
    return order;
}

std::string to_string(Analyte a) { return info(a).name; }
std::string analyte_unit(Analyte a) { return info(a).unit; }
int analyte_window_days(Analyte a) { return info(a).window_days; }
bool is_window_averaged(Analyte a) { return info(a).window_averaged; }

Analyte parse_analyte(const std::string& token, const std::string& context) {
    for (const auto& ai : kAnalytes) {
        if (token == ai.name) return ai.analyte;
    }
    std::string valid;
    for (const auto& ai : kAnalytes) {
        if (!valid.empty()) valid += ", ";
        valid += ai.name;
    }
    throw DataError(context + ": unknown analyte '" + token + "' (valid: " + valid + ")");
}

std::string to_string(Sex s) {
    switch (s) {
        case Sex::Female: return "Female";
        case Sex::Male: return "Male";
        default: return "Unknown";
    }
}

std::string to_string(RaceEthnicity r) {
    switch (r) {
        case RaceEthnicity::Hispanic: return "Hispanic";
        case RaceEthnicity::White: return "White";
        case RaceEthnicity::Black: return "Black";
        case RaceEthnicity::AsianPacificIslander: return "Asian/Pacific Islander";
        case RaceEthnicity::NativeAmerican: return "Native American";
        case RaceEthnicity::Other: return "Other";
        default: return "Unknown";
    }
}

std::string to_string(Eye e) {
    switch (e) {
        case Eye::Left: return "Left";
        case Eye::Right: return "Right";
        default: return "Unknown";
    }
}

Sex parse_sex(const std::string& token, const std::string& context) {
    if (token == "Female") return Sex::Female;
    if (token == "Male") return Sex::Male;
    if (token.empty() || token == "Unknown") return Sex::Unknown;
    throw DataError(context + ": invalid sex '" + token + "' (expected Female, Male, Unknown, or empty)");
}

RaceEthnicity parse_race(const std::string& token, const std::string& context) {
    if (token == "Hispanic") return RaceEthnicity::Hispanic;
    if (token == "White") return RaceEthnicity::White;
    if (token == "Black") return RaceEthnicity::Black;
    if (token == "Asian/Pacific Islander") return RaceEthnicity::AsianPacificIslander;
    if (token == "Native American") return RaceEthnicity::NativeAmerican;
    if (token == "Other") return RaceEthnicity::Other;
    if (token.empty() || token == "Unknown") return RaceEthnicity::Unknown;
    throw DataError(context + ": invalid race_ethnicity '" + token +
                    "' (expected Hispanic, White, Black, Asian/Pacific Islander, Native American, Other, Unknown, "
                    "or empty)");
}

Eye parse_eye(const std::string& token, const std::string& context) {
    if (token == "Left") return Eye::Left;
    if (token == "Right") return Eye::Right;
    if (token.empty() || token == "Unknown") return Eye::Unknown;
    throw DataError(context + ": invalid eye '" + token + "' (expected Left, Right, Unknown, or empty)");
}

DatasetId parse_dataset_id(const std::string& token, const std::string& context) {
    if (token == "DevTrain") return {DatasetId::Kind::DevTrain, ""};
    if (token == "DevTune") return {DatasetId::Kind::DevTune, ""};
    if (token == "ValA") return {DatasetId::Kind::ValA, ""};
    if (token == "ValB") return {DatasetId::Kind::ValB, ""};
    if (token == "ValC") return {DatasetId::Kind::ValC, ""};
    if (token.empty()) throw DataError(context + ": dataset_id must not be empty");
    return {DatasetId::Kind::Custom, token};
}

std::string to_string(const DatasetId& id) {
    switch (id.kind) {
        case DatasetId::Kind::DevTrain: return "DevTrain";
        case DatasetId::Kind::DevTune: return "DevTune";
        case DatasetId::Kind::ValA: return "ValA";
        case DatasetId::Kind::ValB: return "ValB";
        case DatasetId::Kind::ValC: return "ValC";
        default: return id.custom;
    }
}

const Patient* Cohort::find_patient(const std::string& patient_id) const {
    auto it = patient_index_.find(patient_id);
    return it == patient_index_.end() ? nullptr : &patients[it->second];
}

const Visit* Cohort::find_visit(const std::string& visit_id) const {
    auto it = visit_index_.find(visit_id);
    return it == visit_index_.end() ? nullptr : &visits[it->second];
}

std::span<const std::size_t> Cohort::visits_of(const std::string& patient_id) const {
    auto it = visits_by_patient_.find(patient_id);
    if (it == visits_by_patient_.end()) return {};
    return it->second;
}

std::span<const Measurement> Cohort::series(const std::string& patient_id, Analyte a) const {
    auto lo = std::lower_bound(measurements.begin(), measurements.end(), std::make_pair(patient_id, a),
                               [](const Measurement& m, const std::pair<std::string, Analyte>& key) {
                                   if (m.patient_id != key.first) return m.patient_id < key.first;
                                   return m.analyte < key.second;
                               });
    auto hi = lo;
    while (hi != measurements.end() && hi->patient_id == patient_id && hi->analyte == a) ++hi;
    return {measurements.data() + (lo - measurements.begin()), static_cast<std::size_t>(hi - lo)};
}

void Cohort::rebuild_indexes() {
    std::sort(patients.begin(), patients.end(),
              [](const Patient& a, const Patient& b) { return a.patient_id < b.patient_id; });
    std::sort(visits.begin(), visits.end(), [](const Visit& a, const Visit& b) {
        if (a.patient_id != b.patient_id) return a.patient_id < b.patient_id;
        if (a.visit_date != b.visit_date) return a.visit_date < b.visit_date;
        return a.visit_id < b.visit_id;
    });
    for (auto& v : visits) {
        std::sort(v.images.begin(), v.images.end(),
                  [](const ImageRecord& a, const ImageRecord& b) { return a.image_id < b.image_id; });
    }
    std::sort(measurements.begin(), measurements.end(), [](const Measurement& a, const Measurement& b) {
        if (a.patient_id != b.patient_id) return a.patient_id < b.patient_id;
        if (a.analyte != b.analyte) return a.analyte < b.analyte;
        if (a.measured_date != b.measured_date) return a.measured_date < b.measured_date;
        return a.value < b.value;
    });
    std::sort(scores.begin(), scores.end(), [](const ScoreRecord& a, const ScoreRecord& b) {
        return std::tie(a.target_name, a.patient_id, a.visit_id, a.image_id, a.model_member) <
               std::tie(b.target_name, b.patient_id, b.visit_id, b.image_id, b.model_member);
    });

    patient_index_.clear();
    visit_index_.clear();
    visits_by_patient_.clear();
    for (std::size_t i = 0; i < patients.size(); ++i) patient_index_[patients[i].patient_id] = i;
    for (std::size_t i = 0; i < visits.size(); ++i) {
        visit_index_[visits[i].visit_id] = i;
        visits_by_patient_[visits[i].patient_id].push_back(i);
    }
}

namespace {

// Loads a .csv file, or a .jsonl file whose objects carry the same field
// names, into a uniform string table.
CsvTable load_table(const std::string& path, const std::vector<std::string>& columns) {
    if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl") {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError(path + ": cannot open file");
        CsvTable table;
        table.path = path;
        table.header = columns;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            nlohmann::json obj;
            try {
                obj = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw DataError(path + ":" + std::to_string(line_no) + ": invalid JSON: " + e.what());
            }
            if (!obj.is_object()) throw DataError(path + ":" + std::to_string(line_no) + ": expected a JSON object");
            std::vector<std::string> row;
            row.reserve(columns.size());
            for (const auto& col : columns) {
                if (!obj.contains(col) || obj[col].is_null()) {
                    row.emplace_back();
                } else if (obj[col].is_string()) {
                    row.push_back(obj[col].get<std::string>());
                } else if (obj[col].is_boolean()) {
                    row.emplace_back(obj[col].get<bool>() ? "true" : "false");
                } else if (obj[col].is_number()) {
                    row.push_back(obj[col].dump());
                } else {
                    throw DataError(path + ":" + std::to_string(line_no) + ": field '" + col +
                                    "' must be a string, number, boolean, or null");
                }
            }
            table.rows.push_back(std::move(row));
            table.line_numbers.push_back(line_no);
        }
        return table;
    }
    CsvTable table = read_csv(path);
    for (const auto& col : columns) table.column(col);  // presence check
    return table;
}

std::string row_context(const CsvTable& t, std::size_t row) {
    return t.path + ":" + std::to_string(t.line_numbers[row]);
}

std::optional<bool> parse_optional_bool(const CsvTable& t, std::size_t row, std::size_t col, const std::string& what) {
    const std::string& s = t.rows[row][col];
    if (s.empty()) return std::nullopt;
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw DataError(row_context(t, row) + ": " + what + ": expected true/false/1/0 or empty, got '" + s + "'");
}

}  // namespace

Cohort ingest_cohort(const IngestPaths& paths) {
    Cohort cohort;

    {
        CsvTable t = load_table(paths.patients, {"patient_id", "sex", "race_ethnicity", "age", "years_with_diabetes",
                                                 "diabetic", "dataset_id"});
        const std::size_t c_id = t.column("patient_id"), c_sex = t.column("sex"), c_race = t.column("race_ethnicity"),
                          c_age = t.column("age"), c_ydm = t.column("years_with_diabetes"),
                          c_diab = t.column("diabetic"), c_ds = t.column("dataset_id");
        std::set<std::string> seen;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const std::string ctx = row_context(t, r);
            Patient p;
            p.patient_id = t.rows[r][c_id];
            if (p.patient_id.empty()) throw DataError(ctx + ": patient_id must not be empty");
            if (!seen.insert(p.patient_id).second)
                throw DataError(ctx + ": duplicate patient_id '" + p.patient_id + "'");
            p.sex = parse_sex(t.rows[r][c_sex], ctx);
            p.race_ethnicity = parse_race(t.rows[r][c_race], ctx);
            p.age_years = parse_double_field(t, r, c_age, "age");
            if (p.age_years < 0.0) throw DataError(ctx + ": age must be >= 0");
            if (!t.rows[r][c_ydm].empty()) {
                double y = parse_double_field(t, r, c_ydm, "years_with_diabetes");
                if (y < 0.0) throw DataError(ctx + ": years_with_diabetes must be >= 0");
                p.years_with_diabetes = y;
            }
            p.diabetic = parse_optional_bool(t, r, c_diab, "diabetic");
            p.dataset_id = parse_dataset_id(t.rows[r][c_ds], ctx);
            cohort.patients.push_back(std::move(p));
        }
    }

    std::set<std::string> patient_ids;
    for (const auto& p : cohort.patients) patient_ids.insert(p.patient_id);

    std::map<std::string, std::size_t> visit_slot;
    {
        CsvTable t = load_table(paths.visits, {"visit_id", "patient_id", "visit_date", "cataract", "iol"});
        const std::size_t c_vid = t.column("visit_id"), c_pid = t.column("patient_id"), c_date = t.column("visit_date"),
                          c_cat = t.column("cataract"), c_iol = t.column("iol");
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const std::string ctx = row_context(t, r);
            Visit v;
            v.visit_id = t.rows[r][c_vid];
            if (v.visit_id.empty()) throw DataError(ctx + ": visit_id must not be empty");
            if (visit_slot.count(v.visit_id)) throw DataError(ctx + ": duplicate visit_id '" + v.visit_id + "'");
            v.patient_id = t.rows[r][c_pid];
            if (!patient_ids.count(v.patient_id))
                throw DataError(ctx + ": visit references unknown patient_id '" + v.patient_id + "'");
            v.visit_date = parse_date(t.rows[r][c_date], ctx + ": visit_date");
            v.cataract_present = parse_optional_bool(t, r, c_cat, "cataract");
            v.intraocular_lens = parse_optional_bool(t, r, c_iol, "iol");
            visit_slot[v.visit_id] = cohort.visits.size();
            cohort.visits.push_back(std::move(v));
        }
    }

    {
        CsvTable t = load_table(paths.measurements, {"patient_id", "analyte", "value", "measured_date"});
        const std::size_t c_pid = t.column("patient_id"), c_an = t.column("analyte"), c_val = t.column("value"),
                          c_date = t.column("measured_date");
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const std::string ctx = row_context(t, r);
            Measurement m;
            m.patient_id = t.rows[r][c_pid];
            if (!patient_ids.count(m.patient_id))
                throw DataError(ctx + ": measurement references unknown patient_id '" + m.patient_id + "'");
            m.analyte = parse_analyte(t.rows[r][c_an], ctx);
            m.value = parse_double_field(t, r, c_val, "value");
            m.measured_date = parse_date(t.rows[r][c_date], ctx + ": measured_date");
            cohort.measurements.push_back(std::move(m));
        }
    }

    // Images are materialized from score rows (which tie image ids to
    // visits) and decorated with ellipse annotations when provided.
    std::map<std::string, ImageRecord> images;
    if (!paths.scores.empty() && std::filesystem::exists(paths.scores)) {
        CsvTable t = load_table(paths.scores,
                                {"image_id", "visit_id", "patient_id", "eye", "model_member", "target_name", "score"});
        const std::size_t c_img = t.column("image_id"), c_vid = t.column("visit_id"), c_pid = t.column("patient_id"),
                          c_eye = t.column("eye"), c_mem = t.column("model_member"), c_tgt = t.column("target_name"),
                          c_sc = t.column("score");
        std::set<std::tuple<std::string, std::string, std::string>> seen_keys;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const std::string ctx = row_context(t, r);
            ScoreRecord s;
            s.image_id = t.rows[r][c_img];
            s.visit_id = t.rows[r][c_vid];
            s.patient_id = t.rows[r][c_pid];
            s.eye = parse_eye(t.rows[r][c_eye], ctx);
            s.model_member = t.rows[r][c_mem];
            s.target_name = t.rows[r][c_tgt];
            s.score = parse_double_field(t, r, c_sc, "score");
            if (s.image_id.empty()) throw DataError(ctx + ": image_id must not be empty");
            if (s.target_name.empty()) throw DataError(ctx + ": target_name must not be empty");
            if (s.score < 0.0 || s.score > 1.0) throw DataError(ctx + ": score must lie in [0,1]");
            auto vs = visit_slot.find(s.visit_id);
            if (vs == visit_slot.end())
                throw DataError(ctx + ": score references unknown visit_id '" + s.visit_id + "'");
            const Visit& v = cohort.visits[vs->second];
            if (v.patient_id != s.patient_id) {
                throw DataError(ctx + ": score patient_id '" + s.patient_id + "' does not match visit '" +
                                s.visit_id + "' (belongs to '" + v.patient_id + "')");
            }
            if (!seen_keys.insert({s.image_id, s.model_member, s.target_name}).second) {
                throw DataError(ctx + ": duplicate score for (image '" + s.image_id + "', member '" + s.model_member +
                                "', target '" + s.target_name + "')");
            }
            auto [it, inserted] = images.try_emplace(s.image_id);
            if (inserted) {
                it->second.image_id = s.image_id;
                it->second.visit_id = s.visit_id;
                it->second.eye = s.eye;
            } else if (it->second.visit_id != s.visit_id || it->second.eye != s.eye) {
                throw DataError(ctx + ": image '" + s.image_id + "' appears with conflicting visit or eye");
            }
            cohort.scores.push_back(std::move(s));
        }
    }

    if (!paths.annotations.empty() && std::filesystem::exists(paths.annotations)) {
        CsvTable t = load_table(paths.annotations, {"image_id", "pupil_cx", "pupil_cy", "pupil_w", "pupil_h",
                                                    "iris_cx", "iris_cy", "iris_w", "iris_h"});
        const std::size_t c_img = t.column("image_id");
        std::set<std::string> seen;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const std::string ctx = row_context(t, r);
            const std::string image_id = t.rows[r][c_img];
            if (!seen.insert(image_id).second)
                throw DataError(ctx + ": duplicate annotation for image '" + image_id + "'");
            EllipseAnnotation ann;
            ann.pupil.cx = parse_double_field(t, r, t.column("pupil_cx"), "pupil_cx");
            ann.pupil.cy = parse_double_field(t, r, t.column("pupil_cy"), "pupil_cy");
            ann.pupil.width = parse_double_field(t, r, t.column("pupil_w"), "pupil_w");
            ann.pupil.height = parse_double_field(t, r, t.column("pupil_h"), "pupil_h");
            ann.iris.cx = parse_double_field(t, r, t.column("iris_cx"), "iris_cx");
            ann.iris.cy = parse_double_field(t, r, t.column("iris_cy"), "iris_cy");
            ann.iris.width = parse_double_field(t, r, t.column("iris_w"), "iris_w");
            ann.iris.height = parse_double_field(t, r, t.column("iris_h"), "iris_h");
            if (ann.pupil.width <= 0 || ann.pupil.height <= 0 || ann.iris.width <= 0 || ann.iris.height <= 0)
                throw DataError(ctx + ": ellipse widths and heights must be positive");
            const double nx = (ann.pupil.cx - ann.iris.cx) / (ann.iris.width / 2.0);
            const double ny = (ann.pupil.cy - ann.iris.cy) / (ann.iris.height / 2.0);
            if (nx * nx + ny * ny > 1.0)
                throw DataError(ctx + ": pupil center lies outside the iris ellipse");
            auto it = images.find(image_id);
            // Annotations for images absent from the score set are legal;
            // the ablation CLI reads annotations.csv directly.
            if (it != images.end()) it->second.annotation = ann;
        }
    }

    for (auto& [id, img] : images) {
        cohort.visits[visit_slot.at(img.visit_id)].images.push_back(img);
    }

    cohort.rebuild_indexes();
    return cohort;
}

Cohort ingest_cohort_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    auto pick = [&](const char* stem) -> std::string {
        fs::path csv = fs::path(dir) / (std::string(stem) + ".csv");
        fs::path jsonl = fs::path(dir) / (std::string(stem) + ".jsonl");
        if (fs::exists(csv)) return csv.string();
        if (fs::exists(jsonl)) return jsonl.string();
        return csv.string();  // reported as missing by the opener
    };
    IngestPaths paths;
    paths.patients = pick("patients");
    paths.visits = pick("visits");
    paths.measurements = pick("measurements");
    std::string scores = pick("scores");
    paths.scores = std::filesystem::exists(scores) ? scores : "";
    std::string ann = pick("annotations");
    paths.annotations = std::filesystem::exists(ann) ? ann : "";
    return ingest_cohort(paths);
}

std::optional<MatchedValue> match_measurement(Date visit_date, std::span<const Measurement> series, Analyte analyte,
                                              std::optional<int> max_window_days) {
    int window = analyte_window_days(analyte);
    if (max_window_days) window = std::min(window, *max_window_days);
    const Measurement* best = nullptr;
    int best_gap = 0;
    for (const auto& m : series) {
        if (m.analyte != analyte) throw DataError("match_measurement: mixed analytes in series");
        const int gap = std::abs(days_between(visit_date, m.measured_date));
        if (gap > window) continue;
        // Ties on |gap| resolve to the earlier date; series order is
        // canonical (date, then value), so `<` keeps the first candidate.
        if (!best || gap < best_gap ||
            (gap == best_gap && m.measured_date < best->measured_date)) {
            best = &m;
            best_gap = gap;
        }
    }
    if (!best) return std::nullopt;
    return MatchedValue{analyte, best->value, best_gap, MatchMethod::Closest};
}

std::optional<MatchedValue> window_average(Date visit_date, std::span<const Measurement> series, Analyte analyte,
                                           std::optional<int> max_window_days) {
    if (!is_window_averaged(analyte))
        throw DataError("window_average: analyte '" + to_string(analyte) + "' is not an averaging analyte");
    int window = analyte_window_days(analyte);
    if (max_window_days) window = std::min(window, *max_window_days);
    double sum = 0.0;
    int count = 0;
    int min_gap = 0;
    for (const auto& m : series) {
        if (m.analyte != analyte) throw DataError("window_average: mixed analytes in series");
        const int gap = std::abs(days_between(visit_date, m.measured_date));
        if (gap > window) continue;
        sum += m.value;
        if (count == 0 || gap < min_gap) min_gap = gap;
        ++count;
    }
    if (count == 0) return std::nullopt;
    return MatchedValue{analyte, sum / count, min_gap, MatchMethod::WindowAverage};
}

double compute_egfr_2021(double serum_creatinine_mg_dl, double age_years, Sex sex) {
    if (sex == Sex::Unknown) throw DataError("compute_egfr_2021: sex required");
    if (serum_creatinine_mg_dl <= 0.0) throw DataError("compute_egfr_2021: creatinine must be > 0");
    if (age_years <= 0.0) throw DataError("compute_egfr_2021: age must be > 0");
    const double kappa = sex == Sex::Female ? 0.7 : 0.9;
    const double alpha = sex == Sex::Female ? -0.241 : -0.329;
    const double ratio = serum_creatinine_mg_dl / kappa;
    double egfr = 142.0 * std::pow(std::min(ratio, 1.0), alpha) * std::pow(std::max(ratio, 1.0), -1.200) *
                  std::pow(0.9938, age_years);
    if (sex == Sex::Female) egfr *= 1.012;
    return egfr;
}

double compute_bmi(double weight_kg, double height_m) {
    if (weight_kg <= 0.0) throw DataError("compute_bmi: weight must be > 0");
    if (height_m <= 0.0) throw DataError("compute_bmi: height must be > 0");
    return weight_kg / (height_m * height_m);
}

std::optional<MatchedValue> matched_analyte_value(const Cohort& cohort, const Patient& patient, const Visit& visit,
                                                  Analyte analyte, std::optional<int> max_window_days) {
    if (is_window_averaged(analyte))
        return window_average(visit.visit_date, cohort.series(patient.patient_id, analyte), analyte, max_window_days);

    // Direct measurements take precedence over derivations.
    auto direct = match_measurement(visit.visit_date, cohort.series(patient.patient_id, analyte), analyte,
                                    max_window_days);
    if (direct) return direct;

    if (analyte == Analyte::EGFR) {
        auto creat = match_measurement(visit.visit_date, cohort.series(patient.patient_id, Analyte::Creatinine),
                                       Analyte::Creatinine, max_window_days);
        if (!creat) return std::nullopt;
        if (patient.sex == Sex::Unknown || patient.age_years <= 0.0 || creat->value <= 0.0) return std::nullopt;
        return MatchedValue{Analyte::EGFR, compute_egfr_2021(creat->value, patient.age_years, patient.sex),
                            creat->day_gap, MatchMethod::Closest};
    }
    if (analyte == Analyte::BMI) {
        auto weight = window_average(visit.visit_date, cohort.series(patient.patient_id, Analyte::Weight),
                                     Analyte::Weight, max_window_days);
        auto height = window_average(visit.visit_date, cohort.series(patient.patient_id, Analyte::Height),
                                     Analyte::Height, max_window_days);
        if (!weight || !height) return std::nullopt;
        if (weight->value <= 0.0 || height->value <= 0.0) return std::nullopt;
        return MatchedValue{Analyte::BMI, compute_bmi(weight->value, height->value / 100.0),
                            std::max(weight->day_gap, height->day_gap), MatchMethod::WindowAverage};
    }
    return std::nullopt;
}

std::vector<std::pair<std::string, std::string>> sample_one_visit_per_patient(const Cohort& cohort, Analyte analyte,
                                                                              std::uint64_t seed,
                                                                              std::optional<int> max_window_days) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& patient : cohort.patients) {
        std::vector<const Visit*> qualifying;
        for (std::size_t vi : cohort.visits_of(patient.patient_id)) {
            const Visit& v = cohort.visits[vi];
            if (matched_analyte_value(cohort, patient, v, analyte, max_window_days)) qualifying.push_back(&v);
        }
        if (qualifying.empty()) continue;
        // Per-patient stream keyed by patient id: the draw is unaffected by
        // other patients or by container ordering.
        Rng rng = rng_stream(seed, "visit-sample", patient.patient_id);
        const Visit* chosen = qualifying[rng.below(qualifying.size())];
        out.emplace_back(patient.patient_id, chosen->visit_id);
    }
    return out;  // patients are already in sorted order
}

namespace {

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << content;
    if (!out) throw DataError(path + ": write failed");
}

std::string optional_bool_field(const std::optional<bool>& b) {
    if (!b) return "";
    return *b ? "true" : "false";
}

}  // namespace

void write_cohort_dir(const Cohort& c, const std::string& dir) {
    std::filesystem::create_directories(dir);

    std::ostringstream patients;
    patients << "patient_id,sex,race_ethnicity,age,years_with_diabetes,diabetic,dataset_id\n";
    for (const auto& p : c.patients) {
        patients << csv_join({p.patient_id, to_string(p.sex), to_string(p.race_ethnicity),
                              format_double_shortest(p.age_years),
                              p.years_with_diabetes ? format_double_shortest(*p.years_with_diabetes) : "",
                              optional_bool_field(p.diabetic), to_string(p.dataset_id)})
                 << "\n";
    }
    write_text_file(dir + "/patients.csv", patients.str());

    std::ostringstream visits;
    visits << "visit_id,patient_id,visit_date,cataract,iol\n";
    for (const auto& v : c.visits) {
        visits << csv_join({v.visit_id, v.patient_id, format_date(v.visit_date),
                            optional_bool_field(v.cataract_present), optional_bool_field(v.intraocular_lens)})
               << "\n";
    }
    write_text_file(dir + "/visits.csv", visits.str());

    std::ostringstream measurements;
    measurements << "patient_id,analyte,value,measured_date\n";
    for (const auto& m : c.measurements) {
        measurements << csv_join({m.patient_id, to_string(m.analyte), format_double_shortest(m.value),
                                  format_date(m.measured_date)})
                     << "\n";
    }
    write_text_file(dir + "/measurements.csv", measurements.str());

    std::ostringstream scores;
    scores << "image_id,visit_id,patient_id,eye,model_member,target_name,score\n";
    for (const auto& s : c.scores) {
        scores << csv_join({s.image_id, s.visit_id, s.patient_id, to_string(s.eye), s.model_member, s.target_name,
                            format_double_shortest(s.score)})
               << "\n";
    }
    write_text_file(dir + "/scores.csv", scores.str());

    std::ostringstream annotations;
    annotations << "image_id,pupil_cx,pupil_cy,pupil_w,pupil_h,iris_cx,iris_cy,iris_w,iris_h\n";
    for (const auto& v : c.visits) {
        for (const auto& img : v.images) {
            if (!img.annotation) continue;
            const auto& a = *img.annotation;
            annotations << csv_join({img.image_id, format_double_shortest(a.pupil.cx),
                                     format_double_shortest(a.pupil.cy), format_double_shortest(a.pupil.width),
                                     format_double_shortest(a.pupil.height), format_double_shortest(a.iris.cx),
                                     format_double_shortest(a.iris.cy), format_double_shortest(a.iris.width),
                                     format_double_shortest(a.iris.height)})
                        << "\n";
        }
    }
    write_text_file(dir + "/annotations.csv", annotations.str());
}

}  // namespace eyelab
