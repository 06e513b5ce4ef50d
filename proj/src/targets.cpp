#include "eyelab/targets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eyelab/error.hpp"

namespace eyelab {

std::string to_string(Direction d) { return d == Direction::AboveIsPositive ? "above" : "below"; }

namespace {

std::string format_cutoff(double c) {
    // All registry cutoffs print with one decimal (300.0, 12.5); custom
    // cutoffs keep more digits only when they need them.
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", c);
    if (std::strtod(buf, nullptr) == c) return buf;
    std::snprintf(buf, sizeof buf, "%.17g", c);
    return buf;
}

TargetSpec make(Analyte analyte, Direction dir, bool inclusive, std::vector<double> cutoffs, int headline,
                bool primary) {
    TargetSpec s;
    s.analyte = analyte;
    s.direction = dir;
    s.cutoffs = std::move(cutoffs);
    s.inclusive.assign(s.cutoffs.size(), inclusive);
    s.headline_index = headline;
    s.primary = primary;
    s.unit = analyte_unit(analyte);
    s.name = target_row_name(s, headline);
    return s;
}

std::vector<TargetSpec> build_builtin() {
    using A = Analyte;
    using D = Direction;
    std::vector<TargetSpec> r;
    r.push_back(make(A::ACR, D::AboveIsPositive, true, {30.0, 300.0, 1500.0}, 1, true));
    r.push_back(make(A::Albumin, D::BelowIsPositive, false, {3.5}, 0, true));
    r.push_back(make(A::ALT, D::AboveIsPositive, false, {29.0}, 0, false));
    r.push_back(make(A::AST, D::AboveIsPositive, false, {36.0}, 0, true));
    r.push_back(make(A::BMI, D::AboveIsPositive, true, {25.0, 30.0, 35.0, 40.0}, 1, false));
    r.push_back(make(A::BUN, D::AboveIsPositive, false, {20.0}, 0, false));
    r.push_back(make(A::Calcium, D::BelowIsPositive, false, {8.6}, 0, true));
    r.push_back(make(A::Creatinine, D::AboveIsPositive, false, {1.2}, 0, false));
    r.push_back(make(A::DiastolicBP, D::AboveIsPositive, true, {80.0, 90.0}, 0, false));
    r.push_back(make(A::EGFR, D::BelowIsPositive, false, {15.0, 30.0, 60.0, 90.0}, 2, true));
    r.push_back(make(A::HbA1c, D::AboveIsPositive, true, {6.5, 7.0, 8.0, 9.0}, 0, false));
    r.push_back(make(A::HCT, D::BelowIsPositive, false, {39.0}, 0, false));
    r.push_back(make(A::HDL, D::AboveIsPositive, true, {45.0, 60.0}, 0, false));
    r.push_back(make(A::Hgb, D::BelowIsPositive, false, {11.0, 12.5}, 0, true));
    r.push_back(make(A::INR, D::BelowIsPositive, false, {1.1}, 0, false));
    r.push_back(make(A::LDL, D::AboveIsPositive, true, {100.0, 130.0, 160.0, 190.0}, 0, false));
    r.push_back(make(A::MeanArterialPressure, D::AboveIsPositive, true, {80.0, 90.0, 110.0}, 0, false));
    r.push_back(make(A::NonHDL, D::AboveIsPositive, true, {130.0, 160.0}, 0, false));
    r.push_back(make(A::Platelet, D::BelowIsPositive, false, {100.0, 150.0}, 1, true));
    r.push_back(make(A::Potassium, D::BelowIsPositive, false, {3.5}, 0, false));
    r.push_back(make(A::Potassium, D::AboveIsPositive, false, {5.0}, 0, false));
    r.push_back(make(A::PulsePressure, D::AboveIsPositive, true, {40.0, 55.0, 65.0}, 0, false));
    r.push_back(make(A::RDW, D::AboveIsPositive, false, {14.5}, 0, false));
    r.push_back(make(A::Sodium, D::BelowIsPositive, false, {136.0}, 0, false));
    r.push_back(make(A::SystolicBP, D::AboveIsPositive, true, {120.0, 140.0}, 0, false));
    r.push_back(make(A::TotalBilirubin, D::AboveIsPositive, false, {1.0}, 0, false));
    r.push_back(make(A::TotalCholesterol, D::AboveIsPositive, true, {200.0, 240.0}, 0, false));
    r.push_back(make(A::Triglycerides, D::AboveIsPositive, true, {150.0, 200.0, 500.0}, 0, false));
    r.push_back(make(A::TSH, D::BelowIsPositive, false, {0.5}, 0, false));
    r.push_back(make(A::TSH, D::AboveIsPositive, false, {4.0}, 0, true));
    r.push_back(make(A::WBC, D::BelowIsPositive, false, {4.0}, 0, true));
    r.push_back(make(A::WBC, D::AboveIsPositive, false, {11.0}, 0, false));
    validate_registry(r, /*require_nine_primaries=*/true);
    return r;
}

}  // namespace

const std::vector<TargetSpec>& builtin_registry() {
    static const std::vector<TargetSpec> registry = build_builtin();
    return registry;
}

std::string target_row_name(const TargetSpec& spec, int cutoff_index) {
    if (cutoff_index < 0 || cutoff_index >= static_cast<int>(spec.cutoffs.size()))
        throw DataError("target_row_name: cutoff index out of range");
    const bool inclusive = spec.inclusive[cutoff_index];
    const char* op = spec.direction == Direction::AboveIsPositive ? (inclusive ? ">=" : ">")
                                                                  : (inclusive ? "<=" : "<");
    return to_string(spec.analyte) + op + format_cutoff(spec.cutoffs[cutoff_index]);
}

bool row_positive(double value, const TargetSpec& spec, int cutoff_index) {
    if (std::isnan(value)) throw DataError("row_positive: NaN value");
    const double c = spec.cutoffs.at(cutoff_index);
    const bool inclusive = spec.inclusive.at(cutoff_index);
    if (spec.direction == Direction::AboveIsPositive) return inclusive ? value >= c : value > c;
    return inclusive ? value <= c : value < c;
}

ClassLabel label_value(double value, const TargetSpec& spec) {
    if (std::isnan(value)) throw DataError("label_value: NaN value");
    ClassLabel label;
    for (int i = 0; i < static_cast<int>(spec.cutoffs.size()); ++i) {
        if (row_positive(value, spec, i)) ++label.class_index;
    }
    label.binary_positive = row_positive(value, spec, spec.headline_index);
    return label;
}

std::optional<TargetRowRef> find_target_row(const std::vector<TargetSpec>& registry, const std::string& name) {
    for (const auto& spec : registry) {
        for (int i = 0; i < static_cast<int>(spec.cutoffs.size()); ++i) {
            if (target_row_name(spec, i) == name) return TargetRowRef{&spec, i};
        }
    }
    return std::nullopt;
}

std::vector<TargetRowRef> all_target_rows(const std::vector<TargetSpec>& registry) {
    std::vector<TargetRowRef> rows;
    for (const auto& spec : registry) {
        for (int i = 0; i < static_cast<int>(spec.cutoffs.size()); ++i) rows.push_back({&spec, i});
    }
    return rows;
}

std::vector<TargetRowRef> primary_target_rows(const std::vector<TargetSpec>& registry) {
    std::vector<TargetRowRef> rows;
    for (const auto& spec : registry) {
        if (spec.primary) rows.push_back({&spec, spec.headline_index});
    }
    return rows;
}

void validate_registry(const std::vector<TargetSpec>& registry, bool require_nine_primaries) {
    std::set<std::string> names;
    int primaries = 0;
    for (const auto& spec : registry) {
        if (spec.cutoffs.empty() || spec.cutoffs.size() > 4)
            throw DataError("registry: spec '" + spec.name + "' must have 1 to 4 cutoffs");
        if (spec.inclusive.size() != spec.cutoffs.size())
            throw DataError("registry: spec '" + spec.name + "' inclusive flags must match cutoffs");
        for (std::size_t i = 1; i < spec.cutoffs.size(); ++i) {
            if (!(spec.cutoffs[i - 1] < spec.cutoffs[i]))
                throw DataError("registry: spec '" + spec.name + "' cutoffs must be strictly increasing");
        }
        if (spec.headline_index < 0 || spec.headline_index >= static_cast<int>(spec.cutoffs.size()))
            throw DataError("registry: spec '" + spec.name + "' headline index out of range");
        for (int i = 0; i < static_cast<int>(spec.cutoffs.size()); ++i) {
            if (!names.insert(target_row_name(spec, i)).second)
                throw DataError("registry: duplicate target row name '" + target_row_name(spec, i) + "'");
        }
        if (spec.primary) ++primaries;
    }
    if (require_nine_primaries && primaries != 9)
        throw DataError("registry: expected exactly 9 primary targets, found " + std::to_string(primaries));
}

namespace {

TargetSpec spec_from_json(const nlohmann::json& obj, const std::string& context) {
    if (!obj.is_object()) throw DataError(context + ": each registry entry must be an object");
    TargetSpec s;
    if (!obj.contains("analyte") || !obj["analyte"].is_string())
        throw DataError(context + ": 'analyte' (string) is required");
    s.analyte = parse_analyte(obj["analyte"].get<std::string>(), context);
    if (!obj.contains("cutoffs") || !obj["cutoffs"].is_array() || obj["cutoffs"].empty())
        throw DataError(context + ": 'cutoffs' (nonempty array) is required");
    for (const auto& c : obj["cutoffs"]) {
        if (!c.is_number()) throw DataError(context + ": cutoffs must be numbers");
        s.cutoffs.push_back(c.get<double>());
    }
    if (!obj.contains("direction") || !obj["direction"].is_string())
        throw DataError(context + ": 'direction' (\"above\"|\"below\") is required");
    const std::string dir = obj["direction"].get<std::string>();
    if (dir == "above") s.direction = Direction::AboveIsPositive;
    else if (dir == "below") s.direction = Direction::BelowIsPositive;
    else throw DataError(context + ": direction must be \"above\" or \"below\"");
    if (obj.contains("inclusive")) {
        if (obj["inclusive"].is_boolean()) {
            s.inclusive.assign(s.cutoffs.size(), obj["inclusive"].get<bool>());
        } else if (obj["inclusive"].is_array() && obj["inclusive"].size() == s.cutoffs.size()) {
            for (const auto& b : obj["inclusive"]) {
                if (!b.is_boolean()) throw DataError(context + ": inclusive entries must be booleans");
                s.inclusive.push_back(b.get<bool>());
            }
        } else {
            throw DataError(context + ": 'inclusive' must be a boolean or a per-cutoff boolean array");
        }
    } else {
        s.inclusive.assign(s.cutoffs.size(), s.direction == Direction::AboveIsPositive);
    }
    s.headline_index = obj.value("headline_index", 0);
    s.primary = obj.value("primary", false);
    s.unit = obj.value("unit", analyte_unit(s.analyte));
    s.name = obj.contains("name") ? obj["name"].get<std::string>() : target_row_name(s, s.headline_index);
    return s;
}

}  // namespace

std::vector<TargetSpec> load_registry_overrides(const std::string& path, const std::vector<TargetSpec>& base) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open registry override file");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": invalid JSON: " + std::string(e.what()));
    }
    // Accept either a bare list (replaces nothing, extends/overrides by
    // analyte+direction) or {"replace": bool, "targets": [...]}.
    bool replace = false;
    const nlohmann::json* list = &doc;
    if (doc.is_object()) {
        replace = doc.value("replace", false);
        if (!doc.contains("targets") || !doc["targets"].is_array())
            throw DataError(path + ": expected a 'targets' array");
        list = &doc["targets"];
    } else if (!doc.is_array()) {
        throw DataError(path + ": expected a JSON array or an object with 'targets'");
    }

    std::vector<TargetSpec> out = replace ? std::vector<TargetSpec>{} : base;
    std::size_t index = 0;
    for (const auto& entry : *list) {
        TargetSpec s = spec_from_json(entry, path + ": targets[" + std::to_string(index) + "]");
        ++index;
        auto matches = [&](const TargetSpec& t) { return t.analyte == s.analyte && t.direction == s.direction; };
        auto it = std::find_if(out.begin(), out.end(), matches);
        if (it != out.end()) *it = std::move(s);
        else out.push_back(std::move(s));
    }
    validate_registry(out, /*require_nine_primaries=*/false);
    return out;
}

std::string registry_to_json(const std::vector<TargetSpec>& registry) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& s : registry) {
        nlohmann::json obj;
        obj["name"] = s.name;
        obj["analyte"] = to_string(s.analyte);
        obj["cutoffs"] = s.cutoffs;
        obj["direction"] = to_string(s.direction);
        obj["inclusive"] = std::vector<bool>(s.inclusive.begin(), s.inclusive.end());
        obj["headline_index"] = s.headline_index;
        obj["primary"] = s.primary;
        obj["unit"] = s.unit;
        list.push_back(std::move(obj));
    }
    return nlohmann::json{{"targets", list}}.dump(2) + "\n";
}

}  // namespace eyelab
