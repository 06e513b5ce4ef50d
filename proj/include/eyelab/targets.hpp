#pragma once

#include <string>
#include <vector>

#include "eyelab/cohort.hpp"

namespace eyelab {

enum class Direction { AboveIsPositive, BelowIsPositive };

std::string to_string(Direction d);

// One prediction-target family: an analyte with 1..4 ascending cutoffs in
// one direction. Each cutoff is its own binary target row; the headline
// cutoff is the one named by `name` and flagged primary when applicable.
struct TargetSpec {
    std::string name;  // headline row name, e.g. "eGFR<60.0"
    Analyte analyte = Analyte::ACR;
    std::vector<double> cutoffs;  // strictly increasing
    std::vector<bool> inclusive;  // per cutoff: >= / <= rather than > / <
    int headline_index = 0;
    Direction direction = Direction::AboveIsPositive;
    bool primary = false;
    std::string unit;
};

struct ClassLabel {
    int class_index = 0;     // number of cutoffs crossed in the positive direction
    bool binary_positive = false;  // label at the headline cutoff
};

// The full cutoff table: 32 specs, 59 binary rows, 9 primary targets.
const std::vector<TargetSpec>& builtin_registry();

// Display name of one cutoff row, e.g. "ACR>=300.0", "Hgb<11.0".
std::string target_row_name(const TargetSpec& spec, int cutoff_index);

// Whether `value` is positive at cutoff row `cutoff_index`.
bool row_positive(double value, const TargetSpec& spec, int cutoff_index);

// Multiclass + headline binary label. NaN values are rejected.
ClassLabel label_value(double value, const TargetSpec& spec);

// Lookup by spec name or by any cutoff-row name; returns the spec plus the
// cutoff index the name refers to. Null when unknown.
struct TargetRowRef {
    const TargetSpec* spec = nullptr;
    int cutoff_index = 0;
    std::string row_name() const { return target_row_name(*spec, cutoff_index); }
    bool is_primary_row() const { return spec->primary && cutoff_index == spec->headline_index; }
};
std::optional<TargetRowRef> find_target_row(const std::vector<TargetSpec>& registry, const std::string& name);

// All binary rows of a registry in table order.
std::vector<TargetRowRef> all_target_rows(const std::vector<TargetSpec>& registry);
// The 9 prespecified primary rows.
std::vector<TargetRowRef> primary_target_rows(const std::vector<TargetSpec>& registry);

// JSON registry override: replaces or extends the built-in table from a
// file holding a list of {name?, analyte, cutoffs, direction, inclusive,
// primary?, headline_index?, unit?} objects.
std::vector<TargetSpec> load_registry_overrides(const std::string& path, const std::vector<TargetSpec>& base);

// Serializes a registry to the same JSON shape accepted by the loader.
std::string registry_to_json(const std::vector<TargetSpec>& registry);

// Validates cutoff ordering, inclusivity arity, headline bounds, name
// uniqueness, and the exactly-nine-primaries rule for the builtin table.
void validate_registry(const std::vector<TargetSpec>& registry, bool require_nine_primaries);

}  // namespace eyelab
