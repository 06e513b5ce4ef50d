#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eyelab/baseline.hpp"
#include "eyelab/cohort.hpp"
#include "eyelab/roc.hpp"
#include "eyelab/targets.hpp"

namespace eyelab {

// Per (visit, target) ensemble: flat arithmetic mean over every
// contributing (model member, eye image) score.
struct EnsembledScore {
    std::string patient_id;
    std::string visit_id;
    std::string target_name;
    double score = 0.0;
    int n_models = 0;  // distinct ensemble members contributing
    int n_eyes = 0;    // distinct images contributing
};

std::vector<EnsembledScore> ensemble_scores(const Cohort& cohort);

// Returns the sub-cohort whose patients belong to `slice` (a dataset id
// token); an empty token keeps everything.
Cohort filter_dataset_slice(const Cohort& cohort, const std::string& slice);

// ---- Baseline feature extraction --------------------------------------

// The candidate feature lists. The demographic set mirrors the study's
// clinicodemographic baseline (age, sex, race/ethnicity, years with
// diabetes); `augmented` adds visit-level BMI, blood pressure, and
// normalized pupil size.
std::vector<FeatureSpec> baseline_feature_candidates(bool augmented = false);

// One model-input row for a (patient, visit) pair. Unknown sex/race and
// absent measurements become missing values.
FeatureRow build_feature_row(const Cohort& cohort, const Patient& patient, const Visit& visit,
                             std::span<const FeatureSpec> specs, std::optional<int> max_window_days = std::nullopt);

// Mean pupil diameter over the visit's annotated images divided by the
// mean iris diameter; absent when nothing is annotated.
std::optional<double> visit_pupil_ratio(const Visit& visit);

// Fits the shared feature schema and one logistic model per requested
// target row on the training slice (one seeded visit per patient and
// target). Targets whose training set lacks two cases of either class are
// skipped with a warning.
SavedBaseline fit_baseline_models(const Cohort& train, const std::vector<TargetRowRef>& targets, std::uint64_t seed,
                                  bool augmented = false, double C = 1.0, double tol = 1e-8,
                                  std::vector<std::string>* warnings = nullptr);

// ---- Target evaluation -------------------------------------------------

struct EvalOptions {
    std::optional<int> max_window_days;  // tighter lab-matching cap
    double level = 0.95;                 // CI level
    double alpha = 0.05;                 // family-wise significance level
    int n_primary_tests = 9;             // Bonferroni divisor for primaries
};

// One evaluated unit: a patient at their sampled visit.
struct EvalUnit {
    std::string patient_id;
    std::string visit_id;
    bool label = false;
    double dls_score = 0.0;
    double baseline_prob = 0.0;
    int day_gap = 0;
    MatchMethod method = MatchMethod::Closest;
};

struct EvalResult {
    std::string target_name;
    bool primary = false;
    std::size_t n = 0;      // evaluated patients
    std::size_t n_pos = 0;  // positives among them
    AucEstimate baseline;
    AucEstimate dls;
    double improvement = 0.0;  // dls.auc - baseline.auc
    double improvement_ci_low = 0.0;
    double improvement_ci_high = 0.0;
    double p_one_sided = 0.0;
    double significance_alpha = 0.0;  // 0.05/9 for primaries, 0.05 otherwise
    bool significant = false;
};

struct TargetEvaluation {
    EvalResult result;
    std::vector<EvalUnit> units;  // sorted by patient_id
};

// The full pipeline for one target: match labs -> label -> sample one
// seeded visit per patient -> paired baseline-vs-DLS DeLong test. The
// per-target seed is derived from (seed, target row name), so targets are
// schedule-independent. Throws InsufficientCasesError when fewer than two
// cases of either class remain.
TargetEvaluation evaluate_target_full(const Cohort& cohort, const TargetRowRef& target,
                                      std::span<const EnsembledScore> ensembled, const SavedBaseline& baseline,
                                      std::uint64_t seed, const EvalOptions& opts = {});
EvalResult evaluate_target(const Cohort& cohort, const TargetRowRef& target,
                           std::span<const EnsembledScore> ensembled, const SavedBaseline& baseline,
                           std::uint64_t seed, const EvalOptions& opts = {});

// ROC polylines for both models on the evaluated units.
struct TargetRocCurves {
    std::vector<RocPoint> baseline;
    std::vector<RocPoint> dls;
};
TargetRocCurves roc_curves_for(const TargetEvaluation& eval);

// ---- Subgroups ----------------------------------------------------------

struct SubgroupRow {
    std::string variable;  // "All", "Age", "Sex", ...
    std::string bucket;    // "All", "(50,60]", "Female", "Unknown", ...
    std::size_t n = 0;
    std::size_t n_pos = 0;
    bool omitted_small = false;  // N_pos < 25: no statistics reported
    AucEstimate baseline;
    AucEstimate dls;
    double improvement = 0.0;
    double p_one_sided = 0.0;
    bool drop_gt_5pct = false;  // improvement > 5 points below the full set
    bool p_above_005 = false;
};

// Buckets the evaluated units of one target by the built-in scheme (age,
// BMI, years with diabetes, pupil size, sex, race, cataract, diabetic,
// IOL) and reruns the paired comparison inside each bucket. The first row
// is the full set. Buckets partition the evaluated units; units with an
// unavailable variable fall into that variable's "Unknown" bucket.
std::vector<SubgroupRow> subgroup_analysis(const Cohort& cohort, const TargetRowRef& target,
                                           std::span<const EnsembledScore> ensembled, const SavedBaseline& baseline,
                                           std::uint64_t seed, const EvalOptions& opts = {});

// ---- Temporal sensitivity ------------------------------------------------

struct SensitivityRow {
    std::string label;  // "All" or "Time delta < W"
    EvalResult result;
};

// Re-evaluates with the lab-matching gap capped at each window (windows
// must be positive and strictly descending). The first row is the
// uncapped evaluation; if that one lacks a class the whole target is
// unevaluable and InsufficientCasesError propagates. A capped window that
// loses a class only drops its own row; when `skipped` is given, each
// dropped row is recorded there as "<label>: <reason>".
std::vector<SensitivityRow> temporal_sensitivity(const Cohort& cohort, const TargetRowRef& target,
                                                 std::span<const EnsembledScore> ensembled,
                                                 const SavedBaseline& baseline, std::span<const int> windows,
                                                 std::uint64_t seed, const EvalOptions& opts = {},
                                                 std::vector<std::string>* skipped = nullptr);

// ---- Predictive value at the top of the score distribution ---------------

struct PpvResult {
    std::string target_name;
    bool primary = false;
    std::size_t n = 0;
    std::size_t n_pos = 0;
    int k = 0;  // units in the top fraction
    double baseline_ppv = 0.0, baseline_ci_low = 0.0, baseline_ci_high = 0.0;
    double dls_ppv = 0.0, dls_ci_low = 0.0, dls_ci_high = 0.0;
    double improvement = 0.0, improvement_ci_low = 0.0, improvement_ci_high = 0.0;
    double p_superiority = 0.0;  // paired bootstrap, improvement <= 0 fraction
    int redraws = 0;
};

PpvResult evaluate_ppv(const Cohort& cohort, const TargetRowRef& target, std::span<const EnsembledScore> ensembled,
                       const SavedBaseline& baseline, std::uint64_t seed, double fraction = 0.05,
                       int replicates = 2000, const EvalOptions& opts = {});

// ---- Adjusted odds ratios -------------------------------------------------

struct AdjustedTable {
    std::string target_name;
    std::size_t n = 0;
    std::size_t n_pos = 0;
    std::size_t n_excluded_unknown_sex = 0;
    std::vector<AdjustedRow> rows;
    std::vector<std::string> warnings;
};

// Multivariate logistic regression of the outcome on age, sex, race
// (pooled under 2%), years with diabetes (when >= 85% available), and the
// z-scored ensembled DLS score, over the same sampled units as
// evaluate_target. Units with unknown sex are excluded and counted.
AdjustedTable adjusted_for_target(const Cohort& cohort, const TargetRowRef& target,
                                  std::span<const EnsembledScore> ensembled, std::uint64_t seed,
                                  const EvalOptions& opts = {});

// ---- Derived label dump ----------------------------------------------------

struct DerivedRow {
    std::string target_name;
    std::string patient_id;
    std::string visit_id;
    double value = 0.0;
    int day_gap = 0;
    MatchMethod method = MatchMethod::Closest;
    bool label = false;
    int class_index = 0;
};

// Matched value + labels for every (patient, visit, target) with a
// qualifying measurement; the `derive` subcommand's payload.
std::vector<DerivedRow> derive_labels(const Cohort& cohort, const std::vector<TargetRowRef>& targets,
                                      std::optional<int> max_window_days = std::nullopt);

}  // namespace eyelab
