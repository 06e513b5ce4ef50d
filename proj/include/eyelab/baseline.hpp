#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace eyelab {

enum class FeatureKind { Scalar, Categorical };

// A single model input before encoding.
struct FeatureValue {
    enum class Tag { Missing, Number, Category };
    Tag tag = Tag::Missing;
    double number = 0.0;
    std::string category;

    static FeatureValue missing() { return {}; }
    static FeatureValue num(double v) { return {Tag::Number, v, {}}; }
    static FeatureValue cat(std::string v) { return {Tag::Category, 0.0, std::move(v)}; }
    bool is_missing() const { return tag == Tag::Missing; }
};

using FeatureRow = std::vector<FeatureValue>;

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::Scalar;
    std::string reference_level;  // categorical only
};

// One fitted feature: training mean/std for scalars, the non-reference
// level list (sorted) for categoricals.
struct FittedFeature {
    FeatureSpec spec;
    double mean = 0.0;
    double std = 1.0;
    std::vector<std::string> levels;
};

struct FeatureSchema {
    std::vector<FittedFeature> features;
    std::vector<std::string> column_names;
    int n_columns() const { return static_cast<int>(column_names.size()); }
};

// Learns encoding statistics from training rows only: scalar mean/std
// (population variance; constant scalars are rejected) and observed
// categorical levels minus the reference.
FeatureSchema fit_schema(std::span<const FeatureRow> rows, std::span<const FeatureSpec> specs);

// Design matrix: scalars z-scored by training stats with missing values
// imputed to the training mean (0 after z-scoring); categoricals one-hot
// minus reference, with missing or unseen levels mapped to the all-zero
// block (a warning is recorded for unseen levels).
Eigen::MatrixXd encode(std::span<const FeatureRow> rows, const FeatureSchema& schema,
                       std::vector<std::string>* warnings = nullptr);

// Keeps candidates whose availability fraction is >= threshold, preserving
// order. Errors when nothing survives.
std::vector<FeatureSpec> select_baseline_features(std::span<const FeatureRow> rows,
                                                  std::span<const FeatureSpec> candidates, double threshold = 0.85);

struct LogisticModel {
    Eigen::VectorXd weights;
    double intercept = 0.0;
    double objective = 0.0;
    bool converged = false;
    int iterations = 0;
};

enum class ClassWeight { None, Balanced };

// Class-balanced L2-regularized logistic regression: minimizes
//   0.5 |w|^2 + C * sum_i s_i * log(1 + exp(-yhat_i (x_i w + b)))
// with yhat in {-1,+1}, unpenalized intercept, and balanced weights
// s_i = N / (2 N_class(i)). Damped Newton with step halving; converged
// when the gradient max-norm is <= tol.
LogisticModel fit_logistic(const Eigen::MatrixXd& X, std::span<const int> y, double C = 1.0,
                           ClassWeight class_weight = ClassWeight::Balanced, double tol = 1e-8, int max_iter = 200,
                           std::vector<std::string>* warnings = nullptr);

// General form with an explicit L2 multiplier (on 0.5 |w|^2) and raw
// per-sample loss weights. fit_logistic is the (C, class-weight)
// specialization with l2 = 1; scaling all sample weights by c is
// equivalent to dividing l2 by c.
LogisticModel fit_logistic_general(const Eigen::MatrixXd& X, std::span<const int> y,
                                   std::span<const double> sample_weights, double l2, double tol = 1e-8,
                                   int max_iter = 200, std::vector<std::string>* warnings = nullptr);

// Objective/gradient of the fit_logistic criterion, exposed for
// verification against finite differences.
double logistic_objective(const Eigen::MatrixXd& X, std::span<const int> y, const Eigen::VectorXd& w, double b,
                          double C, ClassWeight class_weight);
Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, std::span<const int> y, const Eigen::VectorXd& w, double b,
                                  double C, ClassWeight class_weight);  // last entry = d/db

Eigen::VectorXd predict_proba(const LogisticModel& model, const Eigen::MatrixXd& X);

struct AdjustedRow {
    std::string variable;
    double odds_ratio = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double p = 0.0;  // two-sided Wald
};

// Covariates for the adjusted odds-ratio analysis, one entry per unit.
struct AdjustedCovariates {
    std::vector<double> age_years;
    std::vector<std::string> race;                       // display names; pooled below 2% into Other
    std::vector<int> sex_male;                           // 1 = male
    std::vector<std::optional<double>> years_with_diabetes;  // column dropped when availability < 0.85
};

// Unweighted, unregularized MLE logistic regression of the outcome on
// age, sex, race (reference level configurable, pooling groups under 2%
// into Other), years with diabetes when sufficiently available, and the
// z-scored DLS score. OR = exp(beta) with Wald CIs from the inverse
// observed information.
std::vector<AdjustedRow> adjusted_analysis(std::span<const int> outcome_labels, const AdjustedCovariates& covariates,
                                           std::span<const double> dls_scores,
                                           const std::string& reference_race = "White",
                                           std::vector<std::string>* warnings = nullptr);

// Model persistence (schema + coefficients + training metadata).
struct SavedBaseline {
    FeatureSchema schema;
    std::map<std::string, LogisticModel> per_target;  // key: target row name
    std::string train_slice;
    std::uint64_t seed = 0;
    double C = 1.0;
    double tol = 1e-8;
};

std::string baseline_to_json(const SavedBaseline& saved);
SavedBaseline baseline_from_json(const std::string& text, const std::string& context);

}  // namespace eyelab
