#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace eyelab {

// One evaluation unit (a patient) with a score and a binary outcome.
struct ScoredSample {
    std::string unit_id;
    double score = 0.0;
    bool label = false;
};

struct AucEstimate {
    double auc = 0.0;
    double variance = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n_pos = 0;
    int n_neg = 0;
};

struct PairedComparison {
    double auc_a = 0.0;
    double auc_b = 0.0;
    double delta = 0.0;  // auc_b - auc_a
    double delta_ci_low = 0.0;
    double delta_ci_high = 0.0;
    double z = 0.0;
    double p_one_sided = 0.0;  // tests superiority of b over a
};

// Per-positive (V10) and per-negative (V01) placement averages; both have
// mean equal to the AUC.
struct DelongComponents {
    double auc = 0.0;
    std::vector<double> v10;
    std::vector<double> v01;
};

// AUC via midranks in O(N log N): equals the pairwise count
// (1/(mn)) sum of [pos > neg] + 0.5 [pos == neg] exactly.
// Throws InsufficientCasesError when either class is missing.
double auc_midrank(std::span<const ScoredSample> samples);

DelongComponents delong_components(std::span<const ScoredSample> samples);

// AUC with variance S10/m + S01/n (n-1 sample variances of the structural
// components) and a Wald CI clipped to [0,1]. Requires >= 2 of each class.
// A zero variance yields a degenerate CI and, when `warnings` is given, a
// note explaining it.
AucEstimate delong_variance_ci(std::span<const ScoredSample> samples, double level = 0.95,
                               std::vector<std::string>* warnings = nullptr);

// Paired AUC comparison on identical units: z = delta / sqrt(var_a + var_b
// - 2 cov), one-sided p = 1 - Phi(z). Identical (or rank-identical) score
// sets give z = 0 and p = 0.5 exactly; a zero-variance difference with a
// nonzero delta is an error.
PairedComparison delong_paired_test(std::span<const ScoredSample> samples_a, std::span<const ScoredSample> samples_b,
                                    double level = 0.95);

double bonferroni_alpha(double alpha, int m_tests);

struct TopFractionResult {
    double ppv = 0.0;
    int k = 0;
    double threshold = 0.0;  // score of the last unit taken
};

// Positive fraction among the k = round(fraction * N) highest-scoring
// units; half-up rounding, ties broken by (score desc, unit_id asc).
TopFractionResult ppv_at_top_fraction(std::span<const ScoredSample> samples, double fraction = 0.05);

using MetricFn = std::function<double(std::span<const ScoredSample>)>;

struct BootstrapResult {
    double estimate = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::optional<double> p_superiority;  // set when a paired baseline is given
    int redraws = 0;                      // replicates discarded as undefined
};

// Percentile bootstrap over units resampled with replacement. When
// `paired_baseline` is supplied (same units, same order), the resampled
// statistic is metric(samples*) - metric(baseline*) and p is the fraction
// of replicates with improvement <= 0. Replicates where the metric is
// undefined are redrawn, up to 10x`replicates` total attempts. Each
// replicate uses an RNG stream derived from (seed, replicate), so results
// are independent of evaluation order.
BootstrapResult bootstrap_interval(const MetricFn& metric, std::span<const ScoredSample> samples, int replicates,
                                   std::uint64_t seed, double level = 0.95,
                                   std::span<const ScoredSample> paired_baseline = {});

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

// Operating points at every distinct threshold, beginning at (0,0) and
// ending at (1,1); trapezoidal area equals auc_midrank.
std::vector<RocPoint> roc_curve(std::span<const ScoredSample> samples);

}  // namespace eyelab
