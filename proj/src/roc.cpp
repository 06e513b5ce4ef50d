#include "eyelab/roc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eyelab/error.hpp"
#include "eyelab/rng.hpp"
#include "eyelab/stats.hpp"

namespace eyelab {

namespace {

// Midranks of `values`: rank of each element when ties receive the average
// of the ranks they span (1-based).
std::vector<double> midranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

void split_scores(std::span<const ScoredSample> samples, std::vector<double>& pos, std::vector<double>& neg) {
    pos.clear();
    neg.clear();
    for (const auto& s : samples) (s.label ? pos : neg).push_back(s.score);
    if (pos.empty() || neg.empty())
        throw InsufficientCasesError("degenerate label set: need at least one positive and one negative");
}

double sample_covariance(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    const double mx = mean(x), my = mean(y);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (x[i] - mx) * (y[i] - my);
    return s / static_cast<double>(n - 1);
}

void require_paired_units(std::span<const ScoredSample> a, std::span<const ScoredSample> b) {
    if (a.size() != b.size()) throw DataError("paired comparison: sample counts differ");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].unit_id != b[i].unit_id || a[i].label != b[i].label)
            throw DataError("paired comparison: unit mismatch at index " + std::to_string(i));
    }
}

}  // namespace

DelongComponents delong_components(std::span<const ScoredSample> samples) {
    std::vector<double> pos, neg;
    split_scores(samples, pos, neg);
    const std::size_t m = pos.size(), n = neg.size();

    std::vector<double> combined;
    combined.reserve(m + n);
    combined.insert(combined.end(), pos.begin(), pos.end());
    combined.insert(combined.end(), neg.begin(), neg.end());

    const std::vector<double> r_all = midranks(combined);
    const std::vector<double> r_pos = midranks(pos);
    const std::vector<double> r_neg = midranks(neg);

    DelongComponents out;
    out.v10.resize(m);
    out.v01.resize(n);
    // For positive i: combined rank minus within-positives rank counts the
    // negatives below (ties as 1/2); dividing by n gives the placement.
    for (std::size_t i = 0; i < m; ++i) out.v10[i] = (r_all[i] - r_pos[i]) / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j)
        out.v01[j] = 1.0 - (r_all[m + j] - r_neg[j]) / static_cast<double>(m);

    double rank_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) rank_sum += r_all[i];
    const double md = static_cast<double>(m);
    out.auc = (rank_sum - md * (md + 1.0) / 2.0) / (md * static_cast<double>(n));
    return out;
}

double auc_midrank(std::span<const ScoredSample> samples) { return delong_components(samples).auc; }

AucEstimate delong_variance_ci(std::span<const ScoredSample> samples, double level,
                               std::vector<std::string>* warnings) {
    DelongComponents c = delong_components(samples);
    const std::size_t m = c.v10.size(), n = c.v01.size();
    if (m < 2 || n < 2)
        throw InsufficientCasesError("insufficient cases: need >= 2 positives and >= 2 negatives for a variance");

    AucEstimate est;
    est.auc = c.auc;
    est.n_pos = static_cast<int>(m);
    est.n_neg = static_cast<int>(n);
    est.variance = sample_variance(c.v10) / static_cast<double>(m) + sample_variance(c.v01) / static_cast<double>(n);
    const double zc = normal_critical(level);
    const double half = zc * std::sqrt(std::max(est.variance, 0.0));
    est.ci_low = std::max(0.0, est.auc - half);
    est.ci_high = std::min(1.0, est.auc + half);
    if (est.variance == 0.0 && warnings)
        warnings->push_back("DeLong variance is zero; confidence interval degenerates to the point estimate");
    return est;
}

PairedComparison delong_paired_test(std::span<const ScoredSample> samples_a, std::span<const ScoredSample> samples_b,
                                    double level) {
    require_paired_units(samples_a, samples_b);
    DelongComponents a = delong_components(samples_a);
    DelongComponents b = delong_components(samples_b);
    const std::size_t m = a.v10.size(), n = a.v01.size();
    if (m < 2 || n < 2)
        throw InsufficientCasesError("insufficient cases: need >= 2 positives and >= 2 negatives for a paired test");

    const double md = static_cast<double>(m), nd = static_cast<double>(n);
    const double var_a = sample_variance(a.v10) / md + sample_variance(a.v01) / nd;
    const double var_b = sample_variance(b.v10) / md + sample_variance(b.v01) / nd;
    const double cov = sample_covariance(a.v10, b.v10) / md + sample_covariance(a.v01, b.v01) / nd;
    const double var_delta = var_a + var_b - 2.0 * cov;

    PairedComparison cmp;
    cmp.auc_a = a.auc;
    cmp.auc_b = b.auc;
    cmp.delta = b.auc - a.auc;
    if (var_delta <= 0.0) {
        // Identical ranks give var_delta == 0 and delta == 0: the
        // comparison is exactly neutral. A nonzero delta with no variance
        // has no defined test statistic.
        if (cmp.delta == 0.0) {
            cmp.z = 0.0;
            cmp.p_one_sided = 0.5;
            cmp.delta_ci_low = cmp.delta_ci_high = 0.0;
            return cmp;
        }
        throw DataError("degenerate comparison: zero paired variance with nonzero AUC difference");
    }
    const double sd = std::sqrt(var_delta);
    cmp.z = cmp.delta / sd;
    cmp.p_one_sided = normal_sf(cmp.z);
    const double zc = normal_critical(level);
    cmp.delta_ci_low = std::max(-1.0, cmp.delta - zc * sd);
    cmp.delta_ci_high = std::min(1.0, cmp.delta + zc * sd);
    return cmp;
}

double bonferroni_alpha(double alpha, int m_tests) {
    if (m_tests < 1) throw DataError("bonferroni_alpha: number of tests must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("bonferroni_alpha: alpha must lie in (0,1)");
    return alpha / static_cast<double>(m_tests);
}

TopFractionResult ppv_at_top_fraction(std::span<const ScoredSample> samples, double fraction) {
    if (samples.empty()) throw DataError("ppv_at_top_fraction: empty sample set");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw DataError("ppv_at_top_fraction: fraction must lie in (0,1]");
    const double nd = static_cast<double>(samples.size());
    const int k = static_cast<int>(std::floor(fraction * nd + 0.5));
    if (k == 0)
        throw DataError("ppv_at_top_fraction: top fraction selects zero units (n = " +
                        std::to_string(samples.size()) + ")");

    std::vector<const ScoredSample*> order;
    order.reserve(samples.size());
    for (const auto& s : samples) order.push_back(&s);
    std::sort(order.begin(), order.end(), [](const ScoredSample* a, const ScoredSample* b) {
        if (a->score != b->score) return a->score > b->score;
        return a->unit_id < b->unit_id;
    });

    int positives = 0;
    for (int i = 0; i < k; ++i) positives += order[i]->label ? 1 : 0;
    TopFractionResult res;
    res.k = k;
    res.ppv = static_cast<double>(positives) / static_cast<double>(k);
    res.threshold = order[k - 1]->score;
    return res;
}

BootstrapResult bootstrap_interval(const MetricFn& metric, std::span<const ScoredSample> samples, int replicates,
                                   std::uint64_t seed, double level, std::span<const ScoredSample> paired_baseline) {
    if (replicates < 100) throw DataError("bootstrap_interval: need at least 100 replicates");
    if (samples.empty()) throw DataError("bootstrap_interval: empty sample set");
    const bool paired = !paired_baseline.empty();
    if (paired) require_paired_units(samples, paired_baseline);

    auto statistic = [&](std::span<const ScoredSample> s, std::span<const ScoredSample> base) {
        const double v = metric(s);
        if (paired) return v - metric(base);
        return v;
    };

    BootstrapResult out;
    out.estimate = statistic(samples, paired_baseline);

    const std::size_t n = samples.size();
    std::vector<double> stats;
    stats.reserve(replicates);
    std::vector<ScoredSample> draw(n), draw_base(paired ? n : 0);
    const long max_attempts = 10L * replicates;
    long attempts = 0;
    int below_or_equal_zero = 0;
    for (int rep = 0; rep < replicates; ++rep) {
        for (std::uint32_t attempt = 0;; ++attempt) {
            if (attempts++ >= max_attempts)
                throw DataError("bootstrap_interval: metric undefined on too many replicates (cap " +
                                std::to_string(max_attempts) + " attempts)");
            Rng rng = rng_stream(seed, "bootstrap",
                                 (static_cast<std::uint64_t>(rep) << 32) | static_cast<std::uint64_t>(attempt));
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t pick = static_cast<std::size_t>(rng.below(n));
                draw[i] = samples[pick];
                if (paired) draw_base[i] = paired_baseline[pick];
            }
            double value;
            try {
                value = statistic(draw, draw_base);
            } catch (const std::exception&) {
                ++out.redraws;
                continue;
            }
            if (std::isnan(value)) {
                ++out.redraws;
                continue;
            }
            stats.push_back(value);
            if (value <= 0.0) ++below_or_equal_zero;
            break;
        }
    }

    std::sort(stats.begin(), stats.end());
    // Percentile interval with linear interpolation between order
    // statistics (index h = (B-1) q).
    auto quantile = [&](double q) {
        const double h = (static_cast<double>(stats.size()) - 1.0) * q;
        const std::size_t lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, stats.size() - 1);
        const double frac = h - std::floor(h);
        return stats[lo] + frac * (stats[hi] - stats[lo]);
    };
    const double alpha = 1.0 - level;
    out.ci_low = quantile(alpha / 2.0);
    out.ci_high = quantile(1.0 - alpha / 2.0);
    if (paired)
        out.p_superiority = static_cast<double>(below_or_equal_zero) / static_cast<double>(replicates);
    return out;
}

std::vector<RocPoint> roc_curve(std::span<const ScoredSample> samples) {
    std::vector<double> pos, neg;
    split_scores(samples, pos, neg);
    const double m = static_cast<double>(pos.size());
    const double n = static_cast<double>(neg.size());

    std::vector<const ScoredSample*> order;
    order.reserve(samples.size());
    for (const auto& s : samples) order.push_back(&s);
    std::sort(order.begin(), order.end(),
              [](const ScoredSample* a, const ScoredSample* b) { return a->score > b->score; });

    std::vector<RocPoint> curve;
    curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t i = 0;
    double tp = 0.0, fp = 0.0;
    while (i < order.size()) {
        const double threshold = order[i]->score;
        // All samples sharing a score enter together (one operating point
        // per distinct threshold keeps the polyline's area equal to the
        // tie-aware AUC).
        while (i < order.size() && order[i]->score == threshold) {
            if (order[i]->label) tp += 1.0;
            else fp += 1.0;
            ++i;
        }
        curve.push_back({fp / n, tp / m, threshold});
    }
    return curve;
}

}  // namespace eyelab
