#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "eyelab/error.hpp"
#include "eyelab/rng.hpp"
#include "eyelab/roc.hpp"

using namespace eyelab;

namespace {

std::vector<ScoredSample> make_samples(const std::vector<std::pair<double, bool>>& rows) {
    std::vector<ScoredSample> out;
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.push_back({"u" + std::to_string(i + 1), rows[i].first, rows[i].second});
    return out;
}

// O(mn) pairwise count: ties between a positive and a negative score 1/2.
double pairwise_auc(const std::vector<ScoredSample>& samples) {
    double num = 0.0;
    long pairs = 0;
    for (const auto& p : samples) {
        if (!p.label) continue;
        for (const auto& q : samples) {
            if (q.label) continue;
            ++pairs;
            if (p.score > q.score) num += 1.0;
            else if (p.score == q.score) num += 0.5;
        }
    }
    return num / static_cast<double>(pairs);
}

std::vector<ScoredSample> random_tied_set(Rng& rng, int n) {
    std::vector<ScoredSample> s;
    for (int i = 0; i < n; ++i) {
        // Coarse grid injects plenty of exact ties.
        const double score = static_cast<double>(rng.below(12)) / 4.0;
        s.push_back({"u" + std::to_string(i), score, rng.bernoulli(0.4)});
    }
    // Guarantee both classes.
    s[0].label = true;
    s[1].label = false;
    return s;
}

double trapezoid_area(const std::vector<RocPoint>& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
    return area;
}

// Fixture with ties both across and within classes:
// positives {3, 1, 2}, negatives {2, 0.5, 1, 3.5}.
const std::vector<std::pair<double, bool>> kFixtureA = {
    {3.0, true}, {1.0, true}, {2.0, true}, {2.0, false}, {0.5, false}, {1.0, false}, {3.5, false}};

}  // namespace

TEST_CASE("midrank AUC equals the pairwise count") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(60));
        const auto s = random_tied_set(rng, n);
        CHECK(std::abs(auc_midrank(s) - pairwise_auc(s)) <= 1e-12);
    }
}

TEST_CASE("AUC hand values") {
    const auto a = make_samples(kFixtureA);
    CHECK(std::abs(auc_midrank(a) - 7.0 / 12.0) <= 1e-12);

    CHECK(auc_midrank(make_samples({{2, true}, {3, true}, {0, false}, {1, false}})) == 1.0);
    CHECK(auc_midrank(make_samples({{0, true}, {1, true}, {2, false}, {3, false}})) == 0.0);
    CHECK(auc_midrank(make_samples({{5, true}, {5, true}, {5, false}, {5, false}})) == 0.5);
}

TEST_CASE("degenerate label sets are rejected") {
    CHECK_THROWS_AS(auc_midrank(make_samples({{1, true}, {2, true}})), InsufficientCasesError);
    CHECK_THROWS_AS(auc_midrank(make_samples({{1, false}})), InsufficientCasesError);
    CHECK_THROWS_AS(auc_midrank({}), InsufficientCasesError);
    // A variance needs two of each class.
    CHECK_THROWS_AS(delong_variance_ci(make_samples({{1, true}, {0, false}, {2, false}})), InsufficientCasesError);
}

TEST_CASE("structural components") {
    const auto a = make_samples(kFixtureA);
    const DelongComponents c = delong_components(a);
    REQUIRE(c.v10.size() == 3);
    REQUIRE(c.v01.size() == 4);
    const std::vector<double> v10 = {0.75, 0.375, 0.625};
    const std::vector<double> v01 = {0.5, 1.0, 0.8333333333333334, 0.0};
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(c.v10[i] - v10[i]) <= 1e-12);
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(c.v01[j] - v01[j]) <= 1e-12);

    // Both component means equal the AUC, on any input.
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = random_tied_set(rng, 3 + static_cast<int>(rng.below(40)));
        const DelongComponents d = delong_components(s);
        double m10 = 0.0, m01 = 0.0;
        for (double v : d.v10) m10 += v;
        for (double v : d.v01) m01 += v;
        m10 /= static_cast<double>(d.v10.size());
        m01 /= static_cast<double>(d.v01.size());
        CHECK(std::abs(m10 - d.auc) <= 1e-12);
        CHECK(std::abs(m01 - d.auc) <= 1e-12);
    }
}

TEST_CASE("DeLong variance and confidence interval") {
    const auto a = make_samples(kFixtureA);
    std::vector<std::string> warnings;
    const AucEstimate est = delong_variance_ci(a, 0.95, &warnings);
    CHECK(est.n_pos == 3);
    CHECK(est.n_neg == 4);
    CHECK(std::abs(est.variance - 0.06076388888888889) <= 1e-12);
    CHECK(std::abs(est.ci_low - 0.10019569564413433) <= 1e-9);
    CHECK(est.ci_high == 1.0);  // clipped
    CHECK(warnings.empty());

    const AucEstimate est90 = delong_variance_ci(a, 0.90);
    CHECK(std::abs(est90.ci_low - 0.17787144630976343) <= 1e-9);
    CHECK(std::abs(est90.ci_high - 0.9887952203569033) <= 1e-9);

    // Perfect separation has zero variance; the CI collapses and a note
    // explains why.
    const auto perfect = make_samples({{4, true}, {5, true}, {0, false}, {1, false}});
    std::vector<std::string> notes;
    const AucEstimate flat = delong_variance_ci(perfect, 0.95, &notes);
    CHECK(flat.variance == 0.0);
    CHECK(flat.ci_low == 1.0);
    CHECK(flat.ci_high == 1.0);
    REQUIRE(notes.size() == 1);
    CHECK(notes[0].find("zero") != std::string::npos);
}

TEST_CASE("paired test hand values") {
    // Labels: u1-u4 positive, u5-u8 negative. Model a and model b score the
    // same units.
    std::vector<ScoredSample> a, b;
    const std::vector<std::tuple<std::string, bool, double, double>> rows = {
        {"u1", true, 0.9, 0.85},  {"u2", true, 0.7, 0.95},  {"u3", true, 0.55, 0.60}, {"u4", true, 0.35, 0.45},
        {"u5", false, 0.8, 0.50}, {"u6", false, 0.45, 0.40}, {"u7", false, 0.30, 0.55}, {"u8", false, 0.20, 0.10}};
    for (const auto& [id, label, sa, sb] : rows) {
        a.push_back({id, sa, label});
        b.push_back({id, sb, label});
    }
    const PairedComparison cmp = delong_paired_test(a, b);
    CHECK(std::abs(cmp.auc_a - 0.75) <= 1e-12);
    CHECK(std::abs(cmp.auc_b - 0.875) <= 1e-12);
    CHECK(std::abs(cmp.delta - 0.125) <= 1e-12);
    CHECK(std::abs(cmp.z - 0.7071067811865475) <= 1e-12);
    CHECK(std::abs(cmp.p_one_sided - 0.23975006109347677) <= 1e-12);
    CHECK(std::abs(cmp.delta_ci_low - -0.22147595608741932) <= 1e-9);
    CHECK(std::abs(cmp.delta_ci_high - 0.4714759560874193) <= 1e-9);

    // Reversing the roles negates delta and z; the one-sided p-values of
    // the two directions sum to one.
    const PairedComparison rev = delong_paired_test(b, a);
    CHECK(std::abs(rev.delta + cmp.delta) <= 1e-12);
    CHECK(std::abs(rev.z + cmp.z) <= 1e-12);
    CHECK(std::abs(rev.p_one_sided + cmp.p_one_sided - 1.0) <= 1e-12);
}

TEST_CASE("paired test neutral cases are exact") {
    Rng rng(99);
    const auto a = random_tied_set(rng, 30);

    const PairedComparison self = delong_paired_test(a, a);
    CHECK(self.z == 0.0);
    CHECK(self.p_one_sided == 0.5);
    CHECK(self.delta == 0.0);

    // Any strictly increasing transform preserves ranks, so the comparison
    // stays exactly neutral.
    auto b = a;
    for (auto& s : b) s.score = 3.0 * s.score - 1.0;
    const PairedComparison affine = delong_paired_test(a, b);
    CHECK(affine.z == 0.0);
    CHECK(affine.p_one_sided == 0.5);

    auto c = a;
    for (auto& s : c) s.score = std::atan(s.score);
    const PairedComparison curved = delong_paired_test(a, c);
    CHECK(curved.z == 0.0);
    CHECK(curved.p_one_sided == 0.5);
}

TEST_CASE("paired test degenerate and mismatched inputs") {
    // Constant scores vs perfect separation: both variances are zero but
    // the AUCs differ, so no test statistic exists.
    const auto flat = make_samples({{1, true}, {1, true}, {1, false}, {1, false}});
    auto sharp = flat;
    sharp[0].score = 9;
    sharp[1].score = 9;
    CHECK_THROWS_AS(delong_paired_test(flat, sharp), DataError);

    auto dropped = flat;
    dropped.pop_back();
    CHECK_THROWS_AS(delong_paired_test(flat, dropped), DataError);

    auto renamed = flat;
    renamed[2].unit_id = "someone-else";
    CHECK_THROWS_AS(delong_paired_test(flat, renamed), DataError);

    auto relabeled = flat;
    relabeled[2].label = true;
    CHECK_THROWS_AS(delong_paired_test(flat, relabeled), DataError);

    CHECK_THROWS_AS(delong_paired_test(make_samples({{1, true}, {0, false}, {2, false}}),
                                       make_samples({{2, true}, {0, false}, {1, false}})),
                    InsufficientCasesError);
}

TEST_CASE("bonferroni") {
    CHECK(bonferroni_alpha(0.05, 9) == 0.05 / 9.0);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.4f", bonferroni_alpha(0.05, 9));
    CHECK(std::string(buf) == "0.0056");
    CHECK(bonferroni_alpha(0.05, 1) == 0.05);
    CHECK_THROWS_AS(bonferroni_alpha(0.05, 0), DataError);
    CHECK_THROWS_AS(bonferroni_alpha(0.0, 3), DataError);
    CHECK_THROWS_AS(bonferroni_alpha(1.0, 3), DataError);
}

TEST_CASE("top-fraction PPV") {
    // Ten units; the 0.8 tie straddles the cut at k = 2 and resolves by
    // unit id.
    std::vector<ScoredSample> s = {
        {"a", 0.9, true},  {"c", 0.8, false}, {"b", 0.8, true},  {"d", 0.7, true},  {"e", 0.6, false},
        {"f", 0.5, false}, {"g", 0.4, true},  {"h", 0.3, false}, {"i", 0.2, false}, {"j", 0.1, false}};

    const TopFractionResult top2 = ppv_at_top_fraction(s, 0.2);
    CHECK(top2.k == 2);
    CHECK(top2.ppv == 1.0);  // {a, b}: id "b" beats "c" at score 0.8
    CHECK(top2.threshold == 0.8);

    // Renaming the tied positive past "c" flips which unit makes the cut.
    auto renamed = s;
    for (auto& u : renamed)
        if (u.unit_id == "b") u.unit_id = "z";
    const TopFractionResult flipped = ppv_at_top_fraction(renamed, 0.2);
    CHECK(flipped.k == 2);
    CHECK(flipped.ppv == 0.5);  // {a, c} now
    CHECK(flipped.threshold == 0.8);

    const TopFractionResult top3 = ppv_at_top_fraction(s, 0.25);  // 2.5 rounds half-up to 3
    CHECK(top3.k == 3);
    CHECK(std::abs(top3.ppv - 2.0 / 3.0) <= 1e-12);
    CHECK(top3.threshold == 0.8);

    const TopFractionResult one = ppv_at_top_fraction(s, 0.05);  // 0.5 rounds half-up to 1
    CHECK(one.k == 1);
    CHECK(one.ppv == 1.0);
    CHECK(one.threshold == 0.9);

    const TopFractionResult all = ppv_at_top_fraction(s, 1.0);
    CHECK(all.k == 10);
    CHECK(all.ppv == 0.4);

    // Input order never matters.
    auto shuffled = s;
    std::reverse(shuffled.begin(), shuffled.end());
    const TopFractionResult again = ppv_at_top_fraction(shuffled, 0.25);
    CHECK(again.ppv == top3.ppv);
    CHECK(again.k == top3.k);
    CHECK(again.threshold == top3.threshold);

    CHECK_THROWS_AS(ppv_at_top_fraction({}, 0.5), DataError);
    CHECK_THROWS_AS(ppv_at_top_fraction(s, 0.0), DataError);
    CHECK_THROWS_AS(ppv_at_top_fraction(s, 1.5), DataError);
    const auto tiny = make_samples({{1, true}, {2, false}, {3, true}, {4, false}});
    CHECK_THROWS_AS(ppv_at_top_fraction(tiny, 0.1), DataError);  // k would be 0
}

TEST_CASE("bootstrap determinism and paired p-value") {
    Rng rng(5);
    const auto s = random_tied_set(rng, 40);
    const MetricFn auc = [](std::span<const ScoredSample> x) { return auc_midrank(x); };

    const BootstrapResult r1 = bootstrap_interval(auc, s, 200, 1234);
    const BootstrapResult r2 = bootstrap_interval(auc, s, 200, 1234);
    CHECK(r1.estimate == r2.estimate);
    CHECK(r1.ci_low == r2.ci_low);
    CHECK(r1.ci_high == r2.ci_high);
    CHECK(r1.redraws == r2.redraws);
    CHECK_FALSE(r1.p_superiority.has_value());
    CHECK(r1.ci_low <= r1.ci_high);

    const BootstrapResult other = bootstrap_interval(auc, s, 200, 4321);
    CHECK(r1.ci_low != other.ci_low);  // different seed, different draws

    // Paired against itself: every replicate improvement is exactly zero.
    const BootstrapResult self = bootstrap_interval(auc, s, 200, 7, 0.95, s);
    REQUIRE(self.p_superiority.has_value());
    CHECK(*self.p_superiority == 1.0);
    CHECK(self.estimate == 0.0);
    CHECK(self.ci_low == 0.0);
    CHECK(self.ci_high == 0.0);

    // Mean score of constant-1 samples against constant-0 baseline: the
    // improvement is +1 in every replicate.
    const MetricFn mean_score = [](std::span<const ScoredSample> x) {
        double t = 0.0;
        for (const auto& v : x) t += v.score;
        return t / static_cast<double>(x.size());
    };
    std::vector<ScoredSample> ones, zeros;
    for (int i = 0; i < 12; ++i) {
        ones.push_back({"u" + std::to_string(i), 1.0, i % 2 == 0});
        zeros.push_back({"u" + std::to_string(i), 0.0, i % 2 == 0});
    }
    const BootstrapResult up = bootstrap_interval(mean_score, ones, 200, 7, 0.95, zeros);
    REQUIRE(up.p_superiority.has_value());
    CHECK(*up.p_superiority == 0.0);
    CHECK(up.estimate == 1.0);
    CHECK(up.ci_low == 1.0);
    CHECK(up.ci_high == 1.0);
}

TEST_CASE("bootstrap redraws undefined replicates") {
    // One positive among eight units: many resamples miss the positive and
    // the AUC is undefined there, so those replicates are redrawn.
    std::vector<ScoredSample> s;
    for (int i = 0; i < 8; ++i) s.push_back({"u" + std::to_string(i), static_cast<double>(i), i == 7});
    const MetricFn auc = [](std::span<const ScoredSample> x) { return auc_midrank(x); };
    const BootstrapResult r = bootstrap_interval(auc, s, 150, 11);
    CHECK(r.redraws > 0);

    // A metric that is never defined exhausts the 10x attempt cap.
    const MetricFn never = [](std::span<const ScoredSample>) -> double {
        throw DataError("undefined");
    };
    CHECK_THROWS_AS(bootstrap_interval(never, s, 100, 1), DataError);

    CHECK_THROWS_AS(bootstrap_interval(auc, s, 99, 1), DataError);
    CHECK_THROWS_AS(bootstrap_interval(auc, {}, 100, 1), DataError);
}

TEST_CASE("ROC curve shape and area identity") {
    const auto a = make_samples(kFixtureA);
    const std::vector<RocPoint> curve = roc_curve(a);
    REQUIRE(curve.size() >= 2);
    CHECK(curve.front().fpr == 0.0);
    CHECK(curve.front().tpr == 0.0);
    CHECK(std::isinf(curve.front().threshold));
    CHECK(curve.back().fpr == 1.0);
    CHECK(curve.back().tpr == 1.0);

    // One operating point per distinct score, plus the origin.
    std::vector<double> scores;
    for (const auto& s : a) scores.push_back(s.score);
    std::sort(scores.begin(), scores.end());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
    CHECK(curve.size() == scores.size() + 1);

    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = random_tied_set(rng, 3 + static_cast<int>(rng.below(50)));
        const auto c = roc_curve(s);
        for (std::size_t i = 1; i < c.size(); ++i) {
            CHECK(c[i].fpr >= c[i - 1].fpr);
            CHECK(c[i].tpr >= c[i - 1].tpr);
            CHECK(c[i].threshold < c[i - 1].threshold);
        }
        CHECK(std::abs(trapezoid_area(c) - auc_midrank(s)) <= 1e-12);
    }
}
