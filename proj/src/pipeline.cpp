#include "eyelab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "eyelab/error.hpp"
#include "eyelab/rng.hpp"

namespace eyelab {

std::vector<EnsembledScore> ensemble_scores(const Cohort& cohort) {
    // Scores are canonically sorted by (target, patient, visit, image,
    // member), so each (target, visit) group is one contiguous run.
    std::vector<EnsembledScore> out;
    std::size_t i = 0;
    const auto& scores = cohort.scores;
    while (i < scores.size()) {
        std::size_t j = i;
        double sum = 0.0;
        std::set<std::string> members, images;
        while (j < scores.size() && scores[j].target_name == scores[i].target_name &&
               scores[j].visit_id == scores[i].visit_id) {
            sum += scores[j].score;
            members.insert(scores[j].model_member);
            images.insert(scores[j].image_id);
            ++j;
        }
        EnsembledScore e;
        e.patient_id = scores[i].patient_id;
        e.visit_id = scores[i].visit_id;
        e.target_name = scores[i].target_name;
        e.score = sum / static_cast<double>(j - i);
        e.n_models = static_cast<int>(members.size());
        e.n_eyes = static_cast<int>(images.size());
        out.push_back(std::move(e));
        i = j;
    }
    return out;
}

namespace {

bool same_dataset(const DatasetId& a, const DatasetId& b) {
    if (a.kind != b.kind) return false;
    return a.kind != DatasetId::Kind::Custom || a.custom == b.custom;
}

}  // namespace

Cohort filter_dataset_slice(const Cohort& cohort, const std::string& slice) {
    Cohort out;
    if (slice.empty()) {
        out = cohort;
        out.rebuild_indexes();
        return out;
    }
    const DatasetId wanted = parse_dataset_id(slice, "dataset slice");
    std::set<std::string> keep;
    for (const auto& p : cohort.patients) {
        if (same_dataset(p.dataset_id, wanted)) {
            keep.insert(p.patient_id);
            out.patients.push_back(p);
        }
    }
    for (const auto& v : cohort.visits) {
        if (keep.count(v.patient_id)) out.visits.push_back(v);
    }
    for (const auto& m : cohort.measurements) {
        if (keep.count(m.patient_id)) out.measurements.push_back(m);
    }
    for (const auto& s : cohort.scores) {
        if (keep.count(s.patient_id)) out.scores.push_back(s);
    }
    out.rebuild_indexes();
    return out;
}

std::vector<FeatureSpec> baseline_feature_candidates(bool augmented) {
    std::vector<FeatureSpec> specs = {{"age", FeatureKind::Scalar, ""},
                                      {"sex", FeatureKind::Categorical, "Female"},
                                      {"race_ethnicity", FeatureKind::Categorical, "White"},
                                      {"years_with_diabetes", FeatureKind::Scalar, ""}};
    if (augmented) {
        specs.push_back({"bmi", FeatureKind::Scalar, ""});
        specs.push_back({"systolic_bp", FeatureKind::Scalar, ""});
        specs.push_back({"diastolic_bp", FeatureKind::Scalar, ""});
        specs.push_back({"pupil", FeatureKind::Scalar, ""});
    }
    return specs;
}

std::optional<double> visit_pupil_ratio(const Visit& visit) {
    double pupil_sum = 0.0, iris_sum = 0.0;
    int count = 0;
    for (const auto& img : visit.images) {
        if (!img.annotation) continue;
        pupil_sum += 0.5 * (img.annotation->pupil.width + img.annotation->pupil.height);
        iris_sum += 0.5 * (img.annotation->iris.width + img.annotation->iris.height);
        ++count;
    }
    if (count == 0 || iris_sum <= 0.0) return std::nullopt;
    return pupil_sum / iris_sum;
}

FeatureRow build_feature_row(const Cohort& cohort, const Patient& patient, const Visit& visit,
                             std::span<const FeatureSpec> specs, std::optional<int> max_window_days) {
    FeatureRow row;
    row.reserve(specs.size());
    auto matched_scalar = [&](Analyte a) -> FeatureValue {
        auto m = matched_analyte_value(cohort, patient, visit, a, max_window_days);
        return m ? FeatureValue::num(m->value) : FeatureValue::missing();
    };
    for (const auto& spec : specs) {
        if (spec.name == "age") {
            row.push_back(FeatureValue::num(patient.age_years));
        } else if (spec.name == "sex") {
            row.push_back(patient.sex == Sex::Unknown ? FeatureValue::missing()
                                                      : FeatureValue::cat(to_string(patient.sex)));
        } else if (spec.name == "race_ethnicity") {
            row.push_back(patient.race_ethnicity == RaceEthnicity::Unknown
                              ? FeatureValue::missing()
                              : FeatureValue::cat(to_string(patient.race_ethnicity)));
        } else if (spec.name == "years_with_diabetes") {
            row.push_back(patient.years_with_diabetes ? FeatureValue::num(*patient.years_with_diabetes)
                                                      : FeatureValue::missing());
        } else if (spec.name == "bmi") {
            row.push_back(matched_scalar(Analyte::BMI));
        } else if (spec.name == "systolic_bp") {
            row.push_back(matched_scalar(Analyte::SystolicBP));
        } else if (spec.name == "diastolic_bp") {
            row.push_back(matched_scalar(Analyte::DiastolicBP));
        } else if (spec.name == "pupil") {
            auto r = visit_pupil_ratio(visit);
            row.push_back(r ? FeatureValue::num(*r) : FeatureValue::missing());
        } else {
            throw DataError("unknown baseline feature '" + spec.name + "'");
        }
    }
    return row;
}

SavedBaseline fit_baseline_models(const Cohort& train, const std::vector<TargetRowRef>& targets, std::uint64_t seed,
                                  bool augmented, double C, double tol, std::vector<std::string>* warnings) {
    const std::vector<FeatureSpec> candidates = baseline_feature_candidates(augmented);

    // Availability is judged over every (patient, visit) row of the
    // training slice; the schema statistics come from the same rows.
    std::vector<FeatureRow> all_rows;
    for (const auto& patient : train.patients) {
        for (std::size_t vi : train.visits_of(patient.patient_id)) {
            all_rows.push_back(build_feature_row(train, patient, train.visits[vi], candidates));
        }
    }
    if (all_rows.empty()) throw DataError("fit_baseline_models: training slice has no visits");

    const std::vector<FeatureSpec> selected = select_baseline_features(all_rows, candidates);
    if (warnings && selected.size() < candidates.size()) {
        for (const auto& c : candidates) {
            bool kept = std::any_of(selected.begin(), selected.end(),
                                    [&](const FeatureSpec& s) { return s.name == c.name; });
            if (!kept) warnings->push_back("baseline feature '" + c.name + "' dropped: available for <85% of rows");
        }
    }

    std::vector<FeatureRow> schema_rows;
    for (const auto& patient : train.patients) {
        for (std::size_t vi : train.visits_of(patient.patient_id)) {
            schema_rows.push_back(build_feature_row(train, patient, train.visits[vi], selected));
        }
    }

    SavedBaseline saved;
    saved.schema = fit_schema(schema_rows, selected);
    saved.seed = seed;
    saved.C = C;
    saved.tol = tol;

    for (const auto& target : targets) {
        const std::string name = target.row_name();
        const auto sampled = sample_one_visit_per_patient(train, target.spec->analyte, derive_seed(seed, name));
        std::vector<FeatureRow> rows;
        std::vector<int> y;
        for (const auto& [pid, vid] : sampled) {
            const Patient* patient = train.find_patient(pid);
            const Visit* visit = train.find_visit(vid);
            auto matched = matched_analyte_value(train, *patient, *visit, target.spec->analyte);
            rows.push_back(build_feature_row(train, *patient, *visit, selected));
            y.push_back(row_positive(matched->value, *target.spec, target.cutoff_index) ? 1 : 0);
        }
        const long n_pos = std::count(y.begin(), y.end(), 1);
        const long n_neg = static_cast<long>(y.size()) - n_pos;
        if (n_pos < 2 || n_neg < 2) {
            if (warnings)
                warnings->push_back("skipping target '" + name + "': training slice has " + std::to_string(n_pos) +
                                    " positives / " + std::to_string(n_neg) + " negatives");
            continue;
        }
        const Eigen::MatrixXd X = encode(rows, saved.schema, warnings);
        saved.per_target[name] = fit_logistic(X, y, C, ClassWeight::Balanced, tol, 200, warnings);
    }
    return saved;
}

namespace {

std::vector<FeatureSpec> schema_specs(const FeatureSchema& schema) {
    std::vector<FeatureSpec> specs;
    specs.reserve(schema.features.size());
    for (const auto& f : schema.features) specs.push_back(f.spec);
    return specs;
}

}  // namespace

TargetEvaluation evaluate_target_full(const Cohort& cohort, const TargetRowRef& target,
                                      std::span<const EnsembledScore> ensembled, const SavedBaseline& baseline,
                                      std::uint64_t seed, const EvalOptions& opts) {
    const std::string name = target.row_name();
    auto model_it = baseline.per_target.find(name);
    if (model_it == baseline.per_target.end())
        throw DataError("baseline model has no entry for target '" + name + "' (refit including it)");
    const LogisticModel& model = model_it->second;

    std::unordered_map<std::string, double> dls_by_visit;
    for (const auto& e : ensembled) {
        if (e.target_name == name) dls_by_visit.emplace(e.visit_id, e.score);
    }

    const std::uint64_t target_seed = derive_seed(seed, name);
    const auto sampled = sample_one_visit_per_patient(cohort, target.spec->analyte, target_seed, opts.max_window_days);

    const std::vector<FeatureSpec> specs = schema_specs(baseline.schema);
    TargetEvaluation eval;
    std::vector<FeatureRow> rows;
    for (const auto& [pid, vid] : sampled) {
        auto dls = dls_by_visit.find(vid);
        if (dls == dls_by_visit.end()) continue;  // no score for the sampled visit
        const Patient* patient = cohort.find_patient(pid);
        const Visit* visit = cohort.find_visit(vid);
        const auto matched = matched_analyte_value(cohort, *patient, *visit, target.spec->analyte,
                                                   opts.max_window_days);
        EvalUnit unit;
        unit.patient_id = pid;
        unit.visit_id = vid;
        unit.label = row_positive(matched->value, *target.spec, target.cutoff_index);
        unit.dls_score = dls->second;
        unit.day_gap = matched->day_gap;
        unit.method = matched->method;
        eval.units.push_back(std::move(unit));
        rows.push_back(build_feature_row(cohort, *patient, *visit, specs, opts.max_window_days));
    }

    std::size_t n_pos = 0;
    for (const auto& u : eval.units) n_pos += u.label ? 1 : 0;
    const std::size_t n_neg = eval.units.size() - n_pos;
    if (n_pos < 2 || n_neg < 2)
        throw InsufficientCasesError("target '" + name + "': insufficient cases (" + std::to_string(n_pos) +
                                     " positives / " + std::to_string(n_neg) + " negatives after sampling)");

    const Eigen::MatrixXd X = encode(rows, baseline.schema);
    const Eigen::VectorXd probs = predict_proba(model, X);
    for (std::size_t i = 0; i < eval.units.size(); ++i)
        eval.units[i].baseline_prob = probs(static_cast<Eigen::Index>(i));

    std::vector<ScoredSample> base, dls;
    base.reserve(eval.units.size());
    dls.reserve(eval.units.size());
    for (const auto& u : eval.units) {
        base.push_back({u.patient_id, u.baseline_prob, u.label});
        dls.push_back({u.patient_id, u.dls_score, u.label});
    }

    const PairedComparison cmp = delong_paired_test(base, dls, opts.level);

    EvalResult& r = eval.result;
    r.target_name = name;
    r.primary = target.is_primary_row();
    r.n = eval.units.size();
    r.n_pos = n_pos;
    r.baseline = delong_variance_ci(base, opts.level);
    r.dls = delong_variance_ci(dls, opts.level);
    r.improvement = r.dls.auc - r.baseline.auc;
    r.improvement_ci_low = cmp.delta_ci_low;
    r.improvement_ci_high = cmp.delta_ci_high;
    r.p_one_sided = cmp.p_one_sided;
    r.significance_alpha = r.primary ? bonferroni_alpha(opts.alpha, opts.n_primary_tests) : opts.alpha;
    r.significant = r.p_one_sided < r.significance_alpha;
    return eval;
}

EvalResult evaluate_target(const Cohort& cohort, const TargetRowRef& target,
                           std::span<const EnsembledScore> ensembled, const SavedBaseline& baseline,
                           std::uint64_t seed, const EvalOptions& opts) {
    return evaluate_target_full(cohort, target, ensembled, baseline, seed, opts).result;
}

TargetRocCurves roc_curves_for(const TargetEvaluation& eval) {
    std::vector<ScoredSample> base, dls;
    for (const auto& u : eval.units) {
        base.push_back({u.patient_id, u.baseline_prob, u.label});
        dls.push_back({u.patient_id, u.dls_score, u.label});
    }
    return {roc_curve(base), roc_curve(dls)};
}

namespace {

struct BucketScheme {
    std::string variable;
    std::vector<std::string> buckets;  // fixed display order, Unknown appended on demand
    // Assigns a unit to a bucket label; empty string means Unknown.
    std::function<std::string(const Cohort&, const Patient&, const Visit&, const EvalOptions&)> assign;
};

std::string interval_bucket(double v, std::span<const double> edges, std::span<const std::string> labels) {
    // edges are upper bounds of all but the last bucket
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (v <= edges[i]) return labels[i];
    }
    return labels[edges.size()];
}

std::string tri_state(const std::optional<bool>& b) {
    if (!b) return "";
    return *b ? "true" : "false";
}

std::vector<BucketScheme> bucket_schemes() {
    std::vector<BucketScheme> schemes;

    schemes.push_back({"Age",
                       {"(0,50]", "(50,60]", "(60,70]", "(70,inf)"},
                       [](const Cohort&, const Patient& p, const Visit&, const EvalOptions&) {
                           static const std::vector<double> edges{50.0, 60.0, 70.0};
                           static const std::vector<std::string> labels{"(0,50]", "(50,60]", "(60,70]", "(70,inf)"};
                           return interval_bucket(p.age_years, edges, labels);
                       }});
    schemes.push_back({"BMI",
                       {"(0,25]", "(25,30]", "(30,35]", "(35,inf)"},
                       [](const Cohort& c, const Patient& p, const Visit& v, const EvalOptions& o) -> std::string {
                           auto m = matched_analyte_value(c, p, v, Analyte::BMI, o.max_window_days);
                           if (!m) return "";
                           static const std::vector<double> edges{25.0, 30.0, 35.0};
                           static const std::vector<std::string> labels{"(0,25]", "(25,30]", "(30,35]", "(35,inf)"};
                           return interval_bucket(m->value, edges, labels);
                       }});
    schemes.push_back({"Years with diabetes",
                       {"[0,5]", "(5,10]", "(10,inf)"},
                       [](const Cohort&, const Patient& p, const Visit&, const EvalOptions&) -> std::string {
                           if (!p.years_with_diabetes) return "";
                           static const std::vector<double> edges{5.0, 10.0};
                           static const std::vector<std::string> labels{"[0,5]", "(5,10]", "(10,inf)"};
                           return interval_bucket(*p.years_with_diabetes, edges, labels);
                       }});
    schemes.push_back({"Pupil size",
                       {"(0,0.4]", "(0.4,0.5]", "(0.5,1.0]"},
                       [](const Cohort&, const Patient&, const Visit& v, const EvalOptions&) -> std::string {
                           auto r = visit_pupil_ratio(v);
                           if (!r) return "";
                           static const std::vector<double> edges{0.4, 0.5};
                           static const std::vector<std::string> labels{"(0,0.4]", "(0.4,0.5]", "(0.5,1.0]"};
                           return interval_bucket(*r, edges, labels);
                       }});
    schemes.push_back({"Sex",
                       {"Female", "Male"},
                       [](const Cohort&, const Patient& p, const Visit&, const EvalOptions&) -> std::string {
                           return p.sex == Sex::Unknown ? "" : to_string(p.sex);
                       }});
    schemes.push_back({"Race/ethnicity",
                       {"Hispanic", "White", "Black", "Asian/Pacific Islander", "Native American", "Other"},
                       [](const Cohort&, const Patient& p, const Visit&, const EvalOptions&) -> std::string {
                           return p.race_ethnicity == RaceEthnicity::Unknown ? "" : to_string(p.race_ethnicity);
                       }});
    schemes.push_back({"Cataract",
                       {"true", "false"},
                       [](const Cohort&, const Patient&, const Visit& v, const EvalOptions&) {
                           return tri_state(v.cataract_present);
                       }});
    schemes.push_back({"Diabetic",
                       {"true", "false"},
                       [](const Cohort&, const Patient& p, const Visit&, const EvalOptions&) {
                           return tri_state(p.diabetic);
                       }});
    schemes.push_back({"Intraocular lens",
                       {"true", "false"},
                       [](const Cohort&, const Patient&, const Visit& v, const EvalOptions&) {
                           return tri_state(v.intraocular_lens);
                       }});
    return schemes;
}

}  // namespace

std::vector<SubgroupRow> subgroup_analysis(const Cohort& cohort, const TargetRowRef& target,
                                           std::span<const EnsembledScore> ensembled, const SavedBaseline& baseline,
                                           std::uint64_t seed, const EvalOptions& opts) {
    const TargetEvaluation eval = evaluate_target_full(cohort, target, ensembled, baseline, seed, opts);

    std::vector<SubgroupRow> rows;
    {
        SubgroupRow all;
        all.variable = "All";
        all.bucket = "All";
        all.n = eval.result.n;
        all.n_pos = eval.result.n_pos;
        all.baseline = eval.result.baseline;
        all.dls = eval.result.dls;
        all.improvement = eval.result.improvement;
        all.p_one_sided = eval.result.p_one_sided;
        all.p_above_005 = all.p_one_sided > 0.05;
        rows.push_back(std::move(all));
    }
    const double full_improvement = eval.result.improvement;

    for (const auto& scheme : bucket_schemes()) {
        // Assign every unit, keeping the fixed bucket order and adding an
        // Unknown bucket only when some unit needs it.
        std::map<std::string, std::vector<const EvalUnit*>> groups;
        bool any_unknown = false;
        for (const auto& u : eval.units) {
            const Patient* p = cohort.find_patient(u.patient_id);
            const Visit* v = cohort.find_visit(u.visit_id);
            std::string bucket = scheme.assign(cohort, *p, *v, opts);
            if (bucket.empty()) {
                bucket = "Unknown";
                any_unknown = true;
            }
            groups[bucket].push_back(&u);
        }
        std::vector<std::string> order = scheme.buckets;
        if (any_unknown) order.push_back("Unknown");

        for (const auto& bucket : order) {
            SubgroupRow row;
            row.variable = scheme.variable;
            row.bucket = bucket;
            const auto it = groups.find(bucket);
            const auto* units = it == groups.end() ? nullptr : &it->second;
            row.n = units ? units->size() : 0;
            std::size_t n_pos = 0;
            if (units) {
                for (const auto* u : *units) n_pos += u->label ? 1 : 0;
            }
            row.n_pos = n_pos;
            const std::size_t n_neg = row.n - n_pos;
            if (n_pos < 25 || n_neg < 2) {
                row.omitted_small = true;
                rows.push_back(std::move(row));
                continue;
            }
            std::vector<ScoredSample> base, dls;
            for (const auto* u : *units) {
                base.push_back({u->patient_id, u->baseline_prob, u->label});
                dls.push_back({u->patient_id, u->dls_score, u->label});
            }
            const PairedComparison cmp = delong_paired_test(base, dls, opts.level);
            row.baseline = delong_variance_ci(base, opts.level);
            row.dls = delong_variance_ci(dls, opts.level);
            row.improvement = row.dls.auc - row.baseline.auc;
            row.p_one_sided = cmp.p_one_sided;
            row.drop_gt_5pct = (full_improvement - row.improvement) > 0.05;
            row.p_above_005 = row.p_one_sided > 0.05;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::vector<SensitivityRow> temporal_sensitivity(const Cohort& cohort, const TargetRowRef& target,
                                                 std::span<const EnsembledScore> ensembled,
                                                 const SavedBaseline& baseline, std::span<const int> windows,
                                                 std::uint64_t seed, const EvalOptions& opts,
                                                 std::vector<std::string>* skipped) {
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i] <= 0) throw DataError("temporal_sensitivity: windows must be positive");
        if (i > 0 && windows[i] >= windows[i - 1])
            throw DataError("temporal_sensitivity: windows must be strictly descending");
    }
    std::vector<SensitivityRow> rows;
    rows.push_back({"All", evaluate_target(cohort, target, ensembled, baseline, seed, opts)});
    for (int w : windows) {
        EvalOptions capped = opts;
        capped.max_window_days = opts.max_window_days ? std::min(*opts.max_window_days, w) : w;
        const std::string label = "Time delta < " + std::to_string(w);
        try {
            rows.push_back({label, evaluate_target(cohort, target, ensembled, baseline, seed, capped)});
        } catch (const InsufficientCasesError& e) {
            // A tight window can erase one class for a rare target; the
            // looser rows are still informative, so only this row goes.
            if (skipped) skipped->push_back(label + ": " + e.what());
        }
    }
    return rows;
}

PpvResult evaluate_ppv(const Cohort& cohort, const TargetRowRef& target, std::span<const EnsembledScore> ensembled,
                       const SavedBaseline& baseline, std::uint64_t seed, double fraction, int replicates,
                       const EvalOptions& opts) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw DataError("evaluate_ppv: fraction must lie in (0, 1]");
    const TargetEvaluation eval = evaluate_target_full(cohort, target, ensembled, baseline, seed, opts);

    std::vector<ScoredSample> base, dls;
    for (const auto& u : eval.units) {
        base.push_back({u.patient_id, u.baseline_prob, u.label});
        dls.push_back({u.patient_id, u.dls_score, u.label});
    }

    const std::uint64_t target_seed = derive_seed(seed, eval.result.target_name);
    const MetricFn metric = [fraction](std::span<const ScoredSample> s) {
        return ppv_at_top_fraction(s, fraction).ppv;
    };

    PpvResult r;
    r.target_name = eval.result.target_name;
    r.primary = eval.result.primary;
    r.n = eval.result.n;
    r.n_pos = eval.result.n_pos;
    r.k = ppv_at_top_fraction(dls, fraction).k;
    r.baseline_ppv = metric(base);
    r.dls_ppv = metric(dls);

    const BootstrapResult bs_b =
        bootstrap_interval(metric, base, replicates, derive_seed(target_seed, "ppv-baseline"), opts.level);
    const BootstrapResult bs_d =
        bootstrap_interval(metric, dls, replicates, derive_seed(target_seed, "ppv-dls"), opts.level);
    const BootstrapResult bs_i =
        bootstrap_interval(metric, dls, replicates, derive_seed(target_seed, "ppv-improvement"), opts.level, base);

    r.baseline_ci_low = bs_b.ci_low;
    r.baseline_ci_high = bs_b.ci_high;
    r.dls_ci_low = bs_d.ci_low;
    r.dls_ci_high = bs_d.ci_high;
    r.improvement = r.dls_ppv - r.baseline_ppv;
    r.improvement_ci_low = bs_i.ci_low;
    r.improvement_ci_high = bs_i.ci_high;
    r.p_superiority = bs_i.p_superiority.value_or(1.0);
    r.redraws = bs_b.redraws + bs_d.redraws + bs_i.redraws;
    return r;
}

AdjustedTable adjusted_for_target(const Cohort& cohort, const TargetRowRef& target,
                                  std::span<const EnsembledScore> ensembled, std::uint64_t seed,
                                  const EvalOptions& opts) {
    const std::string name = target.row_name();
    std::unordered_map<std::string, double> dls_by_visit;
    for (const auto& e : ensembled) {
        if (e.target_name == name) dls_by_visit.emplace(e.visit_id, e.score);
    }

    const std::uint64_t target_seed = derive_seed(seed, name);
    const auto sampled = sample_one_visit_per_patient(cohort, target.spec->analyte, target_seed, opts.max_window_days);

    AdjustedTable table;
    table.target_name = name;
    std::vector<int> y;
    AdjustedCovariates cov;
    std::vector<double> scores;
    for (const auto& [pid, vid] : sampled) {
        auto dls = dls_by_visit.find(vid);
        if (dls == dls_by_visit.end()) continue;
        const Patient* patient = cohort.find_patient(pid);
        if (patient->sex == Sex::Unknown) {
            ++table.n_excluded_unknown_sex;
            continue;
        }
        const Visit* visit = cohort.find_visit(vid);
        const auto matched = matched_analyte_value(cohort, *patient, *visit, target.spec->analyte,
                                                   opts.max_window_days);
        y.push_back(row_positive(matched->value, *target.spec, target.cutoff_index) ? 1 : 0);
        cov.age_years.push_back(patient->age_years);
        cov.race.push_back(to_string(patient->race_ethnicity));
        cov.sex_male.push_back(patient->sex == Sex::Male ? 1 : 0);
        cov.years_with_diabetes.push_back(patient->years_with_diabetes);
        scores.push_back(dls->second);
    }

    const long n_pos = std::count(y.begin(), y.end(), 1);
    const long n_neg = static_cast<long>(y.size()) - n_pos;
    if (n_pos < 2 || n_neg < 2)
        throw InsufficientCasesError("target '" + name + "': insufficient cases (" + std::to_string(n_pos) +
                                     " positives / " + std::to_string(n_neg) + " negatives after sampling)");

    table.n = y.size();
    table.n_pos = static_cast<std::size_t>(n_pos);
    table.rows = adjusted_analysis(y, cov, scores, "White", &table.warnings);
    return table;
}

std::vector<DerivedRow> derive_labels(const Cohort& cohort, const std::vector<TargetRowRef>& targets,
                                      std::optional<int> max_window_days) {
    std::vector<DerivedRow> out;
    for (const auto& target : targets) {
        const std::string name = target.row_name();
        for (const auto& patient : cohort.patients) {
            for (std::size_t vi : cohort.visits_of(patient.patient_id)) {
                const Visit& visit = cohort.visits[vi];
                const auto matched = matched_analyte_value(cohort, patient, visit, target.spec->analyte,
                                                           max_window_days);
                if (!matched) continue;
                DerivedRow row;
                row.target_name = name;
                row.patient_id = patient.patient_id;
                row.visit_id = visit.visit_id;
                row.value = matched->value;
                row.day_gap = matched->day_gap;
                row.method = matched->method;
                row.label = row_positive(matched->value, *target.spec, target.cutoff_index);
                row.class_index = label_value(matched->value, *target.spec).class_index;
                out.push_back(std::move(row));
            }
        }
    }
    return out;
}

}  // namespace eyelab
