#include "eyelab/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eyelab/csv.hpp"
#include "eyelab/date.hpp"
#include "eyelab/error.hpp"
#include "eyelab/rng.hpp"
#include "eyelab/stats.hpp"

namespace eyelab {

namespace {

// Default marginals for the generated population. Planted targets override
// the mean so that the target's prevalence comes out as configured.
struct DefaultMarginal {
    Analyte analyte;
    double mean;
    double sd;
};

constexpr std::array<DefaultMarginal, kAnalyteCount> kDefaultMarginals{{
    {Analyte::ACR, 40.0, 180.0},
    {Analyte::Albumin, 4.1, 0.45},
    {Analyte::ALT, 26.0, 13.0},
    {Analyte::AST, 27.0, 11.0},
    {Analyte::BMI, 31.0, 6.5},
    {Analyte::BUN, 17.0, 7.0},
    {Analyte::Calcium, 9.3, 0.5},
    {Analyte::Creatinine, 0.95, 0.35},
    {Analyte::DiastolicBP, 76.0, 10.0},
    {Analyte::EGFR, 85.0, 24.0},
    {Analyte::HbA1c, 7.9, 1.9},
    {Analyte::HCT, 41.0, 4.5},
    {Analyte::HDL, 47.0, 13.0},
    {Analyte::Hgb, 13.7, 1.6},
    {Analyte::INR, 1.1, 0.15},
    {Analyte::LDL, 104.0, 33.0},
    {Analyte::MeanArterialPressure, 95.0, 10.0},
    {Analyte::NonHDL, 132.0, 38.0},
    {Analyte::Platelet, 242.0, 64.0},
    {Analyte::Potassium, 4.3, 0.45},
    {Analyte::PulsePressure, 56.0, 13.0},
    {Analyte::RDW, 13.9, 1.3},
    {Analyte::Sodium, 139.0, 3.0},
    {Analyte::SystolicBP, 132.0, 15.0},
    {Analyte::TotalBilirubin, 0.7, 0.3},
    {Analyte::TotalCholesterol, 182.0, 39.0},
    {Analyte::Triglycerides, 165.0, 90.0},
    {Analyte::TSH, 2.3, 1.5},
    {Analyte::WBC, 7.4, 2.1},
    {Analyte::Weight, 88.0, 19.0},
    {Analyte::Height, 165.0, 10.0},
}};

AnalyteMarginal marginal_for(const SynthConfig& cfg, Analyte a) {
    for (const auto& m : cfg.marginal_overrides) {
        if (m.analyte == a) return m;
    }
    for (const auto& m : kDefaultMarginals) {
        if (m.analyte == a) return {a, m.mean, m.sd};
    }
    throw DataError("synth: no marginal for analyte '" + to_string(a) + "'");
}

// AUC of a standard-normal covariate against the label induced by
// thresholding rho * a + sqrt(1 - rho^2) * eps at tau. Evaluated by a
// one-dimensional quadrature over the covariate.
double covariate_auc(double rho, double tau) {
    if (rho <= 0.0) return 0.5;
    const int n = 8001;
    const double lo = -8.0, hi = 8.0;
    const double h = (hi - lo) / (n - 1);
    const double s = std::sqrt(std::max(1e-12, 1.0 - rho * rho));

    std::vector<double> f_pos(n), f_neg(n);
    for (int i = 0; i < n; ++i) {
        const double a = lo + i * h;
        const double q = normal_cdf((rho * a - tau) / s);
        const double phi = normal_pdf(a);
        f_pos[i] = phi * q;
        f_neg[i] = phi * (1.0 - q);
    }
    // g[i] = integral of f_neg below node i; then pair it with f_pos.
    double below = 0.0;
    double numer = 0.0;
    double prev_term = f_pos[0] * 0.0;
    for (int i = 1; i < n; ++i) {
        below += 0.5 * h * (f_neg[i - 1] + f_neg[i]);
        const double term = f_pos[i] * below;
        numer += 0.5 * h * (prev_term + term);
        prev_term = term;
    }
    const double p = normal_sf(tau);
    return numer / (p * (1.0 - p));
}

double positive_floor(Analyte a) { return a == Analyte::EGFR ? 0.1 : 1e-3; }

// Inverts the 2021 CKD-EPI equation at fixed age and sex.
double creatinine_for_egfr(double egfr, double age_years, Sex sex) {
    if (sex == Sex::Unknown) throw DataError("synth: eGFR planting requires a known sex");
    const bool female = sex == Sex::Female;
    const double kappa = female ? 0.7 : 0.9;
    const double alpha = female ? -0.241 : -0.329;
    const double base = 142.0 * std::pow(0.9938, age_years) * (female ? 1.012 : 1.0);
    const double m = egfr / base;
    return m >= 1.0 ? kappa * std::pow(m, 1.0 / alpha) : kappa * std::pow(m, 1.0 / -1.2);
}

template <typename T>
std::size_t pick_weighted(const std::vector<std::pair<T, double>>& weights, double total, Rng& rng) {
    double u = rng.uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i].second;
        if (u < acc) return i;
    }
    return weights.size() - 1;
}

struct PlantContext {
    TargetRowRef row;
    PlantedTruth truth;
    bool is_egfr = false;
    bool is_bmi = false;
};

}  // namespace

double binormal_separation(double auc) {
    if (!(auc > 0.0 && auc < 1.0)) throw DataError("binormal_separation: auc must lie in (0, 1)");
    return std::sqrt(2.0) * normal_quantile(auc);
}

double calibrate_liability_loading(double auc, double prevalence) {
    if (!(prevalence > 0.0 && prevalence < 1.0))
        throw DataError("calibrate_liability_loading: prevalence must lie in (0, 1)");
    if (!(auc >= 0.5 && auc <= 0.995))
        throw DataError("calibrate_liability_loading: auc must lie in [0.5, 0.995]");
    if (auc == 0.5) return 0.0;

    static std::mutex cache_mutex;
    static std::map<std::pair<double, double>, double> cache;
    {
        std::lock_guard<std::mutex> lock(cache_mutex);
        auto it = cache.find({auc, prevalence});
        if (it != cache.end()) return it->second;
    }

    const double tau = normal_quantile(1.0 - prevalence);
    double lo = 0.0, hi = 0.999999;
    for (int iter = 0; iter < 80 && hi - lo > 1e-13; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (covariate_auc(mid, tau) < auc) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double rho = 0.5 * (lo + hi);

    std::lock_guard<std::mutex> lock(cache_mutex);
    cache[{auc, prevalence}] = rho;
    return rho;
}

SynthOutput generate_cohort(const SynthConfig& config) {
    if (config.n_patients <= 0) throw DataError("synth: n_patients must be positive");
    if (config.min_visits < 1 || config.max_visits < config.min_visits)
        throw DataError("synth: need 1 <= min_visits <= max_visits");
    if (config.n_members < 1) throw DataError("synth: n_members must be >= 1");
    if (!(config.age_sd > 0.0)) throw DataError("synth: age_sd must be positive");
    if (config.gap_max_days < 0) throw DataError("synth: gap_max_days must be >= 0");
    for (double p : {config.p_diabetic, config.p_years_dm_present, config.p_both_eyes, config.p_annotated,
                     config.p_cataract, config.p_iol, config.p_measured}) {
        if (!(p >= 0.0 && p <= 1.0)) throw DataError("synth: probabilities must lie in [0, 1]");
    }

    auto check_weights = [](const auto& weights, const char* what) {
        double total = 0.0;
        for (const auto& [_, w] : weights) {
            if (!(w >= 0.0)) throw DataError(std::string("synth: ") + what + " weights must be >= 0");
            total += w;
        }
        if (!(total > 0.0)) throw DataError(std::string("synth: ") + what + " weights must not all be zero");
        return total;
    };
    const double sex_total = check_weights(config.sex_proportions, "sex");
    const double race_total = check_weights(config.race_proportions, "race");
    const double ds_total = check_weights(config.dataset_proportions, "dataset");

    SynthConfig cfg = config;
    if (cfg.plants.empty()) {
        cfg.plants = {{"ACR>=300.0", 0.092, 0.75, 0.67},   {"Albumin<3.5", 0.135, 0.77, 0.64},
                      {"AST>36.0", 0.163, 0.615, 0.56},    {"Calcium<8.6", 0.068, 0.71, 0.62},
                      {"eGFR<60.0", 0.105, 0.80, 0.72},    {"Hgb<11.0", 0.075, 0.82, 0.63},
                      {"Platelet<150.0", 0.064, 0.71, 0.64}, {"TSH>4.0", 0.10, 0.62, 0.59},
                      {"WBC<4.0", 0.02, 0.73, 0.60}};
    }

    const auto& registry = builtin_registry();
    std::vector<PlantContext> plants;
    std::set<Analyte> plant_analytes;
    for (const auto& plant : cfg.plants) {
        auto row = find_target_row(registry, plant.target_name);
        if (!row) throw DataError("synth: unknown target '" + plant.target_name + "'");
        if (!(plant.prevalence > 0.0 && plant.prevalence < 1.0))
            throw DataError("synth: prevalence for '" + plant.target_name + "' must lie in (0, 1)");
        if (!(plant.dls_auc >= 0.5 && plant.dls_auc <= 0.995))
            throw DataError("synth: dls_auc for '" + plant.target_name + "' must lie in [0.5, 0.995]");
        if (!plant_analytes.insert(row->spec->analyte).second)
            throw DataError("synth: analyte '" + to_string(row->spec->analyte) + "' planted more than once");

        PlantContext ctx;
        ctx.row = *row;
        ctx.is_egfr = row->spec->analyte == Analyte::EGFR;
        ctx.is_bmi = row->spec->analyte == Analyte::BMI;
        const AnalyteMarginal marg = marginal_for(cfg, row->spec->analyte);
        if (!(marg.sd > 0.0)) throw DataError("synth: marginal sd must be positive");
        const double cutoff = row->spec->cutoffs[static_cast<std::size_t>(row->cutoff_index)];
        // Solve for the marginal mean consistent with the prevalence.
        const bool below = row->spec->direction == Direction::BelowIsPositive;
        const double mu = below ? cutoff - marg.sd * normal_quantile(plant.prevalence)
                                : cutoff - marg.sd * normal_quantile(1.0 - plant.prevalence);

        ctx.truth.target_name = row->row_name();
        ctx.truth.prevalence = plant.prevalence;
        ctx.truth.dls_auc = plant.dls_auc;
        ctx.truth.baseline_auc = plant.baseline_auc;
        ctx.truth.delta = binormal_separation(plant.dls_auc);
        ctx.truth.age_loading = calibrate_liability_loading(plant.baseline_auc, plant.prevalence);
        ctx.truth.tau = normal_quantile(1.0 - plant.prevalence);
        ctx.truth.value_mean = mu;
        ctx.truth.value_sd = marg.sd;
        plants.push_back(std::move(ctx));
    }

    bool any_egfr = false, any_bmi = false;
    for (const auto& p : plants) {
        any_egfr = any_egfr || p.is_egfr;
        any_bmi = any_bmi || p.is_bmi;
    }
    if (any_egfr) {
        for (const auto& [sex, w] : cfg.sex_proportions) {
            if (sex == Sex::Unknown && w > 0.0)
                throw DataError("synth: eGFR planting requires sex proportions without Unknown");
        }
    }

    // Plant analytes (and their derivation sources) are emitted separately.
    std::vector<Analyte> extras;
    for (Analyte a : cfg.extra_analytes) {
        bool drop = plant_analytes.count(a) > 0;
        drop = drop || (any_egfr && a == Analyte::Creatinine);
        drop = drop || (any_bmi && (a == Analyte::Weight || a == Analyte::Height));
        if (!drop && std::find(extras.begin(), extras.end(), a) == extras.end()) extras.push_back(a);
    }

    const double lambda = std::clamp(cfg.severity_weight, 0.0, 0.95);
    const double lambda_rest = std::sqrt(1.0 - lambda * lambda);
    const Date base_date = parse_date("2022-01-01", "synth");

    SynthOutput out;
    out.config = cfg;
    for (const auto& p : plants) out.truths.push_back(p.truth);

    Cohort& cohort = out.cohort;
    cohort.patients.reserve(static_cast<std::size_t>(cfg.n_patients));

    char idbuf[32];
    for (int i = 0; i < cfg.n_patients; ++i) {
        std::snprintf(idbuf, sizeof(idbuf), "P%06d", i + 1);
        const std::string pid = idbuf;

        Rng demog = rng_stream(cfg.seed, "demog", static_cast<std::uint64_t>(i));
        Patient patient;
        patient.patient_id = pid;
        const double age_z = demog.normal();
        patient.age_years = std::clamp(cfg.age_mean + cfg.age_sd * age_z, 18.0, 95.0);
        patient.sex = cfg.sex_proportions[pick_weighted(cfg.sex_proportions, sex_total, demog)].first;
        patient.race_ethnicity = cfg.race_proportions[pick_weighted(cfg.race_proportions, race_total, demog)].first;
        patient.dataset_id = cfg.dataset_proportions[pick_weighted(cfg.dataset_proportions, ds_total, demog)].first;
        const bool diabetic = demog.bernoulli(cfg.p_diabetic);
        patient.diabetic = diabetic;
        if (diabetic && demog.bernoulli(cfg.p_years_dm_present)) {
            const double years = -cfg.years_dm_mean * std::log(1.0 - demog.uniform());
            patient.years_with_diabetes = std::clamp(years, 0.0, std::max(0.0, patient.age_years - 18.0));
        }
        cohort.patients.push_back(patient);

        Rng sev = rng_stream(cfg.seed, "severity", static_cast<std::uint64_t>(i));
        const double severity = sev.normal();

        // Visits.
        Rng vis = rng_stream(cfg.seed, "visits", static_cast<std::uint64_t>(i));
        const int n_visits = cfg.min_visits + static_cast<int>(vis.below(
                                 static_cast<std::uint64_t>(cfg.max_visits - cfg.min_visits + 1)));
        std::vector<int> offsets(static_cast<std::size_t>(n_visits));
        for (auto& o : offsets) o = static_cast<int>(vis.below(730));
        std::sort(offsets.begin(), offsets.end());
        std::vector<std::string> visit_ids;
        std::vector<Date> visit_dates;
        for (int v = 0; v < n_visits; ++v) {
            Visit visit;
            visit.visit_id = pid + "-V" + std::to_string(v + 1);
            visit.patient_id = pid;
            visit.visit_date = Date{base_date.days + offsets[static_cast<std::size_t>(v)]};
            visit.cataract_present = vis.bernoulli(cfg.p_cataract);
            visit.intraocular_lens = vis.bernoulli(cfg.p_iol);
            visit_ids.push_back(visit.visit_id);
            visit_dates.push_back(visit.visit_date);
            cohort.visits.push_back(std::move(visit));
        }

        // Eye layout and annotations per visit.
        struct ImagePlan {
            std::string image_id;
            std::size_t visit_idx;
            Eye eye;
            bool annotated;
            EllipseAnnotation ann;
        };
        std::vector<ImagePlan> images;
        const double base_ratio = 0.28 + 0.44 * vis.uniform();
        for (std::size_t v = 0; v < visit_ids.size(); ++v) {
            const bool both = vis.bernoulli(cfg.p_both_eyes);
            std::vector<Eye> eyes;
            if (both) {
                eyes = {Eye::Left, Eye::Right};
            } else {
                eyes = {vis.bernoulli(0.5) ? Eye::Left : Eye::Right};
            }
            for (Eye eye : eyes) {
                ImagePlan plan;
                plan.visit_idx = v;
                plan.eye = eye;
                plan.image_id = visit_ids[v] + (eye == Eye::Left ? "-L" : "-R");
                plan.annotated = vis.bernoulli(cfg.p_annotated);
                const double iris_w = std::clamp(440.0 + 30.0 * vis.normal(), 200.0, 560.0);
                const double iris_h = std::clamp(iris_w * (1.0 + 0.03 * vis.normal()), 200.0, 560.0);
                const double icx = 293.5 + 10.0 * vis.normal();
                const double icy = 293.5 + 10.0 * vis.normal();
                const double ratio = std::clamp(base_ratio + 0.02 * vis.normal(), 0.2, 0.9);
                plan.ann.iris = {icx, icy, iris_w, iris_h};
                plan.ann.pupil = {icx + 2.0 * vis.normal(), icy + 2.0 * vis.normal(), ratio * iris_w, ratio * iris_h};
                images.push_back(std::move(plan));
            }
        }

        // Planted analyte values and labels.
        Rng lab = rng_stream(cfg.seed, "liability", static_cast<std::uint64_t>(i));
        Rng val = rng_stream(cfg.seed, "values", static_cast<std::uint64_t>(i));
        std::vector<bool> labels(plants.size());
        std::vector<double> plant_values(plants.size());
        std::vector<double> heights_for_bmi(plants.size(), 0.0);
        for (std::size_t t = 0; t < plants.size(); ++t) {
            const PlantContext& pc = plants[t];
            const double rho = pc.truth.age_loading;
            const double liab = rho * age_z + std::sqrt(1.0 - rho * rho) * lab.normal();
            const bool positive = liab > pc.truth.tau;
            labels[t] = positive;

            const bool below = pc.row.spec->direction == Direction::BelowIsPositive;
            const double cutoff = pc.row.spec->cutoffs[static_cast<std::size_t>(pc.row.cutoff_index)];
            const double p_below = normal_cdf((cutoff - pc.truth.value_mean) / pc.truth.value_sd);
            const bool low_side = below == positive;
            double value = 0.0;
            bool ok = false;
            for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
                const double u = val.uniform();
                double uu = low_side ? u * p_below : p_below + u * (1.0 - p_below);
                uu = std::clamp(uu, 1e-12, 1.0 - 1e-12);
                value = pc.truth.value_mean + pc.truth.value_sd * normal_quantile(uu);
                value = std::max(value, positive_floor(pc.row.spec->analyte));
                double observed = value;
                if (pc.is_egfr) {
                    // The emitted creatinine must round-trip to the right side.
                    const double scr = creatinine_for_egfr(value, patient.age_years, patient.sex);
                    observed = compute_egfr_2021(scr, patient.age_years, patient.sex);
                }
                ok = row_positive(observed, *pc.row.spec, pc.row.cutoff_index) == positive;
            }
            if (!ok) throw DataError("synth: could not draw a label-consistent value for '" + pc.truth.target_name + "'");
            plant_values[t] = value;
            if (pc.is_bmi) {
                const AnalyteMarginal hm = marginal_for(cfg, Analyte::Height);
                heights_for_bmi[t] = std::clamp(hm.mean + hm.sd * val.normal(), 120.0, 210.0);
            }
        }

        // Non-planted analyte values, correlated through the severity factor.
        std::vector<double> extra_values(extras.size());
        for (std::size_t e = 0; e < extras.size(); ++e) {
            const AnalyteMarginal m = marginal_for(cfg, extras[e]);
            if (!(m.sd > 0.0)) throw DataError("synth: marginal sd must be positive");
            const double z = lambda * severity + lambda_rest * val.normal();
            extra_values[e] = std::max(m.mean + m.sd * z, positive_floor(extras[e]));
        }

        // Measurement rows: one coin and one date offset per (visit, analyte).
        Rng gaps = rng_stream(cfg.seed, "gaps", static_cast<std::uint64_t>(i));
        auto emit = [&](Analyte a, double value) {
            for (std::size_t v = 0; v < visit_dates.size(); ++v) {
                const bool measured = gaps.bernoulli(cfg.p_measured);
                const int gap = static_cast<int>(gaps.below(static_cast<std::uint64_t>(cfg.gap_max_days) + 1));
                const bool after = gaps.bernoulli(0.5);
                if (!measured) continue;
                Measurement m;
                m.patient_id = pid;
                m.analyte = a;
                m.value = value;
                m.measured_date = Date{visit_dates[v].days + (after ? gap : -gap)};
                cohort.measurements.push_back(std::move(m));
            }
        };
        for (std::size_t t = 0; t < plants.size(); ++t) {
            const PlantContext& pc = plants[t];
            if (pc.is_egfr) {
                emit(Analyte::Creatinine, creatinine_for_egfr(plant_values[t], patient.age_years, patient.sex));
            } else if (pc.is_bmi) {
                const double h = heights_for_bmi[t];
                emit(Analyte::Height, h);
                emit(Analyte::Weight, plant_values[t] * (h / 100.0) * (h / 100.0));
            } else {
                emit(pc.row.spec->analyte, plant_values[t]);
            }
        }
        for (std::size_t e = 0; e < extras.size(); ++e) emit(extras[e], extra_values[e]);

        // DLS scores: one latent score per (target, patient); members and
        // eyes see it through small independent jitter.
        Rng sco = rng_stream(cfg.seed, "scores", static_cast<std::uint64_t>(i));
        for (std::size_t t = 0; t < plants.size(); ++t) {
            const double z = plants[t].truth.delta * (labels[t] ? 1.0 : 0.0) + sco.normal();
            for (const auto& plan : images) {
                for (int member = 0; member < cfg.n_members; ++member) {
                    ScoreRecord rec;
                    rec.image_id = plan.image_id;
                    rec.visit_id = visit_ids[plan.visit_idx];
                    rec.patient_id = pid;
                    rec.eye = plan.eye;
                    rec.model_member = "m" + std::to_string(member + 1);
                    rec.target_name = plants[t].truth.target_name;
                    rec.score = logistic_sigmoid(z + cfg.member_sigma * sco.normal());
                    cohort.scores.push_back(std::move(rec));
                }
            }
        }

        // Attach images (and annotations) to their visits.
        const std::size_t first_visit = cohort.visits.size() - visit_ids.size();
        for (const auto& plan : images) {
            ImageRecord img;
            img.image_id = plan.image_id;
            img.visit_id = visit_ids[plan.visit_idx];
            img.eye = plan.eye;
            if (plan.annotated) img.annotation = plan.ann;
            cohort.visits[first_visit + plan.visit_idx].images.push_back(std::move(img));
        }
    }

    cohort.rebuild_indexes();
    return out;
}

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << content;
    if (!out) throw DataError(path + ": write failed");
}

}  // namespace

void write_synth_dir(const SynthOutput& output, const std::string& dir) {
    write_cohort_dir(output.cohort, dir);
    write_file(dir + "/ground_truth.json", synth_truth_to_json(output));
}

std::string synth_truth_to_json(const SynthOutput& output) {
    nlohmann::ordered_json j;
    j["seed"] = output.config.seed;
    j["n_patients"] = output.config.n_patients;
    nlohmann::ordered_json plants = nlohmann::ordered_json::array();
    for (const auto& t : output.truths) {
        nlohmann::ordered_json p;
        p["target_name"] = t.target_name;
        p["prevalence"] = t.prevalence;
        p["dls_auc"] = t.dls_auc;
        p["baseline_auc"] = t.baseline_auc;
        p["delta"] = t.delta;
        p["age_loading"] = t.age_loading;
        p["tau"] = t.tau;
        p["value_mean"] = t.value_mean;
        p["value_sd"] = t.value_sd;
        plants.push_back(std::move(p));
    }
    j["plants"] = std::move(plants);
    return j.dump(2) + "\n";
}

SynthConfig synth_config_from_json(const std::string& text, const std::string& context) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(context + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw DataError(context + ": expected a JSON object");

    SynthConfig cfg;
    std::set<std::string> known;
    auto mark = [&known](const char* key) {
        known.insert(key);
        return key;
    };

    auto get_num = [&](const char* key, double& field) {
        mark(key);
        if (!j.contains(key)) return;
        if (!j[key].is_number()) throw DataError(context + ": '" + key + "' must be a number");
        field = j[key].get<double>();
    };
    auto get_int = [&](const char* key, int& field) {
        mark(key);
        if (!j.contains(key)) return;
        if (!j[key].is_number_integer()) throw DataError(context + ": '" + key + "' must be an integer");
        field = j[key].get<int>();
    };

    get_int("n_patients", cfg.n_patients);
    get_int("min_visits", cfg.min_visits);
    get_int("max_visits", cfg.max_visits);
    get_num("age_mean", cfg.age_mean);
    get_num("age_sd", cfg.age_sd);
    get_num("p_diabetic", cfg.p_diabetic);
    get_num("years_dm_mean", cfg.years_dm_mean);
    get_num("p_years_dm_present", cfg.p_years_dm_present);
    get_num("severity_weight", cfg.severity_weight);
    get_int("n_members", cfg.n_members);
    get_num("member_sigma", cfg.member_sigma);
    get_num("p_both_eyes", cfg.p_both_eyes);
    get_num("p_annotated", cfg.p_annotated);
    get_num("p_cataract", cfg.p_cataract);
    get_num("p_iol", cfg.p_iol);
    get_num("p_measured", cfg.p_measured);
    get_int("gap_max_days", cfg.gap_max_days);

    mark("seed");
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
            throw DataError(context + ": 'seed' must be a non-negative integer");
        cfg.seed = j["seed"].get<std::uint64_t>();
    }

    auto proportions = [&](const char* key, auto parse_key, auto& field) {
        mark(key);
        if (!j.contains(key)) return;
        if (!j[key].is_object()) throw DataError(context + ": '" + key + "' must be an object of weights");
        field.clear();
        for (const auto& [k, v] : j[key].items()) {
            if (!v.is_number()) throw DataError(context + ": '" + key + "' weights must be numbers");
            field.emplace_back(parse_key(k), v.template get<double>());
        }
    };
    const std::string ctx_sex = context + ": sex_proportions";
    const std::string ctx_race = context + ": race_proportions";
    const std::string ctx_ds = context + ": dataset_proportions";
    proportions("sex_proportions", [&](const std::string& k) { return parse_sex(k, ctx_sex); }, cfg.sex_proportions);
    proportions("race_proportions", [&](const std::string& k) { return parse_race(k, ctx_race); },
                cfg.race_proportions);
    proportions("dataset_proportions", [&](const std::string& k) { return parse_dataset_id(k, ctx_ds); },
                cfg.dataset_proportions);

    mark("extra_analytes");
    if (j.contains("extra_analytes")) {
        if (!j["extra_analytes"].is_array()) throw DataError(context + ": 'extra_analytes' must be an array");
        cfg.extra_analytes.clear();
        for (const auto& v : j["extra_analytes"]) {
            if (!v.is_string()) throw DataError(context + ": 'extra_analytes' entries must be analyte names");
            cfg.extra_analytes.push_back(parse_analyte(v.get<std::string>(), context + ": extra_analytes"));
        }
    }

    mark("marginal_overrides");
    if (j.contains("marginal_overrides")) {
        if (!j["marginal_overrides"].is_object())
            throw DataError(context + ": 'marginal_overrides' must map analyte names to {mean, sd}");
        for (const auto& [k, v] : j["marginal_overrides"].items()) {
            AnalyteMarginal m;
            m.analyte = parse_analyte(k, context + ": marginal_overrides");
            if (!v.is_object() || !v.contains("mean") || !v.contains("sd") || !v["mean"].is_number() ||
                !v["sd"].is_number())
                throw DataError(context + ": marginal override for '" + k + "' must be {mean, sd}");
            m.mean = v["mean"].get<double>();
            m.sd = v["sd"].get<double>();
            cfg.marginal_overrides.push_back(m);
        }
    }

    mark("plants");
    if (j.contains("plants")) {
        if (!j["plants"].is_array()) throw DataError(context + ": 'plants' must be an array");
        cfg.plants.clear();
        for (const auto& v : j["plants"]) {
            if (!v.is_object() || !v.contains("target_name"))
                throw DataError(context + ": each plant needs at least a 'target_name'");
            TargetPlant plant;
            plant.target_name = v["target_name"].get<std::string>();
            if (v.contains("prevalence")) plant.prevalence = v["prevalence"].get<double>();
            if (v.contains("dls_auc")) plant.dls_auc = v["dls_auc"].get<double>();
            if (v.contains("baseline_auc")) plant.baseline_auc = v["baseline_auc"].get<double>();
            for (const auto& [k, _] : v.items()) {
                if (k != "target_name" && k != "prevalence" && k != "dls_auc" && k != "baseline_auc")
                    throw DataError(context + ": unknown plant field '" + k + "'");
            }
            cfg.plants.push_back(std::move(plant));
        }
    }

    for (const auto& [k, _] : j.items()) {
        if (!known.count(k)) throw DataError(context + ": unknown field '" + k + "'");
    }
    return cfg;
}

}  // namespace eyelab
