#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eyelab/cohort.hpp"
#include "eyelab/targets.hpp"

namespace eyelab {

// One planted prediction target: the outcome's prevalence plus the true
// population AUCs that the DLS score and the demographic (age-driven)
// baseline should achieve against it.
struct TargetPlant {
    std::string target_name;  // a registry row name, e.g. "Hgb<11.0"
    double prevalence = 0.1;
    double dls_auc = 0.75;
    double baseline_auc = 0.6;
};

struct AnalyteMarginal {
    Analyte analyte = Analyte::ACR;
    double mean = 0.0;
    double sd = 1.0;
};

struct SynthConfig {
    int n_patients = 1000;
    int min_visits = 1;
    int max_visits = 3;

    double age_mean = 60.0;
    double age_sd = 10.0;
    std::vector<std::pair<Sex, double>> sex_proportions = {{Sex::Female, 0.45}, {Sex::Male, 0.55}};
    std::vector<std::pair<RaceEthnicity, double>> race_proportions = {{RaceEthnicity::Hispanic, 0.55},
                                                                      {RaceEthnicity::White, 0.12},
                                                                      {RaceEthnicity::Black, 0.18},
                                                                      {RaceEthnicity::AsianPacificIslander, 0.09},
                                                                      {RaceEthnicity::NativeAmerican, 0.01},
                                                                      {RaceEthnicity::Other, 0.05}};
    std::vector<std::pair<DatasetId, double>> dataset_proportions = {{{DatasetId::Kind::DevTrain, ""}, 0.5},
                                                                     {{DatasetId::Kind::ValA, ""}, 0.5}};
    double p_diabetic = 0.85;
    double years_dm_mean = 10.0;
    double p_years_dm_present = 0.95;  // among diabetics

    // Analytes emitted as measurements. Plant analytes are always emitted
    // (as Creatinine for eGFR targets); this adds vitals for BMI/BP work.
    std::vector<Analyte> extra_analytes = {Analyte::SystolicBP, Analyte::DiastolicBP, Analyte::Weight,
                                           Analyte::Height};
    std::vector<AnalyteMarginal> marginal_overrides;

    std::vector<TargetPlant> plants;  // empty -> the 9 primary targets

    // Shared latent severity: loading of the liability noise (plants) and
    // of non-planted analyte values on one per-patient factor.
    double severity_weight = 0.3;

    int n_members = 5;          // ensemble members per image
    double member_sigma = 0.1;  // per-member score jitter (logit scale)
    double p_both_eyes = 0.95;
    double p_annotated = 1.0;
    double p_cataract = 0.2;
    double p_iol = 0.05;

    double p_measured = 0.9;  // per (visit, analyte)
    int gap_max_days = 240;   // measurement date offset ~ U{-gap_max..gap_max}

    std::uint64_t seed = 1;
};

// Everything needed to check the generator against its own plants.
struct PlantedTruth {
    std::string target_name;
    double prevalence = 0.0;
    double dls_auc = 0.0;
    double baseline_auc = 0.0;
    double delta = 0.0;        // binormal score separation, Phi(delta/sqrt(2)) = dls_auc
    double age_loading = 0.0;  // liability loading on standardized age
    double tau = 0.0;          // liability threshold
    double value_mean = 0.0;   // analyte marginal consistent with prevalence
    double value_sd = 0.0;
};

struct SynthOutput {
    Cohort cohort;
    std::vector<PlantedTruth> truths;
    SynthConfig config;
};

// The binormal separation for a target AUC: Phi(delta/sqrt(2)) = auc.
double binormal_separation(double auc);

// The liability loading rho on a standard-normal covariate such that the
// covariate's AUC against the induced label (threshold tau keeps the given
// prevalence) equals `auc`. Solved numerically; rho = 0 when auc = 0.5.
double calibrate_liability_loading(double auc, double prevalence);

// Deterministic single-pass generation; identical seeds give identical
// cohorts regardless of platform.
SynthOutput generate_cohort(const SynthConfig& config);

// Writes patients/visits/measurements/scores/annotations CSVs plus
// ground_truth.json into `dir` (created if needed).
void write_synth_dir(const SynthOutput& output, const std::string& dir);

// Parses the SynthConfig JSON (all fields optional, same names as the
// struct). Unknown keys are errors.
SynthConfig synth_config_from_json(const std::string& text, const std::string& context);
std::string synth_truth_to_json(const SynthOutput& output);

}  // namespace eyelab
