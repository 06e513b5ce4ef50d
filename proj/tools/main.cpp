// eyelab: reproducible cohort analyses over external eye photo model
// scores. Subcommands cover ingest/derive/fit/evaluate plus the image
// manipulation batches and the synthetic cohort generator.

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "eyelab/ablation.hpp"
#include "eyelab/baseline.hpp"
#include "eyelab/cohort.hpp"
#include "eyelab/csv.hpp"
#include "eyelab/error.hpp"
#include "eyelab/log.hpp"
#include "eyelab/pipeline.hpp"
#include "eyelab/png_io.hpp"
#include "eyelab/report.hpp"
#include "eyelab/stats.hpp"
#include "eyelab/synth.hpp"
#include "eyelab/targets.hpp"

using namespace eyelab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitSkips = 3;

// Argument-semantics problems CLI11 cannot catch (unknown target names,
// bad flag combinations). Mapped to the usage exit code.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << content;
    if (!out) throw DataError(path + ": write failed");
}

// ---- shared option plumbing ----------------------------------------------

struct CommonOpts {
    std::string data_dir;
    std::string baseline_path;
    std::string registry_path;
    std::string targets = "primary";
    std::string dataset_slice;
    std::string out_dir;
    std::string format = "csv";
    std::uint64_t seed = 1;
    std::optional<int> max_window_days;
    double level = 0.95;
    double alpha = 0.05;
    double fraction = 0.05;
    int replicates = 2000;
    std::vector<int> windows = {180, 90, 30};
};

void add_data_option(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--data", o.data_dir, "Cohort directory (patients/visits/measurements[/scores/annotations].csv)")
        ->required();
}

void add_out_dir_option(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();
}

void add_target_options(CLI::App* cmd, CommonOpts& o, const std::string& default_targets) {
    o.targets = default_targets;
    cmd->add_option("--targets", o.targets, "primary, all, or comma-separated target row names")
        ->capture_default_str();
    cmd->add_option("--registry", o.registry_path, "JSON target registry overriding the built-in set");
}

void add_analysis_options(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--baseline", o.baseline_path, "Fitted baseline model JSON")->required();
    cmd->add_option("--seed", o.seed, "Root seed for every random decision")->capture_default_str();
    cmd->add_option("--dataset-slice", o.dataset_slice, "Restrict to one dataset id (empty keeps all)");
    cmd->add_option("--format", o.format, "Output tables: csv, or md for csv plus display Markdown")
        ->check(CLI::IsMember({"csv", "md"}))
        ->capture_default_str();
    cmd->add_option("--max-window-days", o.max_window_days, "Tighten the lab-matching window (days)");
    cmd->add_option("--level", o.level, "Confidence level")->capture_default_str();
    cmd->add_option("--alpha", o.alpha, "Family-wise significance level")->capture_default_str();
}

std::vector<TargetSpec> load_registry(const std::string& registry_path) {
    std::vector<TargetSpec> registry =
        registry_path.empty() ? builtin_registry() : load_registry_overrides(registry_path, builtin_registry());
    validate_registry(registry, /*require_nine_primaries=*/registry_path.empty());
    return registry;
}

std::vector<TargetRowRef> resolve_targets(const std::vector<TargetSpec>& registry, const std::string& selector) {
    if (selector == "primary") return primary_target_rows(registry);
    if (selector == "all") return all_target_rows(registry);
    std::vector<TargetRowRef> rows;
    std::stringstream ss(selector);
    std::string name;
    while (std::getline(ss, name, ',')) {
        if (name.empty()) continue;
        const auto row = find_target_row(registry, name);
        if (!row) throw UsageError("unknown target '" + name + "' (expected primary, all, or target row names)");
        rows.push_back(*row);
    }
    if (rows.empty()) throw UsageError("--targets selected nothing");
    return rows;
}

EvalOptions eval_options(const CommonOpts& o, const std::vector<TargetSpec>& registry) {
    EvalOptions opts;
    opts.max_window_days = o.max_window_days;
    opts.level = o.level;
    opts.alpha = o.alpha;
    opts.n_primary_tests = static_cast<int>(primary_target_rows(registry).size());
    return opts;
}

Cohort load_cohort(const CommonOpts& o) {
    Cohort cohort = ingest_cohort_dir(o.data_dir);
    if (!o.dataset_slice.empty()) cohort = filter_dataset_slice(cohort, o.dataset_slice);
    if (cohort.patients.empty()) throw DataError(o.data_dir + ": no patients after dataset-slice filtering");
    return cohort;
}

SavedBaseline load_baseline(const std::string& path) { return baseline_from_json(read_text_file(path), path); }

std::vector<std::string> cohort_input_files(const std::string& dir) {
    std::vector<std::string> files;
    for (const char* name : {"patients.csv", "visits.csv", "measurements.csv", "scores.csv", "annotations.csv"}) {
        const std::string path = (std::filesystem::path(dir) / name).string();
        if (std::filesystem::exists(path)) files.push_back(path);
    }
    return files;
}

RunManifest build_manifest(const std::string& command_line, std::uint64_t seed, const std::string& config_path,
                           std::vector<std::string> inputs) {
    RunManifest m;
    m.command = command_line;
    m.tool_version = tool_version();
    m.seed = seed;
    m.config_digest = config_path.empty() ? "-" : file_digest_hex(config_path);
    for (const auto& path : inputs) m.input_digests.emplace_back(path, file_digest_hex(path));
    m.timestamp = current_timestamp_utc();
    return m;
}

struct SkipRecord {
    std::string analysis;
    std::string target;
    std::string reason;
};
using SkipList = std::vector<SkipRecord>;

Table skips_table(const SkipList& skips) {
    Table t;
    t.header = {"analysis", "target", "reason"};
    for (const auto& s : skips) t.rows.push_back({s.analysis, s.target, s.reason});
    return t;
}

void write_skips(const SkipList& skips, const std::string& out_dir) {
    write_table_csv(skips_table(skips), (std::filesystem::path(out_dir) / "skips.csv").string());
}

int exit_for(const SkipList& skips) { return skips.empty() ? kExitOk : kExitSkips; }

// Runs fn(i) for i in [0, n) on a small worker pool. Values and errors are
// collected per index, so output order never depends on thread timing.
template <typename T, typename Fn>
std::vector<std::pair<std::optional<T>, std::exception_ptr>> run_indexed(std::size_t n, Fn&& fn) {
    std::vector<std::pair<std::optional<T>, std::exception_ptr>> out(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                out[i].first = fn(i);
            } catch (...) {
                out[i].second = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return out;
}

// Unpacks one per-target result: insufficient-cases becomes a skip record,
// anything else propagates.
template <typename T>
std::optional<T> take_or_skip(std::pair<std::optional<T>, std::exception_ptr>& slot, const std::string& analysis,
                              const std::string& target_name, SkipList& skips) {
    if (!slot.second) return std::move(slot.first);
    try {
        std::rethrow_exception(slot.second);
    } catch (const InsufficientCasesError& e) {
        log_warn(e.what());
        skips.push_back({analysis, target_name, e.what()});
        return std::nullopt;
    }
}

// ---- evaluate -------------------------------------------------------------

struct EvalRun {
    std::vector<TargetEvaluation> evals;
    SkipList skips;
};

EvalRun run_evaluations(const Cohort& cohort, const std::vector<TargetRowRef>& targets,
                        std::span<const EnsembledScore> ensembled, const SavedBaseline& baseline, std::uint64_t seed,
                        const EvalOptions& opts) {
    auto slots = run_indexed<TargetEvaluation>(targets.size(), [&](std::size_t i) {
        return evaluate_target_full(cohort, targets[i], ensembled, baseline, seed, opts);
    });
    EvalRun run;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (auto eval = take_or_skip(slots[i], "evaluate", targets[i].row_name(), run.skips))
            run.evals.push_back(std::move(*eval));
    }
    return run;
}

std::vector<EvalResult> results_of(const EvalRun& run) {
    std::vector<EvalResult> results;
    results.reserve(run.evals.size());
    for (const auto& e : run.evals) results.push_back(e.result);
    return results;
}

void write_eval_outputs(const EvalRun& run, const CommonOpts& o) {
    const std::filesystem::path dir(o.out_dir);
    const std::vector<EvalResult> results = results_of(run);
    write_table_csv(eval_results_table(results), (dir / "eval_results.csv").string());
    if (o.format == "md") write_table_markdown(eval_results_display(results), (dir / "eval_results.md").string(), "Evaluation");
    write_skips(run.skips, o.out_dir);
}

// ---- command runners -------------------------------------------------------

int run_ingest(const CommonOpts& o, const std::string& command_line, const std::string& config_path) {
    const Cohort cohort = ingest_cohort_dir(o.data_dir);
    std::filesystem::create_directories(o.out_dir);
    write_cohort_dir(cohort, o.out_dir);
    write_manifest(build_manifest(command_line, o.seed, config_path, cohort_input_files(o.data_dir)), o.out_dir);
    std::size_t n_scores = cohort.scores.size();
    std::cout << "ingest: " << cohort.patients.size() << " patients, " << cohort.visits.size() << " visits, "
              << cohort.measurements.size() << " measurements, " << n_scores << " scores -> " << o.out_dir << "\n";
    return kExitOk;
}

int run_derive(const CommonOpts& o, const std::string& command_line, const std::string& config_path) {
    const std::vector<TargetSpec> registry = load_registry(o.registry_path);
    const std::vector<TargetRowRef> targets = resolve_targets(registry, o.targets);
    const Cohort cohort = load_cohort(o);
    const std::vector<DerivedRow> rows = derive_labels(cohort, targets, o.max_window_days);
    std::filesystem::create_directories(o.out_dir);
    const std::filesystem::path dir(o.out_dir);
    write_table_csv(derived_table(rows), (dir / "derived.csv").string());
    std::vector<std::string> inputs = cohort_input_files(o.data_dir);
    if (!o.registry_path.empty()) inputs.push_back(o.registry_path);
    write_manifest(build_manifest(command_line, o.seed, config_path, inputs), o.out_dir);
    std::cout << "derive: " << rows.size() << " labeled rows over " << targets.size() << " targets -> " << o.out_dir
              << "\n";
    return kExitOk;
}

int run_fit_baseline(const CommonOpts& o, bool augmented, const std::string& command_line,
                     const std::string& config_path) {
    const std::vector<TargetSpec> registry = load_registry(o.registry_path);
    const std::vector<TargetRowRef> targets = resolve_targets(registry, o.targets);
    const Cohort cohort = load_cohort(o);

    std::vector<std::string> warnings;
    SavedBaseline saved = fit_baseline_models(cohort, targets, o.seed, augmented, /*C=*/1.0, /*tol=*/1e-8, &warnings);
    saved.train_slice = o.dataset_slice;
    for (const auto& w : warnings) log_warn(w);

    SkipList skips;
    for (const auto& t : targets) {
        const std::string name = t.row_name();
        if (!saved.per_target.count(name))
            skips.push_back({"fit-baseline", name, "target '" + name + "': insufficient cases in the training slice"});
    }

    std::filesystem::create_directories(o.out_dir);
    const std::filesystem::path dir(o.out_dir);
    write_text_file((dir / "baseline.json").string(), baseline_to_json(saved));
    write_skips(skips, o.out_dir);
    std::vector<std::string> inputs = cohort_input_files(o.data_dir);
    if (!o.registry_path.empty()) inputs.push_back(o.registry_path);
    write_manifest(build_manifest(command_line, o.seed, config_path, inputs), o.out_dir);
    std::cout << "fit-baseline: " << saved.per_target.size() << " models (" << skips.size() << " skipped) -> "
              << o.out_dir << "\n";
    return exit_for(skips);
}

int run_evaluate(const CommonOpts& o, const std::string& command_line, const std::string& config_path) {
    const std::vector<TargetSpec> registry = load_registry(o.registry_path);
    const std::vector<TargetRowRef> targets = resolve_targets(registry, o.targets);
    const Cohort cohort = load_cohort(o);
    const SavedBaseline baseline = load_baseline(o.baseline_path);
    const std::vector<EnsembledScore> ensembled = ensemble_scores(cohort);

    const EvalRun run = run_evaluations(cohort, targets, ensembled, baseline, o.seed, eval_options(o, registry));
    std::filesystem::create_directories(o.out_dir);
    write_eval_outputs(run, o);
    std::vector<std::string> inputs = cohort_input_files(o.data_dir);
    inputs.push_back(o.baseline_path);
    if (!o.registry_path.empty()) inputs.push_back(o.registry_path);
    write_manifest(build_manifest(command_line, o.seed, config_path, inputs), o.out_dir);
    std::cout << "evaluate: " << run.evals.size() << " targets (" << run.skips.size() << " skipped) -> " << o.out_dir
              << "\n";
    return exit_for(run.skips);
}

int run_ppv(const CommonOpts& o, const std::string& command_line, const std::string& config_path) {
    const std::vector<TargetSpec> registry = load_registry(o.registry_path);
    const std::vector<TargetRowRef> targets = resolve_targets(registry, o.targets);
    const Cohort cohort = load_cohort(o);
    const SavedBaseline baseline = load_baseline(o.baseline_path);
    const std::vector<EnsembledScore> ensembled = ensemble_scores(cohort);
    const EvalOptions opts = eval_options(o, registry);

    auto slots = run_indexed<PpvResult>(targets.size(), [&](std::size_t i) {
        return evaluate_ppv(cohort, targets[i], ensembled, baseline, o.seed, o.fraction, o.replicates, opts);
    });
    SkipList skips;
    std::vector<PpvResult> results;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (auto r = take_or_skip(slots[i], "ppv", targets[i].row_name(), skips)) results.push_back(std::move(*r));
    }

    std::filesystem::create_directories(o.out_dir);
    const std::filesystem::path dir(o.out_dir);
    write_table_csv(ppv_results_table(results), (dir / "ppv_results.csv").string());
    if (o.format == "md")
        write_table_markdown(ppv_results_display(results), (dir / "ppv_results.md").string(),
                             "Predictive value at the top fraction");
    write_skips(skips, o.out_dir);
    std::vector<std::string> inputs = cohort_input_files(o.data_dir);
    inputs.push_back(o.baseline_path);
    if (!o.registry_path.empty()) inputs.push_back(o.registry_path);
    write_manifest(build_manifest(command_line, o.seed, config_path, inputs), o.out_dir);
    std::cout << "ppv: " << results.size() << " targets (" << skips.size() << " skipped) -> " << o.out_dir << "\n";
    return exit_for(skips);
}

int run_subgroup(const CommonOpts& o, const std::string& command_line, const std::string& config_path) {
    const std::vector<TargetSpec> registry = load_registry(o.registry_path);
    const std::vector<TargetRowRef> targets = resolve_targets(registry, o.targets);
    const Cohort cohort = load_cohort(o);
    const SavedBaseline baseline = load_baseline(o.baseline_path);
    const std::vector<EnsembledScore> ensembled = ensemble_scores(cohort);
    const EvalOptions opts = eval_options(o, registry);

    auto slots = run_indexed<std::vector<SubgroupRow>>(targets.size(), [&](std::size_t i) {
        return subgroup_analysis(cohort, targets[i], ensembled, baseline, o.seed, opts);
    });
    SkipList skips;
    Table merged;
    std::vector<std::pair<std::string, Table>> sections;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const std::string name = targets[i].row_name();
        auto rows = take_or_skip(slots[i], "subgroup", name, skips);
        if (!rows) continue;
        Table t = subgroup_table(name, *rows);
        if (merged.header.empty()) merged.header = t.header;
        merged.rows.insert(merged.rows.end(), t.rows.begin(), t.rows.end());
        sections.emplace_back(name, subgroup_display(*rows));
    }
    if (merged.header.empty()) merged = subgroup_table("", {});

    std::filesystem::create_directories(o.out_dir);
    const std::filesystem::path dir(o.out_dir);
    write_table_csv(merged, (dir / "subgroup.csv").string());
    if (o.format == "md") write_markdown_sections(sections, (dir / "subgroup.md").string(), "Subgroups");
    write_skips(skips, o.out_dir);
    std::vector<std::string> inputs = cohort_input_files(o.data_dir);
    inputs.push_back(o.baseline_path);
    if (!o.registry_path.empty()) inputs.push_back(o.registry_path);
    write_manifest(build_manifest(command_line, o.seed, config_path, inputs), o.out_dir);
    std::cout << "subgroup: " << sections.size() << " targets (" << skips.size() << " skipped) -> " << o.out_dir
              << "\n";
    return exit_for(skips);
}

struct SensitivityOut {
    std::vector<SensitivityRow> rows;
    std::vector<std::string> window_skips;
};

int run_sensitivity(const CommonOpts& o, const std::string& command_line, const std::string& config_path) {
    const std::vector<TargetSpec> registry = load_registry(o.registry_path);
    const std::vector<TargetRowRef> targets = resolve_targets(registry, o.targets);
    const Cohort cohort = load_cohort(o);
    const SavedBaseline baseline = load_baseline(o.baseline_path);
    const std::vector<EnsembledScore> ensembled = ensemble_scores(cohort);
    const EvalOptions opts = eval_options(o, registry);

    auto slots = run_indexed<SensitivityOut>(targets.size(), [&](std::size_t i) {
        SensitivityOut out;
        out.rows = temporal_sensitivity(cohort, targets[i], ensembled, baseline, o.windows, o.seed, opts,
                                        &out.window_skips);
        return out;
    });
    SkipList skips;
    Table merged;
    std::vector<std::pair<std::string, Table>> sections;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const std::string name = targets[i].row_name();
        auto out = take_or_skip(slots[i], "sensitivity", name, skips);
        if (!out) continue;
        for (const auto& w : out->window_skips) {
            log_warn(name + ": " + w);
            skips.push_back({"sensitivity", name, w});
        }
        Table t = sensitivity_table(name, out->rows);
        if (merged.header.empty()) merged.header = t.header;
        merged.rows.insert(merged.rows.end(), t.rows.begin(), t.rows.end());
        sections.emplace_back(name, sensitivity_display(out->rows));
    }
    if (merged.header.empty()) merged = sensitivity_table("", {});

    std::filesystem::create_directories(o.out_dir);
    const std::filesystem::path dir(o.out_dir);
    write_table_csv(merged, (dir / "sensitivity.csv").string());
    if (o.format == "md") write_markdown_sections(sections, (dir / "sensitivity.md").string(), "Temporal sensitivity");
    write_skips(skips, o.out_dir);
    std::vector<std::string> inputs = cohort_input_files(o.data_dir);
    inputs.push_back(o.baseline_path);
    if (!o.registry_path.empty()) inputs.push_back(o.registry_path);
    write_manifest(build_manifest(command_line, o.seed, config_path, inputs), o.out_dir);
    std::cout << "sensitivity: " << sections.size() << " targets (" << skips.size() << " skipped) -> " << o.out_dir
              << "\n";
    return exit_for(skips);
}

int run_adjust(const CommonOpts& o, const std::string& command_line, const std::string& config_path) {
    const std::vector<TargetSpec> registry = load_registry(o.registry_path);
    const std::vector<TargetRowRef> targets = resolve_targets(registry, o.targets);
    const Cohort cohort = load_cohort(o);
    const std::vector<EnsembledScore> ensembled = ensemble_scores(cohort);
    const EvalOptions opts = eval_options(o, registry);

    auto slots = run_indexed<AdjustedTable>(targets.size(), [&](std::size_t i) {
        return adjusted_for_target(cohort, targets[i], ensembled, o.seed, opts);
    });
    SkipList skips;
    Table merged;
    std::vector<std::pair<std::string, Table>> sections;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const std::string name = targets[i].row_name();
        auto table = take_or_skip(slots[i], "adjust", name, skips);
        if (!table) continue;
        for (const auto& w : table->warnings) log_warn(name + ": " + w);
        Table t = adjusted_table(*table);
        if (merged.header.empty()) merged.header = t.header;
        merged.rows.insert(merged.rows.end(), t.rows.begin(), t.rows.end());
        sections.emplace_back(name + " (" + format_n_over_pos(table->n, table->n_pos) + ")", adjusted_display(*table));
    }
    if (merged.header.empty()) merged = adjusted_table({});

    std::filesystem::create_directories(o.out_dir);
    const std::filesystem::path dir(o.out_dir);
    write_table_csv(merged, (dir / "adjusted.csv").string());
    if (o.format == "md") write_markdown_sections(sections, (dir / "adjusted.md").string(), "Adjusted odds ratios");
    write_skips(skips, o.out_dir);
    std::vector<std::string> inputs = cohort_input_files(o.data_dir);
    if (!o.registry_path.empty()) inputs.push_back(o.registry_path);
    write_manifest(build_manifest(command_line, o.seed, config_path, inputs), o.out_dir);
    std::cout << "adjust: " << sections.size() << " targets (" << skips.size() << " skipped) -> " << o.out_dir << "\n";
    return exit_for(skips);
}

// ---- image batches ---------------------------------------------------------

std::vector<std::filesystem::path> png_files_under(const std::string& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError(dir + ": not a directory");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError(dir + ": no .png files found");
    return files;
}

std::map<std::string, EllipseAnnotation> read_annotation_map(const std::string& path) {
    const CsvTable t = read_csv(path);
    const std::size_t id = t.column("image_id");
    const std::size_t pcx = t.column("pupil_cx"), pcy = t.column("pupil_cy");
    const std::size_t pw = t.column("pupil_w"), ph = t.column("pupil_h");
    const std::size_t icx = t.column("iris_cx"), icy = t.column("iris_cy");
    const std::size_t iw = t.column("iris_w"), ih = t.column("iris_h");
    std::map<std::string, EllipseAnnotation> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        EllipseAnnotation a;
        a.pupil = {parse_double_field(t, r, pcx, "pupil_cx"), parse_double_field(t, r, pcy, "pupil_cy"),
                   parse_double_field(t, r, pw, "pupil_w"), parse_double_field(t, r, ph, "pupil_h")};
        a.iris = {parse_double_field(t, r, icx, "iris_cx"), parse_double_field(t, r, icy, "iris_cy"),
                  parse_double_field(t, r, iw, "iris_w"), parse_double_field(t, r, ih, "iris_h")};
        if (!out.emplace(t.rows[r][id], a).second)
            throw DataError(path + ": duplicate annotation for image '" + t.rows[r][id] + "'");
    }
    return out;
}

int run_ablate(const std::string& images_dir, const std::string& annotations_path, const std::string& mode_token,
               const std::string& out_dir, const std::string& command_line, const std::string& config_path) {
    const AblationMode mode = parse_ablation_mode(mode_token);
    const bool needs_annotation = mode != AblationMode::None && mode != AblationMode::Gray;
    if (needs_annotation && annotations_path.empty())
        throw UsageError("--annotations is required for region mode '" + mode_token + "'");

    std::map<std::string, EllipseAnnotation> annotations;
    if (!annotations_path.empty()) annotations = read_annotation_map(annotations_path);

    const auto files = png_files_under(images_dir);
    std::size_t n = 0;
    for (const auto& file : files) {
        const std::string image_id = file.stem().string();
        std::optional<EllipseAnnotation> annotation;
        if (const auto it = annotations.find(image_id); it != annotations.end()) annotation = it->second;
        if (needs_annotation && !annotation)
            throw DataError(file.string() + ": no annotation for image '" + image_id + "' (mode " + mode_token + ")");
        const RasterImage image = read_png(file.string());
        const RasterImage result = apply_ablation(image, annotation, mode);
        const auto rel = std::filesystem::relative(file, images_dir);
        const auto out_path = std::filesystem::path(out_dir) / rel;
        std::filesystem::create_directories(out_path.parent_path());
        write_png(out_path.string(), result);
        ++n;
    }
    std::vector<std::string> inputs;
    if (!annotations_path.empty()) inputs.push_back(annotations_path);
    write_manifest(build_manifest(command_line, 0, config_path, inputs), out_dir);
    std::cout << "ablate: " << n << " images (" << mode_token << ") -> " << out_dir << "\n";
    return kExitOk;
}

int run_downres(const std::string& images_dir, std::vector<int> sizes, const std::string& out_dir,
                const std::string& command_line, const std::string& config_path) {
    if (sizes.empty()) sizes = default_ladder_sizes();
    for (int s : sizes)
        if (s <= 0) throw UsageError("--sizes must be positive");

    const auto files = png_files_under(images_dir);
    std::size_t n = 0;
    for (const auto& file : files) {
        const RasterImage image = read_png(file.string());
        const auto rel = std::filesystem::relative(file, images_dir);
        for (int size : sizes) {
            const RasterImage result = resolution_ladder(image, size, image.width);
            const auto out_path = std::filesystem::path(out_dir) / std::to_string(size) / rel;
            std::filesystem::create_directories(out_path.parent_path());
            write_png(out_path.string(), result);
            ++n;
        }
    }
    write_manifest(build_manifest(command_line, 0, config_path, {}), out_dir);
    std::cout << "downres: " << n << " images over " << sizes.size() << " sizes -> " << out_dir << "\n";
    return kExitOk;
}

// ---- synth -----------------------------------------------------------------

int run_synth(const std::string& spec_path, std::optional<int> patients, std::optional<std::uint64_t> seed,
              const std::string& out_dir, const std::string& command_line, const std::string& config_path) {
    SynthConfig config;
    if (!spec_path.empty()) config = synth_config_from_json(read_text_file(spec_path), spec_path);
    if (patients) config.n_patients = *patients;
    if (seed) config.seed = *seed;

    const SynthOutput output = generate_cohort(config);
    write_synth_dir(output, out_dir);
    std::vector<std::string> inputs;
    if (!spec_path.empty()) inputs.push_back(spec_path);
    write_manifest(build_manifest(command_line, config.seed, config_path, inputs), out_dir);
    std::cout << "synth: " << output.cohort.patients.size() << " patients, " << output.cohort.visits.size()
              << " visits, " << output.cohort.scores.size() << " scores -> " << out_dir << "\n";
    return kExitOk;
}

// ---- report ----------------------------------------------------------------

int run_report(const CommonOpts& o, const std::string& command_line, const std::string& config_path) {
    const std::vector<TargetSpec> registry = load_registry(o.registry_path);
    const std::vector<TargetRowRef> targets = resolve_targets(registry, o.targets);
    const Cohort cohort = load_cohort(o);
    const SavedBaseline baseline = load_baseline(o.baseline_path);
    const std::vector<EnsembledScore> ensembled = ensemble_scores(cohort);
    const EvalOptions opts = eval_options(o, registry);

    std::filesystem::create_directories(o.out_dir);
    const std::filesystem::path dir(o.out_dir);
    SkipList skips;

    // Headline evaluation plus ROC polylines for plotting.
    const EvalRun eval_run = run_evaluations(cohort, targets, ensembled, baseline, o.seed, opts);
    skips.insert(skips.end(), eval_run.skips.begin(), eval_run.skips.end());
    const std::vector<EvalResult> results = results_of(eval_run);
    write_table_csv(eval_results_table(results), (dir / "eval_results.csv").string());
    write_table_markdown(eval_results_display(results), (dir / "eval_results.md").string(), "Evaluation");
    Table roc_merged;
    for (const auto& eval : eval_run.evals) {
        Table t = roc_table(eval.result.target_name, roc_curves_for(eval));
        if (roc_merged.header.empty()) roc_merged.header = t.header;
        roc_merged.rows.insert(roc_merged.rows.end(), t.rows.begin(), t.rows.end());
    }
    if (roc_merged.header.empty()) roc_merged = roc_table("", {});
    write_table_csv(roc_merged, (dir / "roc_points.csv").string());

    // The remaining analyses skip targets independently; each analysis
    // contributes its own rows to the shared skip table.
    auto ppv_slots = run_indexed<PpvResult>(targets.size(), [&](std::size_t i) {
        return evaluate_ppv(cohort, targets[i], ensembled, baseline, o.seed, o.fraction, o.replicates, opts);
    });
    std::vector<PpvResult> ppv_results;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (auto r = take_or_skip(ppv_slots[i], "ppv", targets[i].row_name(), skips))
            ppv_results.push_back(std::move(*r));
    }
    write_table_csv(ppv_results_table(ppv_results), (dir / "ppv_results.csv").string());
    write_table_markdown(ppv_results_display(ppv_results), (dir / "ppv_results.md").string(),
                         "Predictive value at the top fraction");

    auto subgroup_slots = run_indexed<std::vector<SubgroupRow>>(targets.size(), [&](std::size_t i) {
        return subgroup_analysis(cohort, targets[i], ensembled, baseline, o.seed, opts);
    });
    {
        Table merged;
        std::vector<std::pair<std::string, Table>> sections;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const std::string name = targets[i].row_name();
            auto rows = take_or_skip(subgroup_slots[i], "subgroup", name, skips);
            if (!rows) continue;
            Table t = subgroup_table(name, *rows);
            if (merged.header.empty()) merged.header = t.header;
            merged.rows.insert(merged.rows.end(), t.rows.begin(), t.rows.end());
            sections.emplace_back(name, subgroup_display(*rows));
        }
        if (merged.header.empty()) merged = subgroup_table("", {});
        write_table_csv(merged, (dir / "subgroup.csv").string());
        write_markdown_sections(sections, (dir / "subgroup.md").string(), "Subgroups");
    }

    auto sens_slots = run_indexed<SensitivityOut>(targets.size(), [&](std::size_t i) {
        SensitivityOut out;
        out.rows = temporal_sensitivity(cohort, targets[i], ensembled, baseline, o.windows, o.seed, opts,
                                        &out.window_skips);
        return out;
    });
    {
        Table merged;
        std::vector<std::pair<std::string, Table>> sections;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const std::string name = targets[i].row_name();
            auto out = take_or_skip(sens_slots[i], "sensitivity", name, skips);
            if (!out) continue;
            for (const auto& w : out->window_skips) {
                log_warn(name + ": " + w);
                skips.push_back({"sensitivity", name, w});
            }
            Table t = sensitivity_table(name, out->rows);
            if (merged.header.empty()) merged.header = t.header;
            merged.rows.insert(merged.rows.end(), t.rows.begin(), t.rows.end());
            sections.emplace_back(name, sensitivity_display(out->rows));
        }
        if (merged.header.empty()) merged = sensitivity_table("", {});
        write_table_csv(merged, (dir / "sensitivity.csv").string());
        write_markdown_sections(sections, (dir / "sensitivity.md").string(), "Temporal sensitivity");
    }

    auto adj_slots = run_indexed<AdjustedTable>(targets.size(), [&](std::size_t i) {
        return adjusted_for_target(cohort, targets[i], ensembled, o.seed, opts);
    });
    {
        Table merged;
        std::vector<std::pair<std::string, Table>> sections;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const std::string name = targets[i].row_name();
            auto table = take_or_skip(adj_slots[i], "adjust", name, skips);
            if (!table) continue;
            for (const auto& w : table->warnings) log_warn(name + ": " + w);
            Table t = adjusted_table(*table);
            if (merged.header.empty()) merged.header = t.header;
            merged.rows.insert(merged.rows.end(), t.rows.begin(), t.rows.end());
            sections.emplace_back(name + " (" + format_n_over_pos(table->n, table->n_pos) + ")",
                                  adjusted_display(*table));
        }
        if (merged.header.empty()) merged = adjusted_table({});
        write_table_csv(merged, (dir / "adjusted.csv").string());
        write_markdown_sections(sections, (dir / "adjusted.md").string(), "Adjusted odds ratios");
    }

    write_skips(skips, o.out_dir);

    std::ostringstream index;
    index << "# Analysis bundle\n\n"
          << "- [Evaluation](eval_results.md) (machine: eval_results.csv, roc_points.csv)\n"
          << "- [Predictive value at the top fraction](ppv_results.md) (machine: ppv_results.csv)\n"
          << "- [Subgroups](subgroup.md) (machine: subgroup.csv)\n"
          << "- [Temporal sensitivity](sensitivity.md) (machine: sensitivity.csv)\n"
          << "- [Adjusted odds ratios](adjusted.md) (machine: adjusted.csv)\n"
          << "\nSkipped targets: skips.csv. Provenance: manifest.json.\n";
    write_text_file((dir / "index.md").string(), index.str());

    std::vector<std::string> inputs = cohort_input_files(o.data_dir);
    inputs.push_back(o.baseline_path);
    if (!o.registry_path.empty()) inputs.push_back(o.registry_path);
    write_manifest(build_manifest(command_line, o.seed, config_path, inputs), o.out_dir);
    std::cout << "report: " << eval_run.evals.size() << " targets (" << skips.size() << " skipped) -> " << o.out_dir
              << "\n";
    return exit_for(skips);
}

std::string join_command_line(int argc, char** argv) {
    std::string out;
    for (int i = 0; i < argc; ++i) {
        if (i) out += ' ';
        out += argv[i];
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cohort analyses over external eye photo model scores"};
    app.require_subcommand(1);
    CLI::Option* config_opt =
        app.set_config("--config", "", "TOML configuration file; command-line flags win")->check(CLI::ExistingFile);

    const std::string command_line = join_command_line(argc, argv);

    // Each subcommand owns a CommonOpts copy; unrelated fields stay unused.
    CommonOpts ingest_o, derive_o, fit_o, eval_o, ppv_o, sub_o, sens_o, adj_o, report_o;
    bool fit_augmented = false;

    CLI::App* c_ingest = app.add_subcommand("ingest", "Validate inputs and write the normalized cohort");
    add_data_option(c_ingest, ingest_o);
    add_out_dir_option(c_ingest, ingest_o);

    CLI::App* c_derive = app.add_subcommand("derive", "Matched labs, derived values, and labels per target");
    add_data_option(c_derive, derive_o);
    add_out_dir_option(c_derive, derive_o);
    add_target_options(c_derive, derive_o, "all");
    c_derive->add_option("--dataset-slice", derive_o.dataset_slice, "Restrict to one dataset id");
    c_derive->add_option("--max-window-days", derive_o.max_window_days, "Tighten the lab-matching window (days)");

    CLI::App* c_fit = app.add_subcommand("fit-baseline", "Fit per-target clinicodemographic baseline models");
    add_data_option(c_fit, fit_o);
    add_out_dir_option(c_fit, fit_o);
    add_target_options(c_fit, fit_o, "primary");
    c_fit->add_option("--dataset-slice", fit_o.dataset_slice, "Training dataset id (empty trains on all)");
    c_fit->add_option("--seed", fit_o.seed, "Root seed")->capture_default_str();
    c_fit->add_flag("--augmented", fit_augmented, "Add BMI, blood pressure, and pupil size to the candidates");

    CLI::App* c_eval = app.add_subcommand("evaluate", "Paired baseline-vs-DLS comparison per target");
    add_data_option(c_eval, eval_o);
    add_out_dir_option(c_eval, eval_o);
    add_target_options(c_eval, eval_o, "primary");
    add_analysis_options(c_eval, eval_o);

    CLI::App* c_ppv = app.add_subcommand("ppv", "Positive predictive value in the top score fraction");
    add_data_option(c_ppv, ppv_o);
    add_out_dir_option(c_ppv, ppv_o);
    add_target_options(c_ppv, ppv_o, "primary");
    add_analysis_options(c_ppv, ppv_o);
    c_ppv->add_option("--fraction", ppv_o.fraction, "Top fraction of ranked patients")->capture_default_str();
    c_ppv->add_option("--replicates", ppv_o.replicates, "Bootstrap replicates")->capture_default_str();

    CLI::App* c_sub = app.add_subcommand("subgroup", "Per-bucket comparisons inside each target");
    add_data_option(c_sub, sub_o);
    add_out_dir_option(c_sub, sub_o);
    add_target_options(c_sub, sub_o, "primary");
    add_analysis_options(c_sub, sub_o);

    CLI::App* c_sens = app.add_subcommand("sensitivity", "Re-evaluation under tightening lab-match windows");
    add_data_option(c_sens, sens_o);
    add_out_dir_option(c_sens, sens_o);
    add_target_options(c_sens, sens_o, "primary");
    add_analysis_options(c_sens, sens_o);
    c_sens->add_option("--windows", sens_o.windows, "Day windows, strictly descending")->capture_default_str();

    CLI::App* c_adj = app.add_subcommand("adjust", "Covariate-adjusted odds ratios for the DLS score");
    add_data_option(c_adj, adj_o);
    add_out_dir_option(c_adj, adj_o);
    add_target_options(c_adj, adj_o, "primary");
    c_adj->add_option("--seed", adj_o.seed, "Root seed")->capture_default_str();
    c_adj->add_option("--dataset-slice", adj_o.dataset_slice, "Restrict to one dataset id");
    c_adj->add_option("--format", adj_o.format, "csv, or md for csv plus display Markdown")
        ->check(CLI::IsMember({"csv", "md"}))
        ->capture_default_str();
    c_adj->add_option("--max-window-days", adj_o.max_window_days, "Tighten the lab-matching window (days)");

    std::string ablate_images, ablate_annotations, ablate_mode, ablate_out;
    CLI::App* c_ablate = app.add_subcommand("ablate", "Apply one region/grayscale manipulation to an image tree");
    c_ablate->add_option("--images", ablate_images, "Input directory of .png files")->required();
    c_ablate->add_option("--out-dir", ablate_out, "Output directory (structure preserved)")->required();
    c_ablate
        ->add_option("--mode", ablate_mode, "none, gray, no_pupil, no_iris, only_pupil, only_iris")
        ->required()
        ->check(CLI::IsMember({"none", "gray", "no_pupil", "no_iris", "only_pupil", "only_iris"}));
    c_ablate->add_option("--annotations", ablate_annotations, "annotations.csv with pupil/iris ellipses");

    std::string downres_images, downres_out;
    std::vector<int> downres_sizes;
    CLI::App* c_down = app.add_subcommand("downres", "Degrade images through the resolution ladder");
    c_down->add_option("--images", downres_images, "Input directory of .png files")->required();
    c_down->add_option("--out-dir", downres_out, "Output directory (one subdirectory per size)")->required();
    c_down->add_option("--sizes", downres_sizes, "Ladder sizes (default 587 300 150 75 37 18 9 5)");

    std::string synth_spec, synth_out;
    std::optional<int> synth_patients;
    std::optional<std::uint64_t> synth_seed;
    CLI::App* c_synth = app.add_subcommand("synth", "Generate a seeded synthetic cohort with planted effects");
    c_synth->add_option("--out-dir", synth_out, "Output directory")->required();
    c_synth->add_option("--spec", synth_spec, "Generator configuration JSON");
    c_synth->add_option("--patients", synth_patients, "Override the configured patient count");
    c_synth->add_option("--seed", synth_seed, "Override the configured seed");

    CLI::App* c_report = app.add_subcommand("report", "Run every analysis and assemble the CSV + Markdown bundle");
    add_data_option(c_report, report_o);
    add_out_dir_option(c_report, report_o);
    add_target_options(c_report, report_o, "primary");
    add_analysis_options(c_report, report_o);
    c_report->add_option("--fraction", report_o.fraction, "Top fraction for the PPV table")->capture_default_str();
    c_report->add_option("--replicates", report_o.replicates, "Bootstrap replicates")->capture_default_str();
    c_report->add_option("--windows", report_o.windows, "Sensitivity day windows")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    const std::string config_path = config_opt->count() ? config_opt->as<std::string>() : "";

    try {
        if (c_ingest->parsed()) return run_ingest(ingest_o, command_line, config_path);
        if (c_derive->parsed()) return run_derive(derive_o, command_line, config_path);
        if (c_fit->parsed()) return run_fit_baseline(fit_o, fit_augmented, command_line, config_path);
        if (c_eval->parsed()) return run_evaluate(eval_o, command_line, config_path);
        if (c_ppv->parsed()) return run_ppv(ppv_o, command_line, config_path);
        if (c_sub->parsed()) return run_subgroup(sub_o, command_line, config_path);
        if (c_sens->parsed()) return run_sensitivity(sens_o, command_line, config_path);
        if (c_adj->parsed()) return run_adjust(adj_o, command_line, config_path);
        if (c_ablate->parsed())
            return run_ablate(ablate_images, ablate_annotations, ablate_mode, ablate_out, command_line, config_path);
        if (c_down->parsed()) return run_downres(downres_images, downres_sizes, downres_out, command_line, config_path);
        if (c_synth->parsed())
            return run_synth(synth_spec, synth_patients, synth_seed, synth_out, command_line, config_path);
        if (c_report->parsed()) return run_report(report_o, command_line, config_path);
        std::cerr << "error: no subcommand selected\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
