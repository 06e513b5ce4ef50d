#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eyelab/pipeline.hpp"

namespace eyelab {

// Provenance record written next to every output bundle.
struct RunManifest {
    std::string command;       // subcommand plus resolved arguments
    std::string tool_version;  // fixed at build time
    std::uint64_t seed = 0;
    std::string config_digest;  // digest of the resolved config file, "-" if none
    std::vector<std::pair<std::string, std::string>> input_digests;  // path -> digest
    std::string timestamp;  // ISO-8601 UTC; SOURCE_DATE_EPOCH overrides the clock
};

std::string tool_version();

// FNV-1a 64-bit digest of a file's bytes, as 16 hex characters.
std::string file_digest_hex(const std::string& path);
std::string text_digest_hex(const std::string& text);

// UTC timestamp; honors SOURCE_DATE_EPOCH for reproducible runs.
std::string current_timestamp_utc();

std::string manifest_to_json(const RunManifest& manifest);
void write_manifest(const RunManifest& manifest, const std::string& out_dir);

// A rectangular string table, emitted as CSV or Markdown.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

void write_table_csv(const Table& table, const std::string& path);
// Pipe-table text for one table, header row included.
std::string table_to_markdown(const Table& table);
// Markdown rendering with a title and a trailing manifest reference line.
void write_table_markdown(const Table& table, const std::string& path, const std::string& title);
// One document with a top-level title and one titled section per table.
void write_markdown_sections(const std::vector<std::pair<std::string, Table>>& sections, const std::string& path,
                             const std::string& title);

// Display formatting in the published tables' style.
std::string format_auc_ci(const AucEstimate& est);             // "0.80 (0.76, 0.83)"
std::string format_ci(double value, double lo, double hi);     // "0.12 (0.08, 0.16)"
std::string format_p_value(double p);                          // "<0.001" below 0.001, else 3 decimals
std::string format_n_over_pos(std::size_t n, std::size_t pos); // "2186 / 202 (9.2%)"

// Machine-precision rows (CSV payloads).
Table eval_results_table(const std::vector<EvalResult>& results);
Table ppv_results_table(const std::vector<PpvResult>& results);
Table subgroup_table(const std::string& target_name, const std::vector<SubgroupRow>& rows);
Table sensitivity_table(const std::string& target_name, const std::vector<SensitivityRow>& rows);
Table adjusted_table(const AdjustedTable& table);
Table derived_table(const std::vector<DerivedRow>& rows);
Table roc_table(const std::string& target_name, const TargetRocCurves& curves);

// Display variants mirroring the published layouts.
Table eval_results_display(const std::vector<EvalResult>& results);
Table ppv_results_display(const std::vector<PpvResult>& results);
Table subgroup_display(const std::vector<SubgroupRow>& rows);
Table sensitivity_display(const std::vector<SensitivityRow>& rows);
Table adjusted_display(const AdjustedTable& table);

}  // namespace eyelab
