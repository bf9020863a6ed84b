#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedsim/experiment.hpp"

namespace fedsim {

/// Columns of the protocol comparison table.
inline const std::vector<std::string> kComparisonColumns{
    "run",           "Acc. Training",         "Acc. Validation",   "Acc. Test", "Conv. Time (s)",
    "Comp. Energy (%)", "Tot. Energy (Wh)", "Comm. Overhead (GB)"};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  friend bool operator==(const CsvTable&, const CsvTable&) = default;
};

std::string to_csv(const CsvTable& table);
/// Parses RFC 4180 style CSV (quoted fields may hold commas, quotes, newlines).
CsvTable parse_csv(const std::string& text);

CsvTable comparison_table(std::span<const RunRecord> records);
/// One row per round per successful learning run.
CsvTable accuracy_table(std::span<const RunRecord> records);
/// Fork and delay statistics of every run that used a chain.
CsvTable chain_table(std::span<const RunRecord> records);

/// Self-contained report: the exact cell config and seed, the trajectory,
/// ledger, cost breakdowns and reconciliation.
nlohmann::json run_report(const RunRecord& record);

std::string chain_trace_jsonl(const RunRecord& record);

/// Writes through a temporary file in the same directory and renames it into
/// place. Throws Error with the path on failure.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Writes runs/<name>.json (and the chain trace when recorded).
void write_run_report(const RunRecord& record, const std::filesystem::path& dir);

/// Writes per-run reports plus comparison.csv, accuracy.csv and chain.csv.
void emit_reports(std::span<const RunRecord> records, const std::filesystem::path& dir);

/// Writes the three CSV tables only.
void emit_tables(std::span<const RunRecord> records, const std::filesystem::path& dir);

}  // namespace fedsim
