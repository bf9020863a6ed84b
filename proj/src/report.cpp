#include "fedsim/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <system_error>

#include "fedsim/errors.hpp"

namespace fedsim {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// NaN has no JSON spelling; reports carry null instead.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

bool needs_quotes(const std::string& s) { return s.find_first_of(",\"\r\n") != std::string::npos; }

std::string quote(const std::string& s) {
  if (!needs_quotes(s)) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double last_or_nan(const RunResult& r, double RoundRecord::*field) {
  return r.trajectory.empty() ? std::nan("") : r.trajectory.back().*field;
}

json ledger_json(const CostLedger& l) {
  return {{"params_tx_edge", l.params_tx_edge},
          {"params_tx_cloud", l.params_tx_cloud},
          {"params_p2p", l.params_p2p},
          {"params_p2p_orphaned", l.params_p2p_orphaned},
          {"params_transferred", l.params_transferred()},
          {"bytes_tx_edge", l.bytes_tx_edge},
          {"bytes_tx_cloud", l.bytes_tx_cloud},
          {"bytes_p2p", l.bytes_p2p},
          {"bytes_p2p_orphaned", l.bytes_p2p_orphaned},
          {"bytes_transferred", l.bytes_transferred()},
          {"t_train", l.t_train},
          {"t_train_weighted", l.t_train_weighted},
          {"t_tx_edge", l.t_tx_edge},
          {"t_tx_cloud", l.t_tx_cloud},
          {"t_bc", l.t_bc},
          {"e_train", l.e_train},
          {"e_tx_edge", l.e_tx_edge},
          {"e_tx_cloud", l.e_tx_cloud},
          {"e_bc", l.e_bc},
          {"e_bc_orphaned", l.e_bc_orphaned},
          {"grad_step_count", l.grad_step_count},
          {"scalar_op_count", l.scalar_op_count},
          {"client_updates", l.client_updates},
          {"n_chain", l.n_chain},
          {"n_fork_attempts", l.n_fork_attempts},
          {"n_orphaned_blocks", l.n_orphaned_blocks}};
}

json chain_json(const ChainSummary& c) {
  return {{"blocks", c.blocks},
          {"attempts", c.attempts},
          {"forks", c.forks},
          {"fork_probability", c.fork_probability()},
          {"mean_block_delay", c.mean_block_delay()},
          {"mean_mining_interval", c.mean_mining_interval},
          {"total_delay", c.total_delay}};
}

const char* check_name(ReconcileItem::Check c) {
  switch (c) {
    case ReconcileItem::Check::exact:
      return "exact";
    case ReconcileItem::Check::relative:
      return "relative";
    case ReconcileItem::Check::upper_bound:
      return "upper_bound";
  }
  return "?";
}

const ChainSummary* chain_of(const RunRecord& r) {
  if (r.chain_study) return &*r.chain_study;
  if (r.result && r.result->chain) return &*r.result->chain;
  return nullptr;
}

}  // namespace

std::string to_csv(const CsvTable& table) {
  std::string out;
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += quote(fields[i]);
    }
    out += '\n';
  };
  line(table.header);
  for (const auto& row : table.rows) line(row);
  return out;
}

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> lines;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool row_open = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    row_open = true;
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      fields.push_back(std::move(field));
      field.clear();
      lines.push_back(std::move(fields));
      fields.clear();
      row_open = false;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw FormatError("<csv>", "unterminated quoted field");
  if (row_open) {
    fields.push_back(std::move(field));
    lines.push_back(std::move(fields));
  }
  CsvTable t;
  if (lines.empty()) return t;
  t.header = std::move(lines.front());
  t.rows.assign(std::make_move_iterator(lines.begin() + 1), std::make_move_iterator(lines.end()));
  return t;
}

CsvTable comparison_table(std::span<const RunRecord> records) {
  CsvTable t;
  t.header = kComparisonColumns;
  for (const auto& rec : records) {
    if (!rec.result) continue;
    const RunResult& r = *rec.result;
    const double gb = static_cast<double>(r.ledger.params_transferred()) * kParamBytes / 1e9;
    t.rows.push_back({rec.cell.name, fixed(last_or_nan(r, &RoundRecord::train_accuracy), 4),
                      fixed(last_or_nan(r, &RoundRecord::validation_accuracy), 4), fixed(r.test_accuracy, 4),
                      fixed(rec.convergence_time, 2), fixed(rec.energy.computation_percent(), 2),
                      fixed(rec.energy.total_wh(), 2), fixed(gb, 2)});
  }
  return t;
}

CsvTable accuracy_table(std::span<const RunRecord> records) {
  CsvTable t;
  t.header = {"run", "round", "train_accuracy", "validation_accuracy", "validation_loss"};
  for (const auto& rec : records) {
    if (!rec.result) continue;
    for (const auto& round : rec.result->trajectory) {
      t.rows.push_back({rec.cell.name, std::to_string(round.round + 1), fixed(round.train_accuracy, 6),
                        fixed(round.validation_accuracy, 6), fixed(round.validation_loss, 6)});
    }
  }
  return t;
}

CsvTable chain_table(std::span<const RunRecord> records) {
  CsvTable t;
  t.header = {"run",   "miners",           "block_interval",   "blocks",
              "attempts", "forks",         "fork_probability", "mean_block_delay",
              "mean_mining_interval"};
  for (const auto& rec : records) {
    const ChainSummary* c = chain_of(rec);
    if (!c || !rec.cell.config.chain) continue;
    const ChainConfig& cc = *rec.cell.config.chain;
    t.rows.push_back({rec.cell.name, std::to_string(cc.n_miners), fixed(cc.block_interval, 3),
                      std::to_string(c->blocks), std::to_string(c->attempts), std::to_string(c->forks),
                      fixed(c->fork_probability(), 6), fixed(c->mean_block_delay(), 6),
                      fixed(c->mean_mining_interval, 6)});
  }
  return t;
}

json run_report(const RunRecord& rec) {
  json j;
  j["run"] = rec.cell.name;
  j["protocol"] = rec.cell.chain_study ? "chain_study" : std::string(to_string(rec.cell.kind));
  j["seed"] = rec.cell.config.seed;
  j["config"] = config_to_json(rec.cell.config);
  j["status"] = rec.ok() ? "ok" : (rec.failure == FailureKind::config ? "config_error" : "run_error");
  if (!rec.ok()) j["error"] = rec.error;
  if (rec.chain_study) j["chain"] = chain_json(*rec.chain_study);
  if (!rec.result) return j;

  const RunResult& r = *rec.result;
  json traj = json::array();
  for (const auto& round : r.trajectory) {
    traj.push_back({{"round", round.round + 1},
                    {"train_accuracy", number(round.train_accuracy)},
                    {"validation_accuracy", number(round.validation_accuracy)},
                    {"validation_loss", number(round.validation_loss)}});
  }
  j["trajectory"] = traj;
  j["test_accuracy"] = number(r.test_accuracy);
  j["test_loss"] = number(r.test_loss);
  j["ledger"] = ledger_json(r.ledger);
  j["energy"] = {{"e_train_j", rec.energy.e_train},
                 {"e_tx_edge_j", rec.energy.e_tx_e},
                 {"e_tx_cloud_j", rec.energy.e_tx_c},
                 {"e_bc_j", rec.energy.e_bc},
                 {"total_j", rec.energy.total},
                 {"total_wh", rec.energy.total_wh()},
                 {"computation_percent", rec.energy.computation_percent()}};
  j["convergence_time_s"] = rec.convergence_time;
  j["comm_overhead"] = {{"params", r.ledger.params_transferred()},
                        {"gigabytes", static_cast<double>(r.ledger.params_transferred()) * kParamBytes / 1e9},
                        {"wire_bytes", r.ledger.bytes_transferred()}};
  j["model_params"] = rec.scenario.w;
  if (r.chain) {
    j["chain"] = chain_json(*r.chain);
    j["chain"]["valid"] = r.chain_valid;
  }
  if (rec.reconcile) {
    json items = json::array();
    for (const auto& it : rec.reconcile->items) {
      items.push_back({{"name", it.name},
                       {"closed_form", it.closed_form},
                       {"simulated", it.simulated},
                       {"delta", it.delta},
                       {"check", check_name(it.check)},
                       {"ok", it.ok}});
    }
    j["reconcile"] = {{"ok", rec.reconcile->ok()}, {"items", items}};
  }
  return j;
}

std::string chain_trace_jsonl(const RunRecord& rec) {
  std::string out;
  if (!rec.result) return out;
  for (const auto& e : rec.result->chain_trace) {
    const json line{{"event", e.event},   {"time", e.time},   {"height", e.height},
                    {"attempt", e.attempt}, {"miner", e.miner}, {"payload_bytes", e.payload_bytes},
                    {"duration", e.duration}};
    out += line.dump() + "\n";
  }
  return out;
}

void write_atomic(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_run_report(const RunRecord& rec, const fs::path& dir) {
  write_atomic(dir / "runs" / (rec.cell.name + ".json"), run_report(rec).dump(2) + "\n");
  if (rec.result && !rec.result->chain_trace.empty()) {
    write_atomic(dir / "traces" / (rec.cell.name + ".jsonl"), chain_trace_jsonl(rec));
  }
}

void emit_tables(std::span<const RunRecord> records, const fs::path& dir) {
  write_atomic(dir / "comparison.csv", to_csv(comparison_table(records)));
  write_atomic(dir / "accuracy.csv", to_csv(accuracy_table(records)));
  const CsvTable chain = chain_table(records);
  if (!chain.rows.empty()) write_atomic(dir / "chain.csv", to_csv(chain));
}

void emit_reports(std::span<const RunRecord> records, const fs::path& dir) {
  for (const auto& rec : records) write_run_report(rec, dir);
  emit_tables(records, dir);
}

}  // namespace fedsim
