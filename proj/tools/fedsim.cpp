#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "fedsim/errors.hpp"
#include "fedsim/report.hpp"

namespace {

using namespace fedsim;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRun = 2;
constexpr int kExitReconcile = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::size_t jobs = 1;
};

ExperimentConfig load(const Options& o, bool keep_sweep) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output = *o.out;
  if (!keep_sweep) cfg.sweep.reset();
  return cfg;
}

void print_table(const CsvTable& t) {
  for (const auto& h : t.header) std::printf("%-20s", h.c_str());
  std::printf("\n");
  for (const auto& row : t.rows) {
    for (const auto& f : row) std::printf("%-20s", f.c_str());
    std::printf("\n");
  }
}

int report_failures(const std::vector<RunRecord>& records) {
  int code = kExitOk;
  for (const auto& r : records) {
    if (r.ok()) continue;
    std::fprintf(stderr, "fedsim: %s failed: %s\n", r.cell.name.c_str(), r.error.c_str());
    code = r.failure == FailureKind::config && code == kExitOk ? kExitConfig : kExitRun;
  }
  return code;
}

int cmd_run(const Options& o, bool sweep) {
  const ExperimentConfig cfg = load(o, sweep);
  const fs::path dir = cfg.output;
  std::vector<RunRecord> done;
  RunOptions opts;
  opts.jobs = o.jobs;
  opts.on_record = [&](const RunRecord& rec) {
    // Written as each cell finishes so an interrupted sweep keeps its results.
    done.push_back(rec);
    write_run_report(rec, dir);
    emit_tables(done, dir);
    std::fprintf(stderr, "fedsim: %s %s\n", rec.cell.name.c_str(), rec.ok() ? "done" : "FAILED");
  };
  const auto records = run_experiment(cfg, opts);
  emit_tables(records, dir);
  const CsvTable comparison = comparison_table(records);
  if (!comparison.rows.empty()) print_table(comparison);
  const CsvTable chain = chain_table(records);
  if (!chain.rows.empty()) print_table(chain);
  std::printf("reports written to %s\n", dir.string().c_str());
  return report_failures(records);
}

int cmd_verify(const Options& o) {
  const ExperimentConfig cfg = load(o, true);
  RunOptions opts;
  opts.jobs = o.jobs;
  opts.counting_only = true;
  const auto records = run_experiment(cfg, opts);
  int code = report_failures(records);
  bool all_ok = true;
  for (const auto& rec : records) {
    if (!rec.reconcile) continue;
    const bool ok = rec.reconcile->ok();
    all_ok = all_ok && ok;
    std::printf("%-28s %s\n", rec.cell.name.c_str(), ok ? "reconciled" : "MISMATCH");
    for (const auto& it : rec.reconcile->items) {
      if (!it.ok) {
        std::printf("  %-26s closed form %s, simulated %s, delta %g\n", it.name.c_str(), it.closed_form.c_str(),
                    it.simulated.c_str(), it.delta);
      }
    }
  }
  if (code != kExitOk) return code;
  return all_ok ? kExitOk : kExitReconcile;
}

int cmd_costs(const Options& o) {
  const ExperimentConfig cfg = load(o, false);
  const auto [input_dim, classes] = dataset_shape(cfg.dataset);
  const auto layers = model_layers(cfg.model, input_dim, classes);
  const std::uint64_t w = param_count(layers, model_input_shape(cfg.model, input_dim));
  const std::uint64_t d_max = nominal_max_shard(cfg.dataset);
  const double mean_shard = static_cast<double>(d_max);

  nlohmann::json out = nlohmann::json::array();
  std::printf("model parameters |w| = %llu, model size = %.2f KB\n", static_cast<unsigned long long>(w),
              static_cast<double>(w * kParamBytes) / 1000.0);
  std::printf("%-16s %22s %14s %16s %14s %14s\n", "protocol", "params transferred", "comm (GB)", "conv. time (s)",
              "energy (Wh)", "e_bc (Wh)");
  for (ProtocolKind kind : cfg.protocols) {
    const ScenarioParams p = scenario_for(cfg, kind, w, d_max);
    const CommOverhead comm = comm_overhead(kind, p);
    const Complexity cx = complexity(kind, p);
    const ChainConfig chain = cfg.chain.value_or(ChainConfig{});
    const std::uint64_t block_bytes = kind == ProtocolKind::bfl ? p.header_bytes + p.clients * (p.model_bytes() + p.tx_metadata_bytes)
                                                                : p.header_bytes + p.model_bytes();
    const CostEstimate est = estimate_costs(kind, p, mean_shard, hop_time(block_bytes, chain));
    std::printf("%-16s %22s %14.2f %16.2f %14.2f %14.2f\n", std::string(to_string(kind)).c_str(),
                comm.params.str().c_str(), comm.gigabytes(), est.convergence_time, est.energy.total_wh(),
                joules_to_wh(est.energy.e_bc));
    out.push_back({{"protocol", to_string(kind)},
                   {"model_params", w},
                   {"comm_params", comm.params.str()},
                   {"comm_bytes", comm.bytes.str()},
                   {"comm_gigabytes", comm.gigabytes()},
                   {"complexity_dominant", cx.dominant.str()},
                   {"complexity_full", cx.full.str()},
                   {"estimate",
                    {{"t_train", est.t_train},
                     {"t_tx_edge", est.t_tx_e},
                     {"t_tx_cloud", est.t_tx_c},
                     {"t_bc", est.t_bc},
                     {"convergence_time", est.convergence_time},
                     {"e_train_wh", joules_to_wh(est.energy.e_train)},
                     {"e_tx_edge_wh", joules_to_wh(est.energy.e_tx_e)},
                     {"e_tx_cloud_wh", joules_to_wh(est.energy.e_tx_c)},
                     {"e_bc_wh", joules_to_wh(est.energy.e_bc)},
                     {"total_wh", est.energy.total_wh()}}}});
  }
  if (o.out) write_atomic(fs::path(*o.out) / "costs.json", out.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning protocol simulator: CFL, BFL and GFL cost and accuracy study"};
  app.require_subcommand(1);
  Options opts;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", opts.config, "YAML experiment config")->required();
    sub->add_option("--seed", opts.seed, "Override the master seed");
    sub->add_option("--out", opts.out, "Output directory");
    sub->add_option("--jobs", opts.jobs, "Sweep cells to run in parallel")->check(CLI::PositiveNumber);
  };
  CLI::App* run = app.add_subcommand("run", "Run every configured protocol once (sweep axes ignored)");
  CLI::App* sweep = app.add_subcommand("sweep", "Run the Cartesian product of the sweep axes");
  CLI::App* verify = app.add_subcommand("verify", "Check simulated counters against the closed forms");
  CLI::App* costs = app.add_subcommand("costs", "Evaluate the closed forms without simulating");
  for (CLI::App* sub : {run, sweep, verify, costs}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(opts, false);
    if (*sweep) return cmd_run(opts, true);
    if (*verify) return cmd_verify(opts);
    if (*costs) return cmd_costs(opts);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "fedsim: config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fedsim: %s\n", e.what());
    return kExitRun;
  }
  return kExitOk;
}
