#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/ledger.hpp"
#include "fedsim/protocols.hpp"

namespace fedsim {

/// Arbitrary precision integer for closed forms; 2^l and the BFL m² terms
/// overflow 64 bits at moderate sizes.
using WideInt = boost::multiprecision::cpp_int;

constexpr double kJoulesPerWh = 3600.0;
inline double joules_to_wh(double j) noexcept { return j / kJoulesPerWh; }
inline double wh_to_joules(double wh) noexcept { return wh * kJoulesPerWh; }

struct ScenarioParams {
  std::uint64_t rounds = 200;
  std::uint64_t clients = 200;
  std::uint64_t epochs = 5;
  std::uint64_t batch_size = 20;
  /// Largest local dataset, |D_max|.
  std::uint64_t d_max = 0;
  /// Model size |w| in parameters.
  std::uint64_t w = 0;
  std::uint64_t n_b = 200;
  std::uint64_t difficulty_bits = 0;
  /// GFL ships the final model to m extra nodes.
  bool final_broadcast = false;

  std::uint64_t header_bytes = 25000;
  std::uint64_t tx_metadata_bytes = 0;

  double p_cpu = EnergyModel::kDefaultCpuWatts;
  double p_h = 1350.0;
  double block_interval = 15.0;
  double tau = EnergyModel::kDefaultTau;
  double p_tx_edge = 0.0;
  double p_tx_cloud = 0.0;
  /// Duration of one RTS/CTS/DATA/ACK exchange for each transfer type.
  double t_exchange_edge = 0.0;
  double t_exchange_cloud = 0.0;

  void validate() const;
  std::uint64_t model_bytes() const noexcept { return w * kParamBytes; }
};

struct Complexity {
  /// The term kept by the big-O statement.
  WideInt dominant;
  /// Exact operation count before dropping lower-order terms.
  WideInt full;
};

Complexity complexity(ProtocolKind kind, const ScenarioParams& p);

/// Operations outside local training in one round (transfers, averaging,
/// merging, mining, propagation).
WideInt round_overhead_ops(ProtocolKind kind, const ScenarioParams& p);

/// Operations of one local update on n samples.
WideInt update_ops(std::uint64_t n, const ScenarioParams& p);

struct CommOverhead {
  WideInt params;
  WideInt bytes;
  double gigabytes() const;
};

CommOverhead comm_overhead(ProtocolKind kind, const ScenarioParams& p);

double convergence_time(ProtocolKind kind, double t_train, double t_tx_e, double t_tx_c, double t_bc);
double convergence_time(ProtocolKind kind, const CostLedger& ledger);

struct EnergyBreakdown {
  double e_train = 0.0;
  double e_tx_e = 0.0;
  double e_tx_c = 0.0;
  double e_bc = 0.0;
  double total = 0.0;

  double total_wh() const noexcept { return joules_to_wh(total); }
  /// Share of training and mining in the total, in percent.
  double computation_percent() const noexcept {
    return total > 0.0 ? 100.0 * (e_train + e_bc) / total : 0.0;
  }
};

EnergyBreakdown energy_total(ProtocolKind kind, const CostLedger& ledger, const ScenarioParams& p);

/// Expected byte totals per sender class for a complete run.
struct ByteForecast {
  WideInt edge;
  WideInt cloud;
  WideInt p2p;
};

ByteForecast byte_forecast(ProtocolKind kind, const ScenarioParams& p);

struct ReconcileItem {
  std::string name;
  std::string closed_form;
  std::string simulated;
  double delta = 0.0;
  /// Exact items must match to the unit; the others use `tolerance` (relative)
  /// or, for bounds, simulated <= closed_form.
  enum class Check { exact, relative, upper_bound } check = Check::exact;
  double tolerance = 0.0;
  bool ok = true;
};

struct ReconcileReport {
  ProtocolKind kind = ProtocolKind::cfl;
  std::vector<ReconcileItem> items;

  bool ok() const noexcept;
  std::vector<ReconcileItem> mismatches() const;
};

/// Compares a ledger with the closed forms. `update_sizes` are the |D_k| of
/// every client update in the run; when empty, size-dependent checks fall back
/// to upper bounds over d_max.
ReconcileReport reconcile(const CostLedger& ledger, const ScenarioParams& p, ProtocolKind kind,
                          std::span<const std::size_t> update_sizes = {});

/// Closed-form estimate of a run without simulating it. Training uses the mean
/// shard size; the chain term assumes no forks and one hop of propagation.
struct CostEstimate {
  double t_train = 0.0;
  double t_tx_e = 0.0;
  double t_tx_c = 0.0;
  double t_bc = 0.0;
  double convergence_time = 0.0;
  EnergyBreakdown energy;
};

CostEstimate estimate_costs(ProtocolKind kind, const ScenarioParams& p, double mean_shard_size,
                            double hop_seconds);

}  // namespace fedsim
