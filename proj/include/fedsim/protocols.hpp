#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsim/blockchain.hpp"
#include "fedsim/data.hpp"
#include "fedsim/ledger.hpp"
#include "fedsim/netmodel.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/trainer.hpp"

namespace fedsim {

enum class ProtocolKind { cfl, bfl, bfl_aggregated, gfl, gfl_nm };
enum class SequenceMode { with_replacement, permutation };

std::string_view to_string(ProtocolKind kind);
std::string_view to_string(SequenceMode mode);
std::optional<ProtocolKind> parse_protocol(std::string_view name);
std::optional<SequenceMode> parse_sequence_mode(std::string_view name);
bool uses_blockchain(ProtocolKind kind);

struct ProtocolConfig {
  ProtocolKind kind = ProtocolKind::cfl;
  std::size_t rounds = 200;
  std::size_t clients_per_round = 200;
  SequenceMode gfl_sequence = SequenceMode::with_replacement;
  /// GFL: after the last round, ship the final model to m more nodes.
  bool gfl_final_broadcast = false;
  /// Bytes a transaction adds on top of the model (S_tr = S_w + metadata).
  std::uint64_t tx_metadata_bytes = 0;
  std::size_t validation_clients = 200;
  /// Keep the global model after every round in the result (for tests).
  bool keep_round_models = false;
  /// Record the chain event trace (BFL only).
  bool record_chain_trace = false;
};

/// Wireless edge links: one PHY, two sender classes.
struct LinkModel {
  PhyParams phy;
  NodeClass edge = default_edge_device();
  NodeClass server = default_server();
};

/// Calibration of the training-cost model: a client update lasts
/// tau · E · |D_k| seconds and draws p_cpu (times an optional per-client
/// multiplier) watts.
struct EnergyModel {
  static constexpr double kDefaultTau = 2.0626e-3;
  static constexpr double kDefaultCpuWatts = 1.8654;

  double p_cpu_watts = kDefaultCpuWatts;
  double tau = kDefaultTau;
  std::vector<double> cpu_multipliers;

  double multiplier(std::size_t client) const noexcept {
    return client < cpu_multipliers.size() ? cpu_multipliers[client] : 1.0;
  }
};

struct RoundRecord {
  std::size_t round = 0;
  /// Model at the start of the round on the training data of the round's
  /// clients. NaN when the trainer cannot score models.
  double train_accuracy = 0.0;
  /// Model at the end of the round on the validation clients.
  double validation_accuracy = 0.0;
  double validation_loss = 0.0;
};

struct RunResult {
  ProtocolKind kind = ProtocolKind::cfl;
  std::vector<RoundRecord> trajectory;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  CostLedger ledger;
  ModelWeights final_model;
  std::vector<ModelWeights> round_models;
  /// |D_k| of every ClientUpdate, in execution order.
  std::vector<std::size_t> update_sizes;
  std::optional<ChainSummary> chain;
  std::vector<TraceEvent> chain_trace;
  bool chain_valid = true;
};

struct SimContext {
  const FederatedDataset& data;
  const LocalTrainer& trainer;
  LinkModel links;
  EnergyModel energy;
};

/// m distinct client ids drawn uniformly from [0, n_total).
std::vector<std::size_t> select_clients(std::size_t n_total, std::size_t m, Rng& rng);

/// Visiting order for a gossip round.
std::vector<std::size_t> get_sequence(std::span<const std::size_t> selected, SequenceMode mode, Rng& rng);

RunResult run_cfl(const ProtocolConfig& cfg, const SimContext& ctx, RngStreams& streams);
RunResult run_gfl(const ProtocolConfig& cfg, const SimContext& ctx, RngStreams& streams);
RunResult run_gfl_nm(const ProtocolConfig& cfg, const SimContext& ctx, RngStreams& streams);
RunResult run_bfl(const ProtocolConfig& cfg, const SimContext& ctx, const ChainConfig& chain, RngStreams& streams);
RunResult run_bfl_aggregated(const ProtocolConfig& cfg, const SimContext& ctx, const ChainConfig& chain,
                             RngStreams& streams);

/// Dispatches on cfg.kind; `chain` is required for the blockchain variants.
RunResult run_protocol(const ProtocolConfig& cfg, const SimContext& ctx, const ChainConfig* chain,
                       RngStreams& streams);

}  // namespace fedsim
