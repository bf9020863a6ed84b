#pragma once

#include <cstdint>

namespace fedsim {

/// Audited totals of one run. Counters split by the class of the sender:
/// `edge` is an edge device on the wireless link, `cloud` a server or miner on
/// the wireless link, `p2p` the wired links between blockchain nodes.
/// Parameter counters are in model-parameter units (the |w| of the closed
/// forms); byte counters hold what actually crossed the link, including block
/// headers and transaction metadata. Anything attributable to forked
/// (orphaned) blocks lands in the `_orphaned` fields only.
struct CostLedger {
  std::uint64_t params_tx_edge = 0;
  std::uint64_t params_tx_cloud = 0;
  std::uint64_t params_p2p = 0;
  std::uint64_t params_p2p_orphaned = 0;

  std::uint64_t bytes_tx_edge = 0;
  std::uint64_t bytes_tx_cloud = 0;
  std::uint64_t bytes_p2p = 0;
  std::uint64_t bytes_p2p_orphaned = 0;

  double t_train = 0.0;
  /// Sum of per-client CPU multiplier times training duration (the Σ P_i Δ_i
  /// of the training energy, divided by the nominal CPU power).
  double t_train_weighted = 0.0;
  double t_tx_edge = 0.0;
  double t_tx_cloud = 0.0;
  double t_bc = 0.0;

  double e_train = 0.0;
  double e_tx_edge = 0.0;
  double e_tx_cloud = 0.0;
  double e_bc = 0.0;
  double e_bc_orphaned = 0.0;

  std::uint64_t grad_step_count = 0;
  std::uint64_t scalar_op_count = 0;
  std::uint64_t client_updates = 0;
  std::uint64_t n_chain = 0;
  std::uint64_t n_fork_attempts = 0;
  std::uint64_t n_orphaned_blocks = 0;

  std::uint64_t params_transferred() const noexcept {
    return params_tx_edge + params_tx_cloud + params_p2p;
  }
  std::uint64_t bytes_transferred() const noexcept {
    return bytes_tx_edge + bytes_tx_cloud + bytes_p2p;
  }

  CostLedger& operator+=(const CostLedger& other) noexcept;
  friend bool operator==(const CostLedger&, const CostLedger&) = default;
};

CostLedger ledger_merge(const CostLedger& a, const CostLedger& b) noexcept;

}  // namespace fedsim
