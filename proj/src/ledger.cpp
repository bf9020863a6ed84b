#include "fedsim/ledger.hpp"

namespace fedsim {

CostLedger& CostLedger::operator+=(const CostLedger& o) noexcept {
  params_tx_edge += o.params_tx_edge;
  params_tx_cloud += o.params_tx_cloud;
  params_p2p += o.params_p2p;
  params_p2p_orphaned += o.params_p2p_orphaned;
  bytes_tx_edge += o.bytes_tx_edge;
  bytes_tx_cloud += o.bytes_tx_cloud;
  bytes_p2p += o.bytes_p2p;
  bytes_p2p_orphaned += o.bytes_p2p_orphaned;
  t_train += o.t_train;
  t_train_weighted += o.t_train_weighted;
  t_tx_edge += o.t_tx_edge;
  t_tx_cloud += o.t_tx_cloud;
  t_bc += o.t_bc;
  e_train += o.e_train;
  e_tx_edge += o.e_tx_edge;
  e_tx_cloud += o.e_tx_cloud;
  e_bc += o.e_bc;
  e_bc_orphaned += o.e_bc_orphaned;
  grad_step_count += o.grad_step_count;
  scalar_op_count += o.scalar_op_count;
  client_updates += o.client_updates;
  n_chain += o.n_chain;
  n_fork_attempts += o.n_fork_attempts;
  n_orphaned_blocks += o.n_orphaned_blocks;
  return *this;
}

CostLedger ledger_merge(const CostLedger& a, const CostLedger& b) noexcept {
  CostLedger out = a;
  out += b;
  return out;
}

}  // namespace fedsim
