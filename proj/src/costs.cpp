#include "fedsim/costs.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {
namespace {

WideInt W(std::uint64_t v) { return WideInt(v); }

WideInt pow2(std::uint64_t l) { return WideInt(1) << static_cast<unsigned>(l); }

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

bool is_bfl(ProtocolKind k) { return uses_blockchain(k); }
bool is_gossip(ProtocolKind k) { return k == ProtocolKind::gfl || k == ProtocolKind::gfl_nm; }

std::string str(const WideInt& v) { return v.str(); }

std::string str(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

struct ParamsByClass {
  WideInt edge, cloud, p2p;
};

ParamsByClass params_by_class(ProtocolKind kind, const ScenarioParams& p) {
  const WideInt R = W(p.rounds), m = W(p.clients), w = W(p.w), nb = W(p.n_b);
  switch (kind) {
    case ProtocolKind::cfl:
      return {R * m * w, R * m * w, 0};
    case ProtocolKind::gfl:
    case ProtocolKind::gfl_nm:
      return {R * m * w + (p.final_broadcast ? m * w : WideInt(0)), 0, 0};
    case ProtocolKind::bfl:
      return {R * m * w, R * m * m * w, R * m * w * nb};
    case ProtocolKind::bfl_aggregated:
      return {R * m * w, R * m * w, R * w * nb};
  }
  return {};
}

class ReportBuilder {
 public:
  explicit ReportBuilder(ReconcileReport& r) : r_(r) {}

  void exact(std::string name, const WideInt& closed, const WideInt& sim) {
    ReconcileItem it;
    it.name = std::move(name);
    it.closed_form = str(closed);
    it.simulated = str(sim);
    it.delta = static_cast<double>(sim - closed);
    it.check = ReconcileItem::Check::exact;
    it.ok = sim == closed;
    r_.items.push_back(std::move(it));
  }

  void bound(std::string name, const WideInt& closed, const WideInt& sim) {
    ReconcileItem it;
    it.name = std::move(name);
    it.closed_form = str(closed);
    it.simulated = str(sim);
    it.delta = static_cast<double>(sim - closed);
    it.check = ReconcileItem::Check::upper_bound;
    it.ok = sim <= closed;
    r_.items.push_back(std::move(it));
  }

  void relative(std::string name, double closed, double sim, double tol) {
    ReconcileItem it;
    it.name = std::move(name);
    it.closed_form = str(closed);
    it.simulated = str(sim);
    it.delta = sim - closed;
    it.check = ReconcileItem::Check::relative;
    it.tolerance = tol;
    it.ok = std::isfinite(sim) && std::abs(sim - closed) <= tol * std::abs(closed) + 1e-12;
    r_.items.push_back(std::move(it));
  }

 private:
  ReconcileReport& r_;
};

}  // namespace

void ScenarioParams::validate() const {
  auto positive = [](std::uint64_t v, const char* name) {
    if (v == 0) throw ArgumentError(std::string(name) + " must be positive");
  };
  positive(rounds, "rounds");
  positive(clients, "clients");
  positive(epochs, "epochs");
  positive(batch_size, "batch_size");
  positive(w, "model size");
  if (difficulty_bits > 4096) throw ArgumentError("difficulty exponent is unreasonably large");
  for (double v : {p_cpu, p_h, block_interval, tau, p_tx_edge, p_tx_cloud, t_exchange_edge, t_exchange_cloud}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("power and time parameters must be finite and >= 0");
  }
}

WideInt update_ops(std::uint64_t n, const ScenarioParams& p) {
  return W(p.epochs) * (W(n) * W(p.w) + 2 * W(ceil_div(n, p.batch_size)) * W(p.w));
}

WideInt round_overhead_ops(ProtocolKind kind, const ScenarioParams& p) {
  const WideInt m = W(p.clients), w = W(p.w), nb = W(p.n_b);
  switch (kind) {
    case ProtocolKind::cfl:
      return 4 * m * w;
    case ProtocolKind::gfl:
      return 3 * m * w;
    case ProtocolKind::gfl_nm:
      return m * w;
    case ProtocolKind::bfl:
      return 3 * w * m * m + w * m + pow2(p.difficulty_bits) + m * w * nb;
    case ProtocolKind::bfl_aggregated:
      return 4 * m * w + pow2(p.difficulty_bits) + nb * w;
  }
  return 0;
}

Complexity complexity(ProtocolKind kind, const ScenarioParams& p) {
  p.validate();
  const WideInt R = W(p.rounds), m = W(p.clients), E = W(p.epochs), D = W(p.d_max), w = W(p.w), nb = W(p.n_b);
  const WideInt c = W(ceil_div(p.d_max, p.batch_size));
  const WideInt pw = pow2(p.difficulty_bits);
  const WideInt broadcast = (is_gossip(kind) && p.final_broadcast) ? m * w : WideInt(0);
  switch (kind) {
    case ProtocolKind::cfl:
      return {R * m * E * D * w, R * (m * E * (D * w + 2 * c * w) + 4 * m * w)};
    case ProtocolKind::gfl:
      return {R * m * E * D * w, R * m * (E * (D * w + 2 * c * w) + 3 * w) + broadcast};
    case ProtocolKind::gfl_nm:
      return {R * m * E * D * w, R * m * (E * (D * w + 2 * c * w) + w) + broadcast};
    case ProtocolKind::bfl:
      return {R * (w * m * m + E * D * w * m + pw + m * w * nb),
              R * (3 * w * m * m + E * D * w * m + 2 * E * c * w * m + w * m + pw + m * w * nb)};
    case ProtocolKind::bfl_aggregated:
      return {R * (m * E * D * w + pw + nb * w),
              R * (m * E * (D * w + 2 * c * w) + 4 * m * w + pw + nb * w)};
  }
  return {};
}

double CommOverhead::gigabytes() const { return static_cast<double>(bytes) / 1e9; }

CommOverhead comm_overhead(ProtocolKind kind, const ScenarioParams& p) {
  p.validate();
  const WideInt R = W(p.rounds), m = W(p.clients), w = W(p.w), nb = W(p.n_b);
  WideInt params;
  switch (kind) {
    case ProtocolKind::cfl:
      params = 2 * R * m * w;
      break;
    case ProtocolKind::gfl:
    case ProtocolKind::gfl_nm:
      params = R * m * w + (p.final_broadcast ? m * w : WideInt(0));
      break;
    case ProtocolKind::bfl:
      params = R * (w * m * m + w * m + m * w * nb);
      break;
    case ProtocolKind::bfl_aggregated:
      params = R * (2 * w * m + nb * w);
      break;
  }
  return {params, params * kParamBytes};
}

double convergence_time(ProtocolKind kind, double t_train, double t_tx_e, double t_tx_c, double t_bc) {
  switch (kind) {
    case ProtocolKind::cfl:
      return t_train + t_tx_e + t_tx_c;
    case ProtocolKind::bfl:
    case ProtocolKind::bfl_aggregated:
      return t_bc + t_train + t_tx_e + t_tx_c;
    case ProtocolKind::gfl:
    case ProtocolKind::gfl_nm:
      return t_train + t_tx_e;
  }
  return 0.0;
}

double convergence_time(ProtocolKind kind, const CostLedger& l) {
  return convergence_time(kind, l.t_train, l.t_tx_edge, l.t_tx_cloud, l.t_bc);
}

EnergyBreakdown energy_total(ProtocolKind kind, const CostLedger& ledger, const ScenarioParams& p) {
  EnergyBreakdown b;
  b.e_train = p.p_cpu * ledger.t_train_weighted;
  b.e_tx_e = ledger.e_tx_edge;
  if (!is_gossip(kind)) b.e_tx_c = ledger.e_tx_cloud;
  if (is_bfl(kind)) b.e_bc = p.p_h * p.block_interval * static_cast<double>(ledger.n_chain);
  b.total = b.e_train + b.e_tx_e + b.e_tx_c + b.e_bc;
  return b;
}

ByteForecast byte_forecast(ProtocolKind kind, const ScenarioParams& p) {
  const WideInt R = W(p.rounds), m = W(p.clients), nb = W(p.n_b);
  const WideInt sw = W(p.model_bytes());
  const WideInt s_tr = sw + W(p.tx_metadata_bytes);
  const WideInt header = W(p.header_bytes);
  switch (kind) {
    case ProtocolKind::cfl:
      return {R * m * sw, R * m * sw, 0};
    case ProtocolKind::gfl:
    case ProtocolKind::gfl_nm:
      return {R * m * sw + (p.final_broadcast ? m * sw : WideInt(0)), 0, 0};
    case ProtocolKind::bfl: {
      const WideInt block = header + m * s_tr;
      return {R * m * s_tr, R * m * block, R * block * (nb > 0 ? nb - 1 : WideInt(0))};
    }
    case ProtocolKind::bfl_aggregated: {
      const WideInt block = header + sw;
      return {R * m * s_tr, R * m * block, R * block * (nb > 0 ? nb - 1 : WideInt(0))};
    }
  }
  return {};
}

bool ReconcileReport::ok() const noexcept {
  return std::all_of(items.begin(), items.end(), [](const ReconcileItem& i) { return i.ok; });
}

std::vector<ReconcileItem> ReconcileReport::mismatches() const {
  std::vector<ReconcileItem> out;
  std::copy_if(items.begin(), items.end(), std::back_inserter(out), [](const ReconcileItem& i) { return !i.ok; });
  return out;
}

ReconcileReport reconcile(const CostLedger& ledger, const ScenarioParams& p, ProtocolKind kind,
                          std::span<const std::size_t> update_sizes) {
  ReconcileReport report;
  report.kind = kind;
  ReportBuilder add(report);
  constexpr double kTol = 1e-9;

  const CommOverhead comm = comm_overhead(kind, p);
  const ParamsByClass by_class = params_by_class(kind, p);
  add.exact("params_transferred", comm.params, W(ledger.params_transferred()));
  add.exact("params_tx_edge", by_class.edge, W(ledger.params_tx_edge));
  add.exact("params_tx_cloud", by_class.cloud, W(ledger.params_tx_cloud));
  add.exact("params_p2p", by_class.p2p, W(ledger.params_p2p));

  const ByteForecast bytes = byte_forecast(kind, p);
  add.exact("bytes_tx_edge", bytes.edge, W(ledger.bytes_tx_edge));
  add.exact("bytes_tx_cloud", bytes.cloud, W(ledger.bytes_tx_cloud));
  add.exact("bytes_p2p", bytes.p2p, W(ledger.bytes_p2p));

  add.exact("client_updates", W(p.rounds) * W(p.clients), W(ledger.client_updates));
  if (is_bfl(kind)) add.exact("n_chain", W(p.rounds), W(ledger.n_chain));

  const Complexity cx = complexity(kind, p);
  const WideInt broadcast_ops = (is_gossip(kind) && p.final_broadcast) ? W(p.clients) * W(p.w) : WideInt(0);
  if (!update_sizes.empty()) {
    WideInt steps = 0, ops = 0;
    double samples = 0.0;
    for (std::size_t n : update_sizes) {
      steps += W(p.epochs) * W(ceil_div(n, p.batch_size));
      ops += update_ops(n, p);
      samples += static_cast<double>(n);
    }
    ops += W(p.rounds) * round_overhead_ops(kind, p) + broadcast_ops;
    add.exact("grad_step_count", steps, W(ledger.grad_step_count));
    add.exact("scalar_op_count", ops, W(ledger.scalar_op_count));
    add.relative("t_train", p.tau * static_cast<double>(p.epochs) * samples, ledger.t_train, kTol);
  } else {
    add.bound("grad_step_count", W(p.rounds) * W(p.clients) * W(p.epochs) * W(ceil_div(p.d_max, p.batch_size)),
              W(ledger.grad_step_count));
  }
  add.bound("scalar_op_count_full_form", cx.full, W(ledger.scalar_op_count));

  const double edge_exchanges =
      static_cast<double>(p.rounds * p.clients + (is_gossip(kind) && p.final_broadcast ? p.clients : 0));
  const double cloud_exchanges = is_gossip(kind) ? 0.0 : static_cast<double>(p.rounds * p.clients);
  if (p.t_exchange_edge > 0.0) add.relative("t_tx_edge", edge_exchanges * p.t_exchange_edge, ledger.t_tx_edge, kTol);
  if (p.t_exchange_cloud > 0.0 || cloud_exchanges == 0.0) {
    add.relative("t_tx_cloud", cloud_exchanges * p.t_exchange_cloud, ledger.t_tx_cloud, kTol);
  }
  if (p.p_tx_edge > 0.0) add.relative("e_tx_edge", p.p_tx_edge * ledger.t_tx_edge, ledger.e_tx_edge, kTol);
  if (p.p_tx_cloud > 0.0) add.relative("e_tx_cloud", p.p_tx_cloud * ledger.t_tx_cloud, ledger.e_tx_cloud, kTol);
  add.relative("e_train", p.p_cpu * ledger.t_train_weighted, ledger.e_train, kTol);
  const double expected_bc = is_bfl(kind) ? p.p_h * p.block_interval * static_cast<double>(p.rounds) : 0.0;
  add.relative("e_bc", expected_bc, ledger.e_bc, kTol);
  return report;
}

CostEstimate estimate_costs(ProtocolKind kind, const ScenarioParams& p, double mean_shard_size,
                            double hop_seconds) {
  p.validate();
  CostEstimate e;
  const double R = static_cast<double>(p.rounds), m = static_cast<double>(p.clients);
  e.t_train = p.tau * static_cast<double>(p.epochs) * mean_shard_size * R * m;
  const double edge_exchanges = R * m + (is_gossip(kind) && p.final_broadcast ? m : 0.0);
  e.t_tx_e = edge_exchanges * p.t_exchange_edge;
  e.t_tx_c = is_gossip(kind) ? 0.0 : R * m * p.t_exchange_cloud;
  e.t_bc = is_bfl(kind) ? R * (p.block_interval + hop_seconds) : 0.0;
  e.convergence_time = convergence_time(kind, e.t_train, e.t_tx_e, e.t_tx_c, e.t_bc);
  e.energy.e_train = p.p_cpu * e.t_train;
  e.energy.e_tx_e = p.p_tx_edge * e.t_tx_e;
  e.energy.e_tx_c = p.p_tx_cloud * e.t_tx_c;
  e.energy.e_bc = is_bfl(kind) ? p.p_h * p.block_interval * R : 0.0;
  e.energy.total = e.energy.e_train + e.energy.e_tx_e + e.energy.e_tx_c + e.energy.e_bc;
  return e;
}

}  // namespace fedsim
