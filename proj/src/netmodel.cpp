#include "fedsim/netmodel.hpp"

#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim {
namespace {

std::uint64_t ceil_div(std::uint64_t num, std::uint64_t den) { return (num + den - 1) / den; }

}  // namespace

void PhyParams::validate() const {
  for (Nanos d : {sigma_leg, sigma_data, t_e, t_sifs, t_difs, t_phy, t_hesu}) {
    if (d.count() <= 0) throw ArgumentError("PHY durations must be positive");
  }
  for (std::uint64_t l : {bits_per_symbol_control, l_rts, l_cts, l_ack, l_sf, l_mac}) {
    if (l == 0) throw ArgumentError("PHY lengths must be positive");
  }
}

double NodeClass::tx_power_watts() const { return dbm_to_watts(tx_power_dbm); }

NodeClass default_edge_device() { return {NodeKind::edge_device, 9.0, 1170}; }
NodeClass default_server() { return {NodeKind::server_or_miner, 20.0, 1950}; }

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

Nanos control_frame_time(std::uint64_t len_bits, const PhyParams& phy) {
  if (len_bits == 0) throw ArgumentError("control frame length must be positive");
  if (phy.bits_per_symbol_control == 0) throw ArgumentError("symbol size must be positive");
  const auto symbols = static_cast<Nanos::rep>(ceil_div(phy.l_sf + len_bits, phy.bits_per_symbol_control));
  return phy.t_phy + symbols * phy.sigma_leg;
}

Nanos data_frame_time(std::uint64_t payload_bits, const PhyParams& phy, const NodeClass& node) {
  if (payload_bits == 0) throw ArgumentError("payload must be positive");
  if (node.mcs_bits_per_symbol == 0) throw ArgumentError("bits per symbol must be positive");
  const auto symbols =
      static_cast<Nanos::rep>(ceil_div(phy.l_sf + phy.l_mac + payload_bits, node.mcs_bits_per_symbol));
  return phy.t_hesu + symbols * phy.sigma_data;
}

Nanos packet_exchange_time(std::uint64_t payload_bits, const PhyParams& phy, const NodeClass& node) {
  Nanos total = control_frame_time(phy.l_rts, phy) + phy.t_sifs + control_frame_time(phy.l_cts, phy) +
                data_frame_time(payload_bits, phy, node) + phy.t_sifs + control_frame_time(phy.l_ack, phy) +
                phy.t_difs + phy.t_e;
  if (phy.mean_backoff) total += phy.cw * phy.t_e / 2;
  return total;
}

double tx_energy(double seconds, const NodeClass& node) {
  if (seconds < 0.0) throw ArgumentError("duration must be >= 0");
  return seconds * node.tx_power_watts();
}

}  // namespace fedsim
