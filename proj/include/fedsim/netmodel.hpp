#pragma once

#include <chrono>
#include <cstdint>

namespace fedsim {

using Nanos = std::chrono::nanoseconds;

inline double to_seconds(Nanos d) { return std::chrono::duration<double>(d).count(); }

/// 802.11ax PHY/MAC constants. Defaults are the 20 MHz, single-stream
/// setting: 4 µs legacy symbols for control frames and 13.6 µs HE symbols
/// (0.8 µs guard interval) for data.
struct PhyParams {
  Nanos sigma_leg{4'000};
  Nanos sigma_data{13'600};
  Nanos t_e{9'000};
  Nanos t_sifs{16'000};
  Nanos t_difs{34'000};
  Nanos t_phy{20'000};
  Nanos t_hesu{100'000};
  std::uint64_t bits_per_symbol_control = 24;
  std::uint64_t l_rts = 160;
  std::uint64_t l_cts = 112;
  std::uint64_t l_ack = 240;
  std::uint64_t l_sf = 16;
  std::uint64_t l_mac = 320;
  std::uint32_t cw = 15;
  std::uint32_t n_sc = 234;
  std::uint32_t n_ss = 1;
  /// Adds a mean backoff of (CW/2)·T_e to every exchange.
  bool mean_backoff = false;

  /// Throws ArgumentError unless every duration and length is positive.
  void validate() const;
};

enum class NodeKind { edge_device, server_or_miner };

struct NodeClass {
  NodeKind kind = NodeKind::edge_device;
  double tx_power_dbm = 9.0;
  std::uint64_t mcs_bits_per_symbol = 1170;

  double tx_power_watts() const;
};

/// 9 dBm, 256-QAM 3/4 on 234 subcarriers.
NodeClass default_edge_device();
/// 20 dBm, 1024-QAM 5/6 on 234 subcarriers.
NodeClass default_server();

double dbm_to_watts(double dbm);

/// T_PHY + ceil((L_SF + len) / L_s) · σ_leg.
Nanos control_frame_time(std::uint64_t len_bits, const PhyParams& phy);

/// T_HE-SU + ceil((L_SF + L_MAC + payload) / bits_per_symbol) · σ.
Nanos data_frame_time(std::uint64_t payload_bits, const PhyParams& phy, const NodeClass& node);

/// One RTS/CTS/DATA/ACK exchange including SIFS, DIFS and one empty slot.
Nanos packet_exchange_time(std::uint64_t payload_bits, const PhyParams& phy, const NodeClass& node);

/// Radiated energy of a transmission lasting `seconds`.
double tx_energy(double seconds, const NodeClass& node);

}  // namespace fedsim
