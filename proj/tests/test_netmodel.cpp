#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fedsim/errors.hpp"
#include "fedsim/netmodel.hpp"

using namespace fedsim;
using std::chrono::microseconds;

namespace {

/// Independent oracle in integer nanoseconds.
std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

std::int64_t oracle_control(std::int64_t len, const PhyParams& p) {
  return p.t_phy.count() + ceil_div(static_cast<std::int64_t>(p.l_sf) + len,
                                    static_cast<std::int64_t>(p.bits_per_symbol_control)) *
                               p.sigma_leg.count();
}

std::int64_t oracle_data(std::int64_t bits, std::int64_t bps, const PhyParams& p) {
  return p.t_hesu.count() +
         ceil_div(static_cast<std::int64_t>(p.l_sf + p.l_mac) + bits, bps) * p.sigma_data.count();
}

}  // namespace

TEST(FrameTimes, ControlFramesFromDefaults) {
  const PhyParams phy;
  EXPECT_EQ(control_frame_time(phy.l_rts, phy), microseconds(52));
  EXPECT_EQ(control_frame_time(phy.l_cts, phy), microseconds(44));
  EXPECT_EQ(control_frame_time(phy.l_ack, phy), microseconds(64));
}

TEST(FrameTimes, ModelDataFrame) {
  const PhyParams phy;
  NodeClass server = default_server();
  ASSERT_EQ(server.mcs_bits_per_symbol, 1950u);
  const Nanos t = data_frame_time(6'374'720, phy, server);
  EXPECT_EQ(t, Nanos(100'000 + 3270 * 13'600));
  EXPECT_NEAR(to_seconds(t), 44.572e-3, 1e-9);
}

TEST(FrameTimes, SingleBitPayloadIsOneSymbol) {
  PhyParams phy;
  phy.l_sf = 0;
  phy.l_mac = 0;
  EXPECT_EQ(data_frame_time(1, phy, default_server()), phy.t_hesu + phy.sigma_data);
}

TEST(FrameTimes, FasterModulationNeverSlower) {
  const PhyParams phy;
  NodeClass slow = default_edge_device();
  for (std::uint64_t bits : {1ull, 1000ull, 6'374'720ull, 123'456'789ull}) {
    NodeClass fast = slow;
    fast.mcs_bits_per_symbol *= 2;
    EXPECT_LE(data_frame_time(bits, phy, fast), data_frame_time(bits, phy, slow));
  }
}

TEST(FrameTimes, ExchangeOverheadAndTotal) {
  const PhyParams phy;
  const NodeClass server = default_server();
  const Nanos total = packet_exchange_time(6'374'720, phy, server);
  EXPECT_EQ(total - data_frame_time(6'374'720, phy, server), microseconds(235));
  EXPECT_NEAR(to_seconds(total), 44.807e-3, 1e-9);
}

TEST(FrameTimes, ZeroOverheadLeavesDataFrame) {
  PhyParams phy;
  phy.t_phy = Nanos(0);
  phy.sigma_leg = Nanos(0);
  phy.t_sifs = Nanos(0);
  phy.t_difs = Nanos(0);
  phy.t_e = Nanos(0);
  const NodeClass edge = default_edge_device();
  EXPECT_EQ(packet_exchange_time(8000, phy, edge), data_frame_time(8000, phy, edge));
}

TEST(FrameTimes, MeanBackoffAddsHalfWindow) {
  PhyParams phy;
  const NodeClass edge = default_edge_device();
  const Nanos base = packet_exchange_time(8000, phy, edge);
  phy.mean_backoff = true;
  EXPECT_EQ(packet_exchange_time(8000, phy, edge) - base, Nanos(15 * 9'000 / 2));
}

TEST(FrameTimes, ZeroLengthRejected) {
  const PhyParams phy;
  EXPECT_THROW(control_frame_time(0, phy), ArgumentError);
  EXPECT_THROW(data_frame_time(0, phy, default_server()), ArgumentError);
}

TEST(FrameTimes, MatchIntegerOracleOnRandomParams) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::int64_t> us(1, 200);
  std::uniform_int_distribution<std::uint64_t> len(1, 2000);
  std::uniform_int_distribution<std::uint64_t> bps(1, 4000);
  std::uniform_int_distribution<std::uint64_t> payload(1, 50'000'000);
  for (int trial = 0; trial < 2000; ++trial) {
    PhyParams p;
    p.sigma_leg = Nanos(us(rng) * 100);
    p.sigma_data = Nanos(us(rng) * 100);
    p.t_phy = microseconds(us(rng));
    p.t_hesu = microseconds(us(rng));
    p.t_sifs = microseconds(us(rng));
    p.t_difs = microseconds(us(rng));
    p.t_e = microseconds(us(rng));
    p.bits_per_symbol_control = bps(rng);
    p.l_rts = len(rng);
    p.l_cts = len(rng);
    p.l_ack = len(rng);
    p.l_sf = len(rng);
    p.l_mac = len(rng);
    NodeClass node = default_edge_device();
    node.mcs_bits_per_symbol = bps(rng);
    const auto bits = static_cast<std::int64_t>(payload(rng));

    const auto rts = oracle_control(static_cast<std::int64_t>(p.l_rts), p);
    const auto cts = oracle_control(static_cast<std::int64_t>(p.l_cts), p);
    const auto ack = oracle_control(static_cast<std::int64_t>(p.l_ack), p);
    const auto data = oracle_data(bits, static_cast<std::int64_t>(node.mcs_bits_per_symbol), p);
    ASSERT_EQ(control_frame_time(p.l_rts, p).count(), rts);
    ASSERT_EQ(data_frame_time(static_cast<std::uint64_t>(bits), p, node).count(), data);
    const auto exchange = rts + p.t_sifs.count() + cts + data + p.t_sifs.count() + ack + p.t_difs.count() +
                          p.t_e.count();
    ASSERT_EQ(packet_exchange_time(static_cast<std::uint64_t>(bits), p, node).count(), exchange);
  }
}

TEST(FrameTimes, ExchangeStrictlyIncreasesAcrossSymbols) {
  const PhyParams phy;
  const NodeClass edge = default_edge_device();
  // Each extra symbol's worth of payload adds exactly one σ.
  Nanos prev = packet_exchange_time(1, phy, edge);
  for (std::uint64_t k = 1; k < 50; ++k) {
    const Nanos t = packet_exchange_time(1 + k * edge.mcs_bits_per_symbol, phy, edge);
    EXPECT_GT(t, prev);
    prev = t;
  }
}

TEST(Energy, DbmConversions) {
  EXPECT_NEAR(dbm_to_watts(9.0), 7.943e-3, 1e-6);
  EXPECT_DOUBLE_EQ(dbm_to_watts(20.0), 0.1);
  EXPECT_NEAR(tx_energy(1.0, default_edge_device()), 7.943e-3, 1e-6);
  EXPECT_NEAR(tx_energy(44.807e-3, default_server()), 4.481e-3, 1e-6);
  EXPECT_EQ(tx_energy(0.0, default_server()), 0.0);
}

TEST(Energy, EdgeVersusServerDifferOnlyInRateAndPower) {
  const PhyParams phy;
  NodeClass edge = default_edge_device();
  const NodeClass server = default_server();
  EXPECT_LE(edge.tx_power_watts(), server.tx_power_watts());
  edge.mcs_bits_per_symbol = server.mcs_bits_per_symbol;
  EXPECT_EQ(packet_exchange_time(6'374'720, phy, edge), packet_exchange_time(6'374'720, phy, server));
}

TEST(PhyParams, ValidateRejectsNonPositive) {
  PhyParams p;
  EXPECT_NO_THROW(p.validate());
  p.sigma_data = Nanos(0);
  EXPECT_THROW(p.validate(), ArgumentError);
  p = PhyParams{};
  p.l_ack = 0;
  EXPECT_THROW(p.validate(), ArgumentError);
}
