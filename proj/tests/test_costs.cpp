#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fedsim/costs.hpp"
#include "testutil.hpp"

using namespace fedsim;
using fedsim::testing::FuzzCase;
using fedsim::testing::random_case;
using fedsim::testing::run_case;

namespace {

constexpr ProtocolKind kAll[] = {ProtocolKind::cfl, ProtocolKind::bfl, ProtocolKind::bfl_aggregated, ProtocolKind::gfl,
                                 ProtocolKind::gfl_nm};

ScenarioParams small(std::uint64_t R, std::uint64_t m, std::uint64_t w) {
  ScenarioParams p;
  p.rounds = R;
  p.clients = m;
  p.w = w;
  p.d_max = 4;
  p.epochs = 1;
  p.batch_size = 2;
  return p;
}

ScenarioParams full_scale() {
  ScenarioParams p;
  p.rounds = 200;
  p.clients = 200;
  p.n_b = 200;
  p.w = 199210;
  p.d_max = 101;
  return p;
}

double two_decimals(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

TEST(CommOverhead, SmallCases) {
  EXPECT_EQ(comm_overhead(ProtocolKind::cfl, small(2, 3, 10)).params, 120);
  ScenarioParams agg = small(1, 3, 10);
  agg.n_b = 2;
  EXPECT_EQ(comm_overhead(ProtocolKind::bfl_aggregated, agg).params, 80);
  EXPECT_EQ(comm_overhead(ProtocolKind::gfl, small(2, 3, 10)).params, 60);
  ScenarioParams bc = small(2, 3, 10);
  bc.final_broadcast = true;
  EXPECT_EQ(comm_overhead(ProtocolKind::gfl_nm, bc).params, 90);
  EXPECT_EQ(comm_overhead(ProtocolKind::cfl, small(2, 3, 10)).bytes, 480);
}

TEST(CommOverhead, FullScaleGigabytes) {
  const ScenarioParams p = full_scale();
  EXPECT_DOUBLE_EQ(two_decimals(comm_overhead(ProtocolKind::cfl, p).gigabytes()), 63.75);
  EXPECT_DOUBLE_EQ(two_decimals(comm_overhead(ProtocolKind::gfl, p).gigabytes()), 31.87);
  EXPECT_DOUBLE_EQ(two_decimals(comm_overhead(ProtocolKind::gfl_nm, p).gigabytes()), 31.87);
  EXPECT_DOUBLE_EQ(two_decimals(comm_overhead(ProtocolKind::bfl, p).gigabytes()), 12781.31);
  EXPECT_DOUBLE_EQ(two_decimals(comm_overhead(ProtocolKind::bfl_aggregated, p).gigabytes()), 95.62);
}

TEST(CommOverhead, MatchesTransferEnumeration) {
  // Oracle: walk every transfer of every round and count parameters.
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    ScenarioParams p;
    p.rounds = 1 + rng() % 6;
    p.clients = 1 + rng() % 9;
    p.w = 1 + rng() % 50;
    p.n_b = 1 + rng() % 12;
    p.final_broadcast = rng() % 2;
    for (ProtocolKind kind : kAll) {
      std::uint64_t n = 0;
      for (std::uint64_t t = 0; t < p.rounds; ++t) {
        for (std::uint64_t k = 0; k < p.clients; ++k) {
          n += p.w;  // upload
          if (kind == ProtocolKind::cfl || kind == ProtocolKind::bfl_aggregated) n += p.w;
          if (kind == ProtocolKind::bfl) n += p.clients * p.w;  // block of m transactions
        }
        if (kind == ProtocolKind::bfl) n += p.n_b * p.clients * p.w;
        if (kind == ProtocolKind::bfl_aggregated) n += p.n_b * p.w;
      }
      if ((kind == ProtocolKind::gfl || kind == ProtocolKind::gfl_nm) && p.final_broadcast) n += p.clients * p.w;
      EXPECT_EQ(comm_overhead(kind, p).params, n) << to_string(kind);
    }
  }
}

TEST(Complexity, DominantTerms) {
  ScenarioParams p = small(2, 3, 10);
  p.d_max = 4;
  p.epochs = 1;
  // R·m·E·|D|·|w| = 2·3·1·4·10.
  EXPECT_EQ(complexity(ProtocolKind::cfl, p).dominant, 240);
  EXPECT_EQ(complexity(ProtocolKind::gfl, p).dominant, complexity(ProtocolKind::cfl, p).dominant);
  EXPECT_EQ(complexity(ProtocolKind::gfl_nm, p).dominant, complexity(ProtocolKind::cfl, p).dominant);

  ScenarioParams q = p;
  q.difficulty_bits = 10;
  for (ProtocolKind kind : {ProtocolKind::bfl, ProtocolKind::bfl_aggregated}) {
    EXPECT_EQ(complexity(kind, q).dominant - complexity(kind, p).dominant, 2 * (1024 - 1)) << to_string(kind);
    EXPECT_EQ(complexity(kind, q).full - complexity(kind, p).full, 2 * (1024 - 1)) << to_string(kind);
  }
}

TEST(Complexity, FullFormIsRoundsOfUpdatesPlusOverhead) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    ScenarioParams p;
    p.rounds = 1 + rng() % 5;
    p.clients = 1 + rng() % 7;
    p.w = 1 + rng() % 30;
    p.d_max = 1 + rng() % 40;
    p.epochs = 1 + rng() % 4;
    p.batch_size = 1 + rng() % 10;
    p.n_b = 1 + rng() % 9;
    p.difficulty_bits = rng() % 70;
    for (ProtocolKind kind : kAll) {
      const WideInt per_round = WideInt(p.clients) * update_ops(p.d_max, p) + round_overhead_ops(kind, p);
      EXPECT_EQ(complexity(kind, p).full, WideInt(p.rounds) * per_round) << to_string(kind);
      EXPECT_LE(complexity(kind, p).dominant, complexity(kind, p).full) << to_string(kind);
    }
  }
}

TEST(Complexity, LargeDifficultyDoesNotOverflow) {
  ScenarioParams p = small(1, 1, 1);
  const WideInt base = complexity(ProtocolKind::bfl, p).dominant;
  p.difficulty_bits = 256;
  EXPECT_EQ(complexity(ProtocolKind::bfl, p).dominant - base, (WideInt(1) << 256) - 1);
}

TEST(Energy, Units) {
  EXPECT_DOUBLE_EQ(joules_to_wh(10.0 * 3600.0), 10.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1e9);
  for (int i = 0; i < 1000; ++i) {
    const double j = u(rng);
    EXPECT_NEAR(wh_to_joules(joules_to_wh(j)), j, 1e-9 * j);
  }
}

TEST(Energy, TotalIsLinearInLedger) {
  ScenarioParams p = small(3, 2, 10);
  p.p_cpu = 2.0;
  p.p_h = 1350.0;
  p.block_interval = 15.0;
  CostLedger a;
  a.t_train_weighted = 10.0;
  a.e_tx_edge = 1.0;
  a.e_tx_cloud = 2.0;
  a.n_chain = 3;
  CostLedger b = a;
  b.t_train_weighted = 20.0;
  b.e_tx_edge = 2.0;
  b.e_tx_cloud = 4.0;
  b.n_chain = 6;
  for (ProtocolKind kind : {ProtocolKind::cfl, ProtocolKind::bfl, ProtocolKind::gfl}) {
    const EnergyBreakdown ea = energy_total(kind, a, p), eb = energy_total(kind, b, p);
    EXPECT_NEAR(eb.total, 2.0 * ea.total, 1e-9) << to_string(kind);
  }
  const EnergyBreakdown gfl = energy_total(ProtocolKind::gfl, a, p);
  EXPECT_EQ(gfl.e_tx_c, 0.0);
  EXPECT_EQ(gfl.e_bc, 0.0);
  EXPECT_DOUBLE_EQ(gfl.total, 21.0);
  const EnergyBreakdown bfl = energy_total(ProtocolKind::bfl, a, p);
  EXPECT_DOUBLE_EQ(bfl.e_bc, 1350.0 * 15.0 * 3);
  EXPECT_NEAR(bfl.computation_percent(), 100.0 * (20.0 + 60750.0) / bfl.total, 1e-12);
}

TEST(Energy, MiningOverFullScaleRounds) {
  ScenarioParams p = full_scale();
  CostLedger l;
  l.n_chain = 200;
  EXPECT_DOUBLE_EQ(energy_total(ProtocolKind::bfl, l, p).e_bc, wh_to_joules(1125.0));
}

TEST(ConvergenceTime, PerProtocolTerms) {
  EXPECT_DOUBLE_EQ(convergence_time(ProtocolKind::cfl, 1, 2, 4, 8), 7);
  EXPECT_DOUBLE_EQ(convergence_time(ProtocolKind::bfl, 1, 2, 4, 8), 15);
  EXPECT_DOUBLE_EQ(convergence_time(ProtocolKind::bfl_aggregated, 1, 2, 4, 8), 15);
  EXPECT_DOUBLE_EQ(convergence_time(ProtocolKind::gfl, 1, 2, 4, 8), 3);
  EXPECT_DOUBLE_EQ(convergence_time(ProtocolKind::gfl_nm, 1, 2, 4, 8), 3);
}

TEST(Estimate, FullScaleCflConvergence) {
  ScenarioParams p = full_scale();
  const LinkModel links;
  p.t_exchange_edge = to_seconds(packet_exchange_time(8 * p.model_bytes(), links.phy, links.edge));
  p.t_exchange_cloud = to_seconds(packet_exchange_time(8 * p.model_bytes(), links.phy, links.server));
  const CostEstimate e = estimate_costs(ProtocolKind::cfl, p, 341873.0 / 3383.0, 0.0);
  // 200 rounds of 200 clients on 101-sample shards take about 46458 s.
  EXPECT_NEAR(e.convergence_time, 46458.0, 465.0);
}


TEST(Reconcile, RandomSmallScenariosMatchClosedForms) {
  std::mt19937_64 rng(2024);
  for (ProtocolKind kind : kAll) {
    for (int trial = 0; trial < 200; ++trial) {
      const FuzzCase c = random_case(kind, rng);
      ReconcileReport report;
      run_case(c, report);
      if (!report.ok()) {
        const auto bad = report.mismatches();
        ADD_FAILURE() << to_string(kind) << " trial " << trial << ": " << bad.front().name << " closed "
                      << bad.front().closed_form << " simulated " << bad.front().simulated;
        return;
      }
    }
  }
}

TEST(Reconcile, FlagsTamperedLedger) {
  std::mt19937_64 rng(5);
  for (ProtocolKind kind : kAll) {
    const FuzzCase c = random_case(kind, rng);
    ReconcileReport report;
    RunResult r = run_case(c, report);
    ASSERT_TRUE(report.ok()) << to_string(kind);

    const ScenarioParams p = scenario_for(c.cfg, kind, param_count(c.layers), *std::max_element(c.sizes.begin(), c.sizes.end()));
    CostLedger tampered = r.ledger;
    tampered.bytes_tx_edge += 1;
    const auto bad = reconcile(tampered, p, kind, r.update_sizes).mismatches();
    ASSERT_EQ(bad.size(), 1u);
    EXPECT_EQ(bad[0].name, "bytes_tx_edge");
    EXPECT_EQ(bad[0].delta, 1.0);

    tampered = r.ledger;
    tampered.e_train *= 1.001;
    EXPECT_FALSE(reconcile(tampered, p, kind, r.update_sizes).ok());
  }
}

TEST(Reconcile, BoundsWithoutUpdateSizes) {
  std::mt19937_64 rng(6);
  const FuzzCase c = random_case(ProtocolKind::cfl, rng);
  ReconcileReport report;
  const RunResult r = run_case(c, report);
  const ScenarioParams p = scenario_for(c.cfg, ProtocolKind::cfl, param_count(c.layers),
                                        *std::max_element(c.sizes.begin(), c.sizes.end()));
  const ReconcileReport bounded = reconcile(r.ledger, p, ProtocolKind::cfl);
  EXPECT_TRUE(bounded.ok());
  const bool has_bound = std::any_of(bounded.items.begin(), bounded.items.end(), [](const ReconcileItem& i) {
    return i.name == "grad_step_count" && i.check == ReconcileItem::Check::upper_bound;
  });
  EXPECT_TRUE(has_bound);
}
