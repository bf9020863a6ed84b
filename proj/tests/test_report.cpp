#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fedsim/errors.hpp"
#include "fedsim/report.hpp"
#include "testutil.hpp"

using namespace fedsim;
namespace fs = std::filesystem;

namespace {

const char* kTinySweep = R"(
protocols: [cfl]
seed: 4
dataset: {clients: 8, samples_per_client: 12, test_samples_per_client: 4, classes: 3, feature_dim: 4}
model: {hidden: [5]}
federated: {clients_per_round: 3, batch_size: 4, validation_clients: 8}
sweep: {rounds: [2, 4], epochs: [1, 2]}
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Csv, RoundTripsAwkwardFields) {
  CsvTable t;
  t.header = {"run", "note"};
  t.rows = {{"a,b", "say \"hi\""}, {"multi\nline", ""}, {"plain", "1.5"}};
  EXPECT_EQ(parse_csv(to_csv(t)), t);
}

TEST(Csv, RejectsUnterminatedQuote) { EXPECT_THROW(parse_csv("a,\"b\n"), Error); }

TEST(Sweep, ExpandsToOneRunPerCell) {
  const ExperimentConfig cfg = parse_config(kTinySweep);
  const auto cells = expand_cells(cfg);
  ASSERT_EQ(cells.size(), 4u);
  std::set<std::string> names;
  for (const Cell& c : cells) names.insert(c.name);
  EXPECT_EQ(names.size(), 4u);

  const auto records = run_experiment(cfg);
  ASSERT_EQ(records.size(), 4u);
  for (const RunRecord& r : records) {
    ASSERT_TRUE(r.ok()) << r.error;
    EXPECT_EQ(r.result->trajectory.size(), r.cell.config.protocol.rounds);
    EXPECT_TRUE(r.reconcile->ok());
  }

  const CsvTable cmp = comparison_table(records);
  EXPECT_EQ(cmp.header, kComparisonColumns);
  EXPECT_EQ(cmp.rows.size(), 4u);
  const CsvTable acc = accuracy_table(records);
  EXPECT_EQ(acc.rows.size(), 2u + 2u + 4u + 4u);
  EXPECT_TRUE(chain_table(records).rows.empty());
}

TEST(Sweep, ForkStudyHasNineCells) {
  const ExperimentConfig cfg = load_config(fs::path(FEDSIM_SOURCE_DIR) / "configs" / "fork_study.yaml");
  const auto cells = expand_cells(cfg);
  ASSERT_EQ(cells.size(), 9u);
  for (const Cell& c : cells) EXPECT_TRUE(c.chain_study);
  EXPECT_EQ(cells.front().config.chain->n_miners, 1u);
  EXPECT_DOUBLE_EQ(cells.back().config.chain->block_interval, 600.0);
}

TEST(Reports, RerunIsByteIdenticalAndParallelAgrees) {
  const ExperimentConfig cfg = parse_config(kTinySweep);
  const auto a = run_experiment(cfg);
  RunOptions opts;
  opts.jobs = 3;
  const auto b = run_experiment(cfg, opts);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(run_report(a[i]).dump(), run_report(b[i]).dump());
  EXPECT_EQ(to_csv(comparison_table(a)), to_csv(comparison_table(b)));
}

TEST(Reports, EmbeddedConfigRegeneratesTheRun) {
  const ExperimentConfig cfg = parse_config(kTinySweep);
  const auto records = run_experiment(cfg);
  const nlohmann::json report = run_report(records[3]);
  const ExperimentConfig again = parse_config(report.at("config").dump());
  const auto rerun = run_experiment(again);
  ASSERT_EQ(rerun.size(), 1u);
  nlohmann::json regenerated = run_report(rerun[0]);
  // The regenerated cell carries its own name; everything else must match.
  regenerated["run"] = report["run"];
  EXPECT_EQ(regenerated.dump(), report.dump());
}

TEST(Reports, FailedRunIsRecordedNotThrown) {
  ExperimentConfig cfg = parse_config("protocols: [cfl]\ndataset: {clients: 4, samples_per_client: 5}\n"
                                      "federated: {rounds: 1, clients_per_round: 4, validation_clients: 4}\n");
  cfg.train.eta = 1e300;  // diverges in the first round
  const auto records = run_experiment(cfg);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].failure, FailureKind::run);
  const nlohmann::json j = run_report(records[0]);
  EXPECT_EQ(j.at("status"), "run_error");
  EXPECT_FALSE(j.at("error").get<std::string>().empty());
}

TEST(Reports, EmitWritesTablesAndRunFiles) {
  const fs::path dir = fedsim::testing::temp_dir();
  const ExperimentConfig cfg = parse_config(kTinySweep);
  const auto records = run_experiment(cfg);
  emit_reports(records, dir);
  for (const char* f : {"comparison.csv", "accuracy.csv"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  // No run used a chain.
  EXPECT_FALSE(fs::exists(dir / "chain.csv"));
  for (const RunRecord& r : records) EXPECT_TRUE(fs::exists(dir / "runs" / (r.cell.name + ".json")));
  EXPECT_EQ(parse_csv(slurp(dir / "comparison.csv")), comparison_table(records));
}

TEST(WriteAtomic, OverwritesWithoutLeftovers) {
  const fs::path dir = fedsim::testing::temp_dir();
  write_atomic(dir / "x.txt", "first");
  write_atomic(dir / "x.txt", "second");
  EXPECT_EQ(slurp(dir / "x.txt"), "second");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
  EXPECT_EQ(files, 1u);
  EXPECT_THROW(write_atomic(dir / "x.txt" / "under_a_file", "x"), Error);
}
