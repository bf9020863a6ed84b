#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "fedsim/costs.hpp"
#include "fedsim/data.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/types.hpp"

namespace fedsim::testing {

/// Shards of the given sizes with arbitrary features; enough for runs with
/// the cost-only trainer.
FederatedDataset sized_dataset(const std::vector<std::size_t>& sizes, std::size_t feature_dim = 2);

/// Random ClientShard with labels in [0, classes).
ClientShard random_shard(std::size_t n, std::size_t dim, std::size_t classes, Rng& rng);

/// Big-endian IDX file writers.
void write_idx_images(const std::string& path, std::size_t count, std::size_t rows, std::size_t cols,
                      const std::vector<unsigned char>& pixels, std::uint32_t magic = 0x00000803);
void write_idx_labels(const std::string& path, const std::vector<unsigned char>& labels,
                      std::uint32_t magic = 0x00000801);

/// Scratch directory unique to the running test.
std::string temp_dir();

/// Small random scenario for counter reconciliation: at most 20 model
/// parameters, shards of 1 to 30 samples, random chain and energy settings.
struct FuzzCase {
  ExperimentConfig cfg;
  std::vector<std::size_t> sizes;
  std::vector<LayerSpec> layers;
};

FuzzCase random_case(ProtocolKind kind, std::mt19937_64& rng);

/// Runs the case with the cost-only trainer and reconciles its ledger.
RunResult run_case(const FuzzCase& c, ReconcileReport& report);

}  // namespace fedsim::testing
