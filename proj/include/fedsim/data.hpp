#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "fedsim/rng.hpp"
#include "fedsim/types.hpp"

namespace fedsim {

/// Unpartitioned labeled samples, row-major features.
struct SamplePool {
  std::size_t feature_dim = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t num_classes() const noexcept;
};

struct FederatedDataset {
  std::vector<ClientShard> train_shards;
  std::vector<ClientShard> test_shards;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  /// Per-client class subsets when the dataset was label-restricted.
  std::vector<std::vector<int>> client_classes;

  std::size_t num_clients() const noexcept { return train_shards.size(); }
  std::size_t train_samples() const noexcept;
  std::size_t test_samples() const noexcept;
  std::size_t max_shard_size() const noexcept;
};

struct SynthOptions {
  std::size_t n_clients = 50;
  std::size_t samples_per_client = 60;
  std::size_t test_samples_per_client = 20;
  std::size_t num_classes = 10;
  std::size_t feature_dim = 20;
  /// Distance between every pair of class means; clusters have unit variance.
  double separation = 5.0;
};

/// Gaussian class clusters, labels balanced within every client.
FederatedDataset synth_dataset(const SynthOptions& opts, Rng& rng);

/// Reads an IDX image/label pair (MNIST container). Pixels scaled to [0, 1].
struct IdxImagesHeader {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Reads only the 16-byte header of an IDX image file.
IdxImagesHeader read_idx_header(const std::filesystem::path& images_path);

/// Reads an IDX label file.
std::vector<int> load_idx_labels(const std::filesystem::path& labels_path);

SamplePool load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

enum class PartitionKind { iid, class_restricted };

struct PartitionMode {
  PartitionKind kind = PartitionKind::iid;
  std::size_t classes_per_client = 3;

  static PartitionMode iid() { return {PartitionKind::iid, 0}; }
  static PartitionMode class_restricted(std::size_t k) { return {PartitionKind::class_restricted, k}; }
};

/// Splits a pool across clients. iid shuffles and deals contiguous, nearly
/// equal shards; class_restricted(k) then keeps only samples whose label lies
/// in a random k-subset of classes drawn per client.
std::vector<ClientShard> partition(const SamplePool& pool, std::size_t n_clients, PartitionMode mode, Rng& rng);

/// Restricts every client of an existing dataset to k random classes,
/// filtering train and test shards with the same subset. The subset always
/// overlaps the client's training labels, so no client is left without data.
void restrict_classes(FederatedDataset& dataset, std::size_t k, Rng& rng);

/// Builds a dataset from separate train and test pools sharing one client list.
FederatedDataset federate(const SamplePool& train, const SamplePool& test, std::size_t n_clients,
                          PartitionMode mode, Rng& rng);

/// Uniform sample of n shards without replacement.
std::vector<ClientShard> validation_subset(std::span<const ClientShard> test_shards, std::size_t n, Rng& rng);

}  // namespace fedsim
