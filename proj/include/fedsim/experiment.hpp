#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/costs.hpp"

namespace fedsim {

/// One point of the sweep: a config with a single protocol and every sweep
/// axis fixed.
struct Cell {
  std::size_t index = 0;
  std::string name;
  ProtocolKind kind = ProtocolKind::cfl;
  bool chain_study = false;
  ExperimentConfig config;
};

std::vector<Cell> expand_cells(const ExperimentConfig& cfg);

FederatedDataset build_dataset(const ExperimentConfig& cfg, RngStreams& streams);

/// Layer list of the configured model for the given input and class count.
std::vector<LayerSpec> model_layers(const ModelConfig& model, std::size_t input_dim, std::size_t classes);

/// Input tensor of a CNN: square single-channel images.
std::optional<TensorShape> model_input_shape(const ModelConfig& model, std::size_t input_dim);

std::unique_ptr<LocalTrainer> build_trainer(const ExperimentConfig& cfg, std::size_t input_dim, std::size_t classes,
                                            bool counting_only);

/// Input size and class count of the configured dataset, read without
/// loading or generating samples.
std::pair<std::size_t, std::size_t> dataset_shape(const DatasetConfig& d);

/// Largest shard an iid split of the configured dataset gives a client.
std::size_t nominal_max_shard(const DatasetConfig& d);

/// Closed-form inputs matching a configured run of `kind`.
ScenarioParams scenario_for(const ExperimentConfig& cfg, ProtocolKind kind, std::uint64_t w, std::uint64_t d_max);

enum class FailureKind { none, config, run };

struct RunRecord {
  Cell cell;
  std::optional<RunResult> result;
  std::optional<ChainSummary> chain_study;
  ScenarioParams scenario;
  EnergyBreakdown energy;
  double convergence_time = 0.0;
  std::optional<ReconcileReport> reconcile;
  FailureKind failure = FailureKind::none;
  std::string error;

  bool ok() const noexcept { return failure == FailureKind::none; }
};

/// Runs one cell; failures are captured in the record, not thrown.
RunRecord run_cell(const Cell& cell, bool counting_only = false);

struct RunOptions {
  std::size_t jobs = 1;
  /// Use the cost-only trainer for every cell.
  bool counting_only = false;
  /// Called once per finished cell, serialized.
  std::function<void(const RunRecord&)> on_record;
};

/// Runs every cell of the sweep; records come back in cell order.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

}  // namespace fedsim
