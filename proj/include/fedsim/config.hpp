#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fedsim/blockchain.hpp"
#include "fedsim/data.hpp"
#include "fedsim/netmodel.hpp"
#include "fedsim/protocols.hpp"
#include "fedsim/trainer.hpp"

namespace fedsim {

/// Environment variable holding extra directories (colon separated) searched
/// for relative config paths.
inline constexpr const char* kConfigPathEnv = "FEDSIM_CONFIG_PATH";

enum class DatasetSource { synthetic, idx };

struct DatasetConfig {
  DatasetSource source = DatasetSource::synthetic;
  SynthOptions synthetic;
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  /// Number of clients for IDX data.
  std::size_t clients = 3382;
  PartitionMode partition = PartitionMode::iid();

  std::size_t num_clients() const noexcept {
    return source == DatasetSource::synthetic ? synthetic.n_clients : clients;
  }
};

enum class ModelKind { ffnn, cnn };

struct ModelConfig {
  ModelKind kind = ModelKind::ffnn;
  std::vector<std::size_t> hidden{200, 200};
  /// Use the cost-only trainer (no arithmetic on weights). CNNs are always
  /// cost-only.
  bool counting_only = false;
};

/// Blocks-only mining study: no learning, just the chain under load.
struct ChainStudyConfig {
  std::size_t blocks = 10000;
  std::uint64_t payload_bytes = 160'368'000;
};

struct SweepAxes {
  std::vector<std::size_t> rounds;
  std::vector<std::size_t> epochs;
  std::vector<std::size_t> clients_per_round;
  std::vector<double> block_interval;
  std::vector<std::size_t> miners;
};

struct ExperimentConfig {
  std::vector<ProtocolKind> protocols{ProtocolKind::cfl};
  std::uint64_t seed = 1;
  std::filesystem::path output = "results";
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  ProtocolConfig protocol;
  std::optional<ChainConfig> chain;
  LinkModel links;
  EnergyModel energy;
  std::optional<SweepAxes> sweep;
  std::optional<ChainStudyConfig> chain_study;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Resolves `path` against the working directory, then against every
/// directory listed in FEDSIM_CONFIG_PATH.
std::filesystem::path resolve_config_path(const std::filesystem::path& path);

/// Parses and validates a YAML config; relative dataset paths are taken
/// relative to `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});

ExperimentConfig load_config(const std::filesystem::path& path);

/// Complete config with every default spelled out. The result is itself a
/// valid config document (JSON is a subset of YAML).
nlohmann::json config_to_json(const ExperimentConfig& cfg);

}  // namespace fedsim
