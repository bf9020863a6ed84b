#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fedsim/ledger.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/types.hpp"

namespace fedsim {

enum class Activation { relu, softmax, identity };
enum class Loss { sparse_categorical_crossentropy, squared_error };

struct TrainConfig {
  double eta = 0.2;
  std::size_t epochs = 5;
  std::size_t batch_size = 20;
  Loss loss = Loss::sparse_categorical_crossentropy;

  /// Throws ArgumentError when eta < 0, epochs < 1 or batch_size < 1.
  void validate() const;
};

struct DenseSpec {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  Activation activation = Activation::relu;
};

/// Fully connected feed-forward network. Holds the architecture only; the
/// parameters travel separately as ModelWeights so they can be shipped,
/// averaged and merged without the network.
class Network {
 public:
  Network(std::vector<DenseSpec> layers, Loss loss);

  /// ReLU hidden layers and a softmax output trained with cross-entropy.
  static Network classifier(std::size_t input_dim, std::span<const std::size_t> hidden,
                            std::size_t num_classes);

  const std::vector<DenseSpec>& layers() const noexcept { return layers_; }
  Loss loss() const noexcept { return loss_; }
  std::size_t input_dim() const noexcept { return layers_.front().fan_in; }
  std::size_t output_dim() const noexcept { return layers_.back().fan_out; }
  std::size_t param_count() const noexcept { return param_count_; }
  std::vector<LayerSpec> layer_specs() const;

  ModelWeights zeros() const;
  /// Glorot-uniform weights, zero biases.
  ModelWeights glorot_init(Rng& rng) const;

  /// Output activations, one row per input row.
  Eigen::MatrixXd forward(const ModelWeights& weights, const Eigen::MatrixXd& inputs) const;

  /// Per-sample losses for a batch.
  Eigen::VectorXd sample_losses(const ModelWeights& weights, const Eigen::MatrixXd& inputs,
                                std::span<const int> labels) const;

  /// Mean batch loss; writes d(mean loss)/dw into `grad` (size param_count()).
  double loss_and_gradient(const ModelWeights& weights, const Eigen::MatrixXd& inputs,
                           std::span<const int> labels, std::span<double> grad) const;

  void check_compatible(const ModelWeights& weights) const;

 private:
  std::vector<DenseSpec> layers_;
  Loss loss_;
  std::size_t param_count_ = 0;
  std::vector<std::size_t> offsets_;
};

/// Gathers rows of a shard into a dense matrix.
Eigen::MatrixXd gather_rows(const ClientShard& shard, std::span<const std::size_t> indices);

/// Number of mini-batches per epoch, ceil(n / batch_size).
std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size);

/// Records the gradient-step and scalar-operation cost of one ClientUpdate:
/// E·ceil(n/B) steps and E(n|w| + 2·ceil(n/B)|w|) scalar operations.
void account_client_update(CostLedger& ledger, std::size_t shard_size, std::size_t param_count,
                           const TrainConfig& cfg);

/// Mini-batch SGD over the shard: E epochs, batches reshuffled every epoch
/// from `rng`, the final short batch used as-is. `round` is carried into a
/// DivergenceError when the loss becomes non-finite.
ModelWeights client_update(const Network& net, ModelWeights model, const ClientShard& shard,
                           const TrainConfig& cfg, Rng& rng, CostLedger& ledger,
                           std::size_t round = 0);

struct ModelUpdate {
  ModelWeights weights;
  std::size_t shard_size = 0;
};

/// Dataset-size weighted average of client models.
ModelWeights fedavg(std::span<const ModelUpdate> updates);

/// Element-wise mean of two models (gossip merge).
ModelWeights merge(const ModelWeights& w, const ModelWeights& w_prev);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t samples = 0;
};

/// Accuracy (argmax) and mean per-sample loss over every sample of `data`.
EvalResult evaluate(const Network& net, const ModelWeights& model, std::span<const ClientShard> data);
EvalResult evaluate(const Network& net, const ModelWeights& model, std::span<const ClientShard* const> data);

/// What a protocol needs from local training. SgdTrainer does the real work;
/// CountingTrainer only books the cost of each update, for fast counter
/// reconciliation at any model size.
class LocalTrainer {
 public:
  explicit LocalTrainer(TrainConfig cfg) : cfg_(cfg) { cfg_.validate(); }
  virtual ~LocalTrainer() = default;

  const TrainConfig& config() const noexcept { return cfg_; }

  virtual std::size_t param_count() const = 0;
  virtual ModelWeights initial_model(Rng& init) const = 0;
  virtual ModelWeights train(ModelWeights model, const ClientShard& shard, Rng& rng,
                             CostLedger& ledger, std::size_t round) const = 0;
  /// nullopt when the trainer cannot score models.
  virtual std::optional<EvalResult> score(const ModelWeights& model,
                                          std::span<const ClientShard* const> data) const = 0;

 protected:
  TrainConfig cfg_;
};

class SgdTrainer final : public LocalTrainer {
 public:
  SgdTrainer(Network net, TrainConfig cfg);

  const Network& network() const noexcept { return net_; }

  std::size_t param_count() const override { return net_.param_count(); }
  ModelWeights initial_model(Rng& init) const override { return net_.glorot_init(init); }
  ModelWeights train(ModelWeights model, const ClientShard& shard, Rng& rng, CostLedger& ledger,
                     std::size_t round) const override;
  std::optional<EvalResult> score(const ModelWeights& model,
                                  std::span<const ClientShard* const> data) const override;

 private:
  Network net_;
};

class CountingTrainer final : public LocalTrainer {
 public:
  CountingTrainer(std::vector<LayerSpec> layers, TrainConfig cfg,
                  std::optional<TensorShape> input = std::nullopt);

  std::size_t param_count() const override { return param_count_; }
  ModelWeights initial_model(Rng& init) const override;
  ModelWeights train(ModelWeights model, const ClientShard& shard, Rng& rng, CostLedger& ledger,
                     std::size_t round) const override;
  std::optional<EvalResult> score(const ModelWeights&, std::span<const ClientShard* const>) const override {
    return std::nullopt;
  }

 private:
  std::vector<LayerSpec> layers_;
  std::optional<TensorShape> input_;
  std::size_t param_count_;
};

}  // namespace fedsim
