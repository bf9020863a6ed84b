#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace fedsim {

/// On-wire size of one model parameter (float32).
inline constexpr std::size_t kParamBytes = 4;

struct DenseLayer {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct ConvLayer {
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t channels_in = 0;
  std::size_t channels_out = 0;
  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

/// Non-overlapping max pooling; no parameters.
struct PoolLayer {
  std::size_t pool_h = 2;
  std::size_t pool_w = 2;
  friend bool operator==(const PoolLayer&, const PoolLayer&) = default;
};

using LayerSpec = std::variant<DenseLayer, ConvLayer, PoolLayer>;

/// Spatial input of a convolutional stack (height × width × channels).
struct TensorShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

/// Trainable parameters of a layer stack, biases included. Convolutions use
/// valid padding and stride 1; a dense layer after a spatial layer must take
/// the flattened size. Throws DimensionMismatchError on inconsistent layers.
/// `input` is required whenever the stack contains a conv or pool layer.
std::size_t param_count(std::span<const LayerSpec> layers,
                        std::optional<TensorShape> input = std::nullopt);

/// Flat parameter vector of a model plus the layer metadata it was built
/// from. Dense layers are laid out as a row-major fan_out × fan_in matrix
/// followed by fan_out biases.
class ModelWeights {
 public:
  ModelWeights() = default;
  ModelWeights(std::vector<LayerSpec> layers, std::vector<double> values,
               std::optional<TensorShape> input = std::nullopt);

  static ModelWeights zeros(std::vector<LayerSpec> layers,
                            std::optional<TensorShape> input = std::nullopt);

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const std::optional<TensorShape>& input() const noexcept { return input_; }

  std::size_t param_count() const noexcept { return values_.size(); }
  std::size_t byte_size() const noexcept { return kParamBytes * values_.size(); }

  bool same_shape(const ModelWeights& other) const noexcept {
    return layers_ == other.layers_ && input_ == other.input_;
  }

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;

 private:
  std::vector<LayerSpec> layers_;
  std::optional<TensorShape> input_;
  std::vector<double> values_;
};

/// One client's local labeled dataset; features are row-major, one row per
/// sample.
struct ClientShard {
  std::size_t client_id = 0;
  std::size_t feature_dim = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  std::span<const double> row(std::size_t i) const noexcept {
    return {features.data() + i * feature_dim, feature_dim};
  }
};

}  // namespace fedsim
