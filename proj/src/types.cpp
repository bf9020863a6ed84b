#include "fedsim/types.hpp"

#include <string>

#include "fedsim/errors.hpp"

namespace fedsim {
namespace {

struct FlowState {
  // Either a flat vector (dense chain) or a spatial tensor.
  bool spatial = false;
  std::size_t flat = 0;
  bool flat_known = false;
  TensorShape tensor{};
};

std::string where(std::size_t index) { return "layer " + std::to_string(index) + ": "; }

}  // namespace

std::size_t param_count(std::span<const LayerSpec> layers, std::optional<TensorShape> input) {
  FlowState state;
  if (input) {
    state.spatial = true;
    state.tensor = *input;
  }
  std::size_t total = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& layer = layers[i];
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      if (dense->fan_out == 0) throw DimensionMismatchError(where(i) + "dense layer with zero outputs");
      std::size_t incoming = 0;
      bool known = false;
      if (state.spatial) {
        incoming = state.tensor.height * state.tensor.width * state.tensor.channels;
        known = true;
      } else if (state.flat_known) {
        incoming = state.flat;
        known = true;
      }
      const bool infer = dense->fan_in == 0;
      if (infer && !known) throw DimensionMismatchError(where(i) + "dense layer input size cannot be inferred");
      if (known && !infer && incoming != dense->fan_in) {
        throw DimensionMismatchError(where(i) + "dense layer expects " + std::to_string(dense->fan_in) +
                                     " inputs but receives " + std::to_string(incoming));
      }
      total += (infer ? incoming : dense->fan_in) * dense->fan_out + dense->fan_out;
      state.spatial = false;
      state.flat = dense->fan_out;
      state.flat_known = true;
    } else if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      if (!state.spatial) throw DimensionMismatchError(where(i) + "convolution needs a spatial input");
      if (conv->channels_in != state.tensor.channels) {
        throw DimensionMismatchError(where(i) + "convolution expects " + std::to_string(conv->channels_in) +
                                     " channels but receives " + std::to_string(state.tensor.channels));
      }
      if (conv->kernel_h == 0 || conv->kernel_w == 0 || conv->channels_out == 0 ||
          conv->kernel_h > state.tensor.height || conv->kernel_w > state.tensor.width) {
        throw DimensionMismatchError(where(i) + "convolution kernel does not fit its input");
      }
      total += conv->kernel_h * conv->kernel_w * conv->channels_in * conv->channels_out + conv->channels_out;
      state.tensor = {state.tensor.height - conv->kernel_h + 1, state.tensor.width - conv->kernel_w + 1,
                      conv->channels_out};
    } else {
      const auto& pool = std::get<PoolLayer>(layer);
      if (!state.spatial) throw DimensionMismatchError(where(i) + "pooling needs a spatial input");
      if (pool.pool_h == 0 || pool.pool_w == 0 || pool.pool_h > state.tensor.height ||
          pool.pool_w > state.tensor.width) {
        throw DimensionMismatchError(where(i) + "pooling window does not fit its input");
      }
      state.tensor.height /= pool.pool_h;
      state.tensor.width /= pool.pool_w;
    }
  }
  return total;
}

ModelWeights::ModelWeights(std::vector<LayerSpec> layers, std::vector<double> values,
                           std::optional<TensorShape> input)
    : layers_(std::move(layers)), input_(input), values_(std::move(values)) {
  const std::size_t expected = fedsim::param_count(layers_, input_);
  if (expected != values_.size()) {
    throw DimensionMismatchError("layer metadata describes " + std::to_string(expected) +
                                 " parameters but " + std::to_string(values_.size()) + " values were given");
  }
}

ModelWeights ModelWeights::zeros(std::vector<LayerSpec> layers, std::optional<TensorShape> input) {
  const std::size_t n = fedsim::param_count(layers, input);
  return ModelWeights(std::move(layers), std::vector<double>(n, 0.0), input);
}

}  // namespace fedsim
