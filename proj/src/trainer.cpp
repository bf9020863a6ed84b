#include "fedsim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedsim/errors.hpp"

namespace fedsim {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeightMap = Eigen::Map<const RowMatrix>;
using ConstBiasMap = Eigen::Map<const Eigen::VectorXd>;

void apply_activation(Eigen::MatrixXd& z, Activation act) {
  switch (act) {
    case Activation::relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::softmax:
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double top = z.row(r).maxCoeff();
        z.row(r) = (z.row(r).array() - top).exp();
        z.row(r) /= z.row(r).sum();
      }
      break;
    case Activation::identity:
      break;
  }
}

double target_value(int label, Eigen::Index column, Eigen::Index width) {
  if (width == 1) return static_cast<double>(label);
  return column == label ? 1.0 : 0.0;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ArgumentError("learning rate must be finite and >= 0");
  if (epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
}

Network::Network(std::vector<DenseSpec> layers, Loss loss) : layers_(std::move(layers)), loss_(loss) {
  if (layers_.empty()) throw ArgumentError("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseSpec& l = layers_[i];
    if (l.fan_in == 0 || l.fan_out == 0) throw DimensionMismatchError("layer " + std::to_string(i) + " is empty");
    if (i > 0 && layers_[i - 1].fan_out != l.fan_in) {
      throw DimensionMismatchError("layer " + std::to_string(i) + " expects " + std::to_string(l.fan_in) +
                                   " inputs but receives " + std::to_string(layers_[i - 1].fan_out));
    }
    if (l.activation == Activation::softmax && i + 1 != layers_.size()) {
      throw ArgumentError("softmax is only supported on the output layer");
    }
    offsets_.push_back(param_count_);
    param_count_ += l.fan_in * l.fan_out + l.fan_out;
  }
  if (loss_ == Loss::sparse_categorical_crossentropy && layers_.back().activation != Activation::softmax) {
    throw ArgumentError("cross-entropy training needs a softmax output layer");
  }
  if (loss_ == Loss::squared_error && layers_.back().activation == Activation::softmax) {
    throw ArgumentError("squared-error training needs an identity or relu output layer");
  }
}

Network Network::classifier(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t num_classes) {
  std::vector<DenseSpec> layers;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    layers.push_back({in, h, Activation::relu});
    in = h;
  }
  layers.push_back({in, num_classes, Activation::softmax});
  return Network(std::move(layers), Loss::sparse_categorical_crossentropy);
}

std::vector<LayerSpec> Network::layer_specs() const {
  std::vector<LayerSpec> out;
  out.reserve(layers_.size());
  for (const DenseSpec& l : layers_) out.emplace_back(DenseLayer{l.fan_in, l.fan_out});
  return out;
}

ModelWeights Network::zeros() const { return ModelWeights::zeros(layer_specs()); }

ModelWeights Network::glorot_init(Rng& rng) const {
  std::vector<double> values(param_count_, 0.0);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseSpec& l = layers_[i];
    const double limit = std::sqrt(6.0 / static_cast<double>(l.fan_in + l.fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    const std::size_t n = l.fan_in * l.fan_out;
    for (std::size_t k = 0; k < n; ++k) values[offsets_[i] + k] = dist(rng);
  }
  return ModelWeights(layer_specs(), std::move(values));
}

void Network::check_compatible(const ModelWeights& weights) const {
  if (weights.param_count() != param_count_ || weights.layers() != layer_specs()) {
    throw DimensionMismatchError("model weights do not match the network shape");
  }
}

Eigen::MatrixXd Network::forward(const ModelWeights& weights, const Eigen::MatrixXd& inputs) const {
  check_compatible(weights);
  if (static_cast<std::size_t>(inputs.cols()) != input_dim()) {
    throw DimensionMismatchError("input has " + std::to_string(inputs.cols()) + " features, network expects " +
                                 std::to_string(input_dim()));
  }
  const double* base = weights.values().data();
  Eigen::MatrixXd a = inputs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseSpec& l = layers_[i];
    ConstWeightMap w(base + offsets_[i], l.fan_out, l.fan_in);
    ConstBiasMap b(base + offsets_[i] + l.fan_in * l.fan_out, l.fan_out);
    Eigen::MatrixXd z = a * w.transpose();
    z.rowwise() += b.transpose();
    apply_activation(z, l.activation);
    a = std::move(z);
  }
  return a;
}

Eigen::VectorXd Network::sample_losses(const ModelWeights& weights, const Eigen::MatrixXd& inputs,
                                       std::span<const int> labels) const {
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw DimensionMismatchError("feature and label counts differ");
  }
  // Cross-entropy goes through log-sum-exp on the logits, so the output layer
  // is evaluated without its softmax here.
  check_compatible(weights);
  const double* base = weights.values().data();
  Eigen::MatrixXd a = inputs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseSpec& l = layers_[i];
    ConstWeightMap w(base + offsets_[i], l.fan_out, l.fan_in);
    ConstBiasMap b(base + offsets_[i] + l.fan_in * l.fan_out, l.fan_out);
    Eigen::MatrixXd z = a * w.transpose();
    z.rowwise() += b.transpose();
    if (i + 1 < layers_.size() || loss_ != Loss::sparse_categorical_crossentropy) apply_activation(z, l.activation);
    a = std::move(z);
  }
  Eigen::VectorXd out(a.rows());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    if (loss_ == Loss::sparse_categorical_crossentropy) {
      const int y = labels[static_cast<std::size_t>(r)];
      if (y < 0 || y >= a.cols()) throw DimensionMismatchError("label " + std::to_string(y) + " out of range");
      const double top = a.row(r).maxCoeff();
      const double lse = top + std::log((a.row(r).array() - top).exp().sum());
      out(r) = lse - a(r, y);
    } else {
      double s = 0.0;
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        const double d = a(r, c) - target_value(labels[static_cast<std::size_t>(r)], c, a.cols());
        s += d * d;
      }
      out(r) = 0.5 * s;
    }
  }
  return out;
}

double Network::loss_and_gradient(const ModelWeights& weights, const Eigen::MatrixXd& inputs,
                                  std::span<const int> labels, std::span<double> grad) const {
  check_compatible(weights);
  if (grad.size() != param_count_) throw DimensionMismatchError("gradient buffer has the wrong size");
  const auto n = inputs.rows();
  if (n == 0) throw EmptyDatasetError("empty batch");
  if (static_cast<std::size_t>(n) != labels.size()) throw DimensionMismatchError("feature and label counts differ");

  const double* base = weights.values().data();
  // activations[0] is the input; pre[i] is layer i's pre-activation.
  std::vector<Eigen::MatrixXd> activations;
  std::vector<Eigen::MatrixXd> pre;
  activations.reserve(layers_.size() + 1);
  pre.reserve(layers_.size());
  activations.push_back(inputs);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseSpec& l = layers_[i];
    ConstWeightMap w(base + offsets_[i], l.fan_out, l.fan_in);
    ConstBiasMap b(base + offsets_[i] + l.fan_in * l.fan_out, l.fan_out);
    Eigen::MatrixXd z = activations.back() * w.transpose();
    z.rowwise() += b.transpose();
    pre.push_back(z);
    apply_activation(z, l.activation);
    activations.push_back(std::move(z));
  }

  const Eigen::MatrixXd& out = activations.back();
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd delta = out;
  double loss = 0.0;
  if (loss_ == Loss::sparse_categorical_crossentropy) {
    const Eigen::MatrixXd& logits = pre.back();
    for (Eigen::Index r = 0; r < n; ++r) {
      const int y = labels[static_cast<std::size_t>(r)];
      if (y < 0 || y >= out.cols()) throw DimensionMismatchError("label " + std::to_string(y) + " out of range");
      const double top = logits.row(r).maxCoeff();
      const double lse = top + std::log((logits.row(r).array() - top).exp().sum());
      loss += lse - logits(r, y);
      delta(r, y) -= 1.0;
    }
    delta *= inv_n;
  } else {
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < out.cols(); ++c) {
        const double d = out(r, c) - target_value(labels[static_cast<std::size_t>(r)], c, out.cols());
        loss += 0.5 * d * d;
        delta(r, c) = d;
      }
    }
    if (layers_.back().activation == Activation::relu) delta = delta.cwiseProduct((pre.back().array() > 0.0).cast<double>().matrix());
    delta *= inv_n;
  }

  for (std::size_t i = layers_.size(); i-- > 0;) {
    const DenseSpec& l = layers_[i];
    Eigen::Map<RowMatrix> gw(grad.data() + offsets_[i], l.fan_out, l.fan_in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[i] + l.fan_in * l.fan_out, l.fan_out);
    gw.noalias() = delta.transpose() * activations[i];
    gb = delta.colwise().sum().transpose();
    if (i == 0) break;
    ConstWeightMap w(base + offsets_[i], l.fan_out, l.fan_in);
    Eigen::MatrixXd upstream = delta * w;
    if (layers_[i - 1].activation == Activation::relu) {
      upstream = upstream.cwiseProduct((pre[i - 1].array() > 0.0).cast<double>().matrix());
    }
    delta = std::move(upstream);
  }
  return loss * inv_n;
}

Eigen::MatrixXd gather_rows(const ClientShard& shard, std::span<const std::size_t> indices) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(shard.feature_dim));
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto row = shard.row(indices[r]);
    for (std::size_t c = 0; c < row.size(); ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
  }
  return out;
}

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size) { return (n + batch_size - 1) / batch_size; }

void account_client_update(CostLedger& ledger, std::size_t shard_size, std::size_t param_count,
                           const TrainConfig& cfg) {
  const std::uint64_t batches = batches_per_epoch(shard_size, cfg.batch_size);
  const std::uint64_t w = param_count;
  ledger.grad_step_count += cfg.epochs * batches;
  ledger.scalar_op_count += cfg.epochs * (shard_size * w + 2 * batches * w);
  ledger.client_updates += 1;
}

ModelWeights client_update(const Network& net, ModelWeights model, const ClientShard& shard,
                           const TrainConfig& cfg, Rng& rng, CostLedger& ledger, std::size_t round) {
  cfg.validate();
  if (shard.empty()) throw EmptyDatasetError("client " + std::to_string(shard.client_id) + " has no samples");
  net.check_compatible(model);

  const std::size_t n = shard.size();
  std::vector<std::size_t> order(n);
  std::vector<double> grad(net.param_count());
  std::vector<int> batch_labels;
  std::span<double> w = model.values();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Each epoch's order depends only on the generator, not the previous epoch.
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Eigen::MatrixXd x = gather_rows(shard, idx);
      batch_labels.clear();
      for (std::size_t k : idx) batch_labels.push_back(shard.labels[k]);
      const double loss = net.loss_and_gradient(model, x, batch_labels, grad);
      if (!std::isfinite(loss)) {
        throw DivergenceError(round, "non-finite loss on client " + std::to_string(shard.client_id));
      }
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= cfg.eta * grad[k];
    }
  }
  account_client_update(ledger, n, net.param_count(), cfg);
  return model;
}

ModelWeights fedavg(std::span<const ModelUpdate> updates) {
  if (updates.empty()) throw AggregationError("nothing to aggregate");
  const ModelWeights& first = updates.front().weights;
  double total = 0.0;
  for (const ModelUpdate& u : updates) {
    if (!u.weights.same_shape(first) || u.weights.param_count() != first.param_count()) {
      throw AggregationError("model updates have different shapes");
    }
    if (u.shard_size == 0) throw AggregationError("model update from an empty shard");
    total += static_cast<double>(u.shard_size);
  }
  ModelWeights out = first;
  std::span<double> acc = out.values();
  std::fill(acc.begin(), acc.end(), 0.0);
  for (const ModelUpdate& u : updates) {
    const double coeff = static_cast<double>(u.shard_size) / total;
    const std::span<const double> v = u.weights.values();
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += coeff * v[k];
  }
  return out;
}

ModelWeights merge(const ModelWeights& w, const ModelWeights& w_prev) {
  if (!w.same_shape(w_prev) || w.param_count() != w_prev.param_count()) {
    throw AggregationError("cannot merge models of different shapes");
  }
  ModelWeights out = w;
  std::span<double> dst = out.values();
  const std::span<const double> other = w_prev.values();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = 0.5 * (dst[k] + other[k]);
  return out;
}

EvalResult evaluate(const Network& net, const ModelWeights& model, std::span<const ClientShard> data) {
  std::vector<const ClientShard*> ptrs;
  ptrs.reserve(data.size());
  for (const ClientShard& s : data) ptrs.push_back(&s);
  return evaluate(net, model, ptrs);
}

EvalResult evaluate(const Network& net, const ModelWeights& model, std::span<const ClientShard* const> data) {
  constexpr std::size_t kChunk = 512;
  EvalResult result;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (const ClientShard* shard_ptr : data) {
    const ClientShard& shard = *shard_ptr;
    for (std::size_t start = 0; start < shard.size(); start += kChunk) {
      const std::size_t stop = std::min(shard.size(), start + kChunk);
      idx.resize(stop - start);
      std::iota(idx.begin(), idx.end(), start);
      const Eigen::MatrixXd x = gather_rows(shard, idx);
      const std::span<const int> labels(shard.labels.data() + start, stop - start);
      const Eigen::MatrixXd out = net.forward(model, x);
      const Eigen::VectorXd losses = net.sample_losses(model, x, labels);
      for (Eigen::Index r = 0; r < out.rows(); ++r) {
        Eigen::Index best = 0;
        out.row(r).maxCoeff(&best);
        const int y = labels[static_cast<std::size_t>(r)];
        const bool hit = out.cols() == 1 ? std::lround(out(r, 0)) == y : best == y;
        if (hit) ++correct;
        loss_sum += losses(r);
      }
      result.samples += stop - start;
    }
  }
  if (result.samples == 0) throw EmptyDatasetError("evaluation data is empty");
  result.accuracy = static_cast<double>(correct) / static_cast<double>(result.samples);
  result.loss = loss_sum / static_cast<double>(result.samples);
  return result;
}

SgdTrainer::SgdTrainer(Network net, TrainConfig cfg) : LocalTrainer(cfg), net_(std::move(net)) {
  if (net_.loss() != cfg_.loss) throw ArgumentError("training loss does not match the network's loss");
}

ModelWeights SgdTrainer::train(ModelWeights model, const ClientShard& shard, Rng& rng, CostLedger& ledger,
                               std::size_t round) const {
  return client_update(net_, std::move(model), shard, cfg_, rng, ledger, round);
}

std::optional<EvalResult> SgdTrainer::score(const ModelWeights& model,
                                            std::span<const ClientShard* const> data) const {
  return evaluate(net_, model, data);
}

CountingTrainer::CountingTrainer(std::vector<LayerSpec> layers, TrainConfig cfg, std::optional<TensorShape> input)
    : LocalTrainer(cfg), layers_(std::move(layers)), input_(input), param_count_(fedsim::param_count(layers_, input_)) {}

ModelWeights CountingTrainer::initial_model(Rng&) const { return ModelWeights::zeros(layers_, input_); }

ModelWeights CountingTrainer::train(ModelWeights model, const ClientShard& shard, Rng&, CostLedger& ledger,
                                    std::size_t) const {
  if (shard.empty()) throw EmptyDatasetError("client " + std::to_string(shard.client_id) + " has no samples");
  account_client_update(ledger, shard.size(), param_count_, cfg_);
  return model;
}

}  // namespace fedsim
