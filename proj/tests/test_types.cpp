#include <gtest/gtest.h>

#include "fedsim/errors.hpp"
#include "fedsim/ledger.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/types.hpp"

using namespace fedsim;

namespace {

std::vector<LayerSpec> ffnn_784() {
  return {DenseLayer{784, 200}, DenseLayer{200, 200}, DenseLayer{200, 10}};
}

std::vector<LayerSpec> cnn_28() {
  return {ConvLayer{5, 5, 1, 32}, PoolLayer{}, ConvLayer{5, 5, 32, 64}, PoolLayer{}, DenseLayer{1024, 512},
          DenseLayer{512, 10}};
}

}  // namespace

TEST(ParamCount, FeedForwardNetwork) { EXPECT_EQ(param_count(ffnn_784()), 199210u); }

TEST(ParamCount, SingleUnit) {
  const std::vector<LayerSpec> layers{DenseLayer{1, 1}};
  EXPECT_EQ(param_count(layers), 2u);
}

TEST(ParamCount, ConvolutionalNetwork) {
  // 832 + 51264 + 524800 + 5130, checked layer by layer.
  EXPECT_EQ(5u * 5 * 1 * 32 + 32, 832u);
  EXPECT_EQ(5u * 5 * 32 * 64 + 64, 51264u);
  EXPECT_EQ(1024u * 512 + 512, 524800u);
  EXPECT_EQ(512u * 10 + 10, 5130u);
  EXPECT_EQ(param_count(cnn_28(), TensorShape{28, 28, 1}), 582026u);
}

TEST(ParamCount, DenseFanInInferredAfterConv) {
  std::vector<LayerSpec> layers = cnn_28();
  layers[4] = DenseLayer{0, 512};
  EXPECT_EQ(param_count(layers, TensorShape{28, 28, 1}), 582026u);
}

TEST(ParamCount, MismatchedDenseLayersThrow) {
  const std::vector<LayerSpec> layers{DenseLayer{784, 200}, DenseLayer{100, 10}};
  EXPECT_THROW(param_count(layers), DimensionMismatchError);
}

TEST(ParamCount, WrongFlattenSizeThrows) {
  std::vector<LayerSpec> layers = cnn_28();
  layers[4] = DenseLayer{1000, 512};
  EXPECT_THROW(param_count(layers, TensorShape{28, 28, 1}), DimensionMismatchError);
}

TEST(ParamCount, ConvChannelMismatchThrows) {
  const std::vector<LayerSpec> layers{ConvLayer{5, 5, 3, 8}};
  EXPECT_THROW(param_count(layers, TensorShape{28, 28, 1}), DimensionMismatchError);
}

TEST(ParamCount, KernelLargerThanInputThrows) {
  const std::vector<LayerSpec> layers{ConvLayer{5, 5, 1, 8}};
  EXPECT_THROW(param_count(layers, TensorShape{4, 4, 1}), DimensionMismatchError);
}

TEST(ParamCount, IsPure) { EXPECT_EQ(param_count(ffnn_784()), param_count(ffnn_784())); }

TEST(ModelWeights, SizesFollowLayers) {
  const auto w = ModelWeights::zeros(ffnn_784());
  EXPECT_EQ(w.param_count(), 199210u);
  EXPECT_EQ(w.byte_size(), 4u * 199210u);
  EXPECT_EQ(w.values().size(), w.param_count());
}

TEST(ModelWeights, RejectsWrongValueCount) {
  const std::vector<LayerSpec> layers{DenseLayer{1, 1}};
  EXPECT_THROW(ModelWeights(layers, {1.0, 2.0, 3.0}), DimensionMismatchError);
}

TEST(Ledger, MergeIdentityAndAdditivity) {
  const CostLedger zero;
  EXPECT_EQ(ledger_merge(zero, zero), zero);

  CostLedger x;
  x.params_tx_edge = 3;
  x.bytes_p2p = 7;
  x.t_train = 1.5;
  x.e_bc = 2.0;
  x.grad_step_count = 11;
  EXPECT_EQ(ledger_merge(x, zero), x);

  CostLedger a, b;
  a.t_train = 1.0;
  b.t_train = 2.0;
  EXPECT_DOUBLE_EQ(ledger_merge(a, b).t_train, 3.0);
}

TEST(Ledger, MergeSumsEveryField) {
  CostLedger a;
  a.params_tx_edge = 1;
  a.params_tx_cloud = 2;
  a.params_p2p = 3;
  a.params_p2p_orphaned = 4;
  a.bytes_tx_edge = 5;
  a.bytes_tx_cloud = 6;
  a.bytes_p2p = 7;
  a.bytes_p2p_orphaned = 8;
  a.t_train = 9;
  a.t_train_weighted = 10;
  a.t_tx_edge = 11;
  a.t_tx_cloud = 12;
  a.t_bc = 13;
  a.e_train = 14;
  a.e_tx_edge = 15;
  a.e_tx_cloud = 16;
  a.e_bc = 17;
  a.e_bc_orphaned = 18;
  a.grad_step_count = 19;
  a.scalar_op_count = 20;
  a.client_updates = 21;
  a.n_chain = 22;
  a.n_fork_attempts = 23;
  a.n_orphaned_blocks = 24;
  const CostLedger doubled = ledger_merge(a, a);
  CostLedger expected = a;
  expected += a;
  EXPECT_EQ(doubled, expected);
  EXPECT_EQ(doubled.n_orphaned_blocks, 48u);
  EXPECT_DOUBLE_EQ(doubled.e_bc_orphaned, 36.0);
  EXPECT_EQ(doubled.params_transferred(), 12u);
  EXPECT_EQ(doubled.bytes_transferred(), 36u);
}

TEST(Rng, StreamsAreReproducible) {
  RngStreams a(42), b(42);
  EXPECT_EQ(a.selection()(), b.selection()());
  EXPECT_EQ(a.mining()(), b.mining()());
  EXPECT_EQ(a.derive(StreamId::shuffle, 3, 4)(), b.derive(StreamId::shuffle, 3, 4)());
}

TEST(Rng, StreamsAreIndependent) {
  RngStreams a(42);
  RngStreams b(42);
  // Draining one stream must not perturb another.
  for (int i = 0; i < 1000; ++i) a.mining()();
  EXPECT_EQ(a.selection()(), b.selection()());
  EXPECT_NE(RngStreams(42).selection()(), RngStreams(42).sequence()());
  EXPECT_NE(a.derive(StreamId::shuffle, 1, 2)(), a.derive(StreamId::shuffle, 2, 1)());
  EXPECT_NE(RngStreams(1).init()(), RngStreams(2).init()());
}
