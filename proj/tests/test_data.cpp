#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <set>

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/trainer.hpp"
#include "testutil.hpp"

using namespace fedsim;
namespace ft = fedsim::testing;

namespace {

SamplePool labelled_pool(std::size_t n, std::size_t classes) {
  SamplePool pool;
  pool.feature_dim = 1;
  for (std::size_t i = 0; i < n; ++i) {
    pool.features.push_back(static_cast<double>(i));  // feature = sample id
    pool.labels.push_back(static_cast<int>(i % classes));
  }
  return pool;
}

std::set<int> labels_of(const ClientShard& s) { return {s.labels.begin(), s.labels.end()}; }

}  // namespace

TEST(Synthetic, SampleConservationAndBalance) {
  Rng rng(1);
  SynthOptions o;
  o.n_clients = 3;
  o.samples_per_client = 10;
  o.num_classes = 5;
  const FederatedDataset ds = synth_dataset(o, rng);
  EXPECT_EQ(ds.train_samples(), 30u);
  EXPECT_EQ(ds.num_clients(), 3u);
  EXPECT_EQ(ds.test_shards.size(), 3u);
  for (const auto& s : ds.train_shards) {
    std::map<int, int> count;
    for (int l : s.labels) ++count[l];
    for (const auto& [label, c] : count) EXPECT_EQ(c, 2) << "label " << label;
  }
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(ds.train_shards[k].client_id, ds.test_shards[k].client_id);
}

TEST(Synthetic, SameSeedSameData) {
  SynthOptions o;
  Rng a(5), b(5);
  const auto x = synth_dataset(o, a);
  const auto y = synth_dataset(o, b);
  ASSERT_EQ(x.train_shards.size(), y.train_shards.size());
  for (std::size_t k = 0; k < x.train_shards.size(); ++k) {
    EXPECT_EQ(x.train_shards[k].features, y.train_shards[k].features);
    EXPECT_EQ(x.train_shards[k].labels, y.train_shards[k].labels);
  }
}

TEST(Synthetic, WellSeparatedClassesAreLearnable) {
  Rng rng(3);
  SynthOptions o;
  o.n_clients = 4;
  o.samples_per_client = 50;
  o.test_samples_per_client = 50;
  o.num_classes = 2;
  o.feature_dim = 2;
  o.separation = 10.0;
  const FederatedDataset ds = synth_dataset(o, rng);
  ClientShard all;
  all.feature_dim = 2;
  for (const auto& s : ds.train_shards) {
    all.features.insert(all.features.end(), s.features.begin(), s.features.end());
    all.labels.insert(all.labels.end(), s.labels.begin(), s.labels.end());
  }
  const Network net = Network::classifier(2, std::vector<std::size_t>{8}, 2);
  CostLedger ledger;
  const ModelWeights w = client_update(net, net.glorot_init(rng), all, TrainConfig{0.1, 10, 10}, rng, ledger);
  EXPECT_GE(evaluate(net, w, ds.test_shards).accuracy, 0.95);
}

TEST(Synthetic, ClassMeansArePairwiseEquidistant) {
  // Empirical class centroids converge to the means, which sit exactly
  // `separation` apart.
  Rng rng(11);
  SynthOptions o;
  o.n_clients = 1;
  o.samples_per_client = 40000;
  o.num_classes = 4;
  o.feature_dim = 6;
  o.separation = 5.0;
  const auto ds = synth_dataset(o, rng);
  const auto& s = ds.train_shards[0];
  std::vector<std::vector<double>> mean(4, std::vector<double>(6, 0.0));
  std::vector<int> n(4, 0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto row = s.row(i);
    for (std::size_t d = 0; d < 6; ++d) mean[s.labels[i]][d] += row[d];
    ++n[s.labels[i]];
  }
  for (int c = 0; c < 4; ++c) {
    for (double& x : mean[c]) x /= n[c];
  }
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < 6; ++d) d2 += (mean[a][d] - mean[b][d]) * (mean[a][d] - mean[b][d]);
      EXPECT_NEAR(std::sqrt(d2), 5.0, 0.1);
    }
  }
}

TEST(Idx, LoadsShapesAndScales) {
  const std::string dir = ft::temp_dir();
  std::vector<unsigned char> pixels(3 * 784, 0);
  pixels[784] = 255;  // first pixel of record 1
  pixels[2 * 784 + 5] = 51;
  ft::write_idx_images(dir + "/img", 3, 28, 28, pixels);
  ft::write_idx_labels(dir + "/lbl", {7, 0, 9});
  const SamplePool pool = load_idx(dir + "/img", dir + "/lbl");
  EXPECT_EQ(pool.size(), 3u);
  EXPECT_EQ(pool.feature_dim, 784u);
  for (std::size_t i = 0; i < 784; ++i) EXPECT_EQ(pool.features[i], 0.0);
  EXPECT_DOUBLE_EQ(pool.features[784], 1.0);
  EXPECT_DOUBLE_EQ(pool.features[2 * 784 + 5], 0.2);
  EXPECT_EQ(pool.labels, (std::vector<int>{7, 0, 9}));
  EXPECT_EQ(read_idx_header(dir + "/img").count, 3u);
  EXPECT_EQ(load_idx_labels(dir + "/lbl").size(), 3u);
}

TEST(Idx, FormatErrorsNameTheFile) {
  const std::string dir = ft::temp_dir();
  ft::write_idx_images(dir + "/img", 2, 2, 2, std::vector<unsigned char>(8, 1));
  ft::write_idx_labels(dir + "/lbl", {1, 2});
  ft::write_idx_images(dir + "/badmagic", 2, 2, 2, std::vector<unsigned char>(8, 1), 0x00000801);
  ft::write_idx_images(dir + "/short", 2, 2, 2, std::vector<unsigned char>(5, 1));
  ft::write_idx_labels(dir + "/three", {1, 2, 3});

  auto expect_error_on = [](const std::string& images, const std::string& labels, const std::string& culprit) {
    try {
      load_idx(images, labels);
      ADD_FAILURE() << "expected FormatError";
    } catch (const FormatError& e) {
      EXPECT_EQ(e.path(), culprit);
      EXPECT_NE(std::string(e.what()).find(culprit), std::string::npos);
    }
  };
  expect_error_on(dir + "/badmagic", dir + "/lbl", dir + "/badmagic");
  expect_error_on(dir + "/img", dir + "/img", dir + "/img");
  expect_error_on(dir + "/short", dir + "/lbl", dir + "/short");
  expect_error_on(dir + "/img", dir + "/three", dir + "/three");
  expect_error_on(dir + "/missing", dir + "/lbl", dir + "/missing");
}

TEST(Partition, IidConservesSamples) {
  Rng rng(2);
  const SamplePool pool = labelled_pool(100, 10);
  const auto shards = partition(pool, 10, PartitionMode::iid(), rng);
  ASSERT_EQ(shards.size(), 10u);
  std::set<double> seen;
  std::size_t total = 0;
  for (const auto& s : shards) {
    EXPECT_GE(s.size(), 1u);
    total += s.size();
    for (double f : s.features) EXPECT_TRUE(seen.insert(f).second) << "sample " << f << " assigned twice";
  }
  EXPECT_LE(total, 100u);
}

TEST(Partition, ClassRestrictedLimitsLabels) {
  Rng rng(4);
  const SamplePool pool = labelled_pool(3000, 10);
  const auto shards = partition(pool, 100, PartitionMode::class_restricted(3), rng);
  std::set<int> covered;
  std::set<double> seen;
  for (const auto& s : shards) {
    EXPECT_GE(s.size(), 1u);
    EXPECT_LE(labels_of(s).size(), 3u);
    covered.insert(s.labels.begin(), s.labels.end());
    for (double f : s.features) EXPECT_TRUE(seen.insert(f).second);
  }
  EXPECT_EQ(covered.size(), 10u);
}

TEST(Partition, FullClassSetMatchesIidSupport) {
  Rng a(6), b(6);
  const SamplePool pool = labelled_pool(500, 5);
  const auto restricted = partition(pool, 10, PartitionMode::class_restricted(5), a);
  const auto iid = partition(pool, 10, PartitionMode::iid(), b);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(restricted[k].size(), iid[k].size());
}

TEST(Partition, PoolTooSmallThrows) {
  Rng rng(1);
  EXPECT_THROW(partition(labelled_pool(5, 2), 6, PartitionMode::iid(), rng), PartitionError);
}

TEST(Partition, RestrictClassesFiltersTrainAndTestAlike) {
  Rng rng(8);
  SynthOptions o;
  o.n_clients = 40;
  o.samples_per_client = 30;
  const FederatedDataset base = synth_dataset(o, rng);
  FederatedDataset ds = base;
  restrict_classes(ds, 3, rng);
  ASSERT_EQ(ds.client_classes.size(), 40u);
  for (std::size_t k = 0; k < 40; ++k) {
    const auto& allowed = ds.client_classes[k];
    EXPECT_EQ(allowed.size(), 3u);
    EXPECT_GE(ds.train_shards[k].size(), 1u);
    for (int l : ds.train_shards[k].labels) EXPECT_TRUE(std::count(allowed.begin(), allowed.end(), l));
    for (int l : ds.test_shards[k].labels) EXPECT_TRUE(std::count(allowed.begin(), allowed.end(), l));
    EXPECT_LE(ds.train_shards[k].size(), base.train_shards[k].size());
  }
}

TEST(Federate, TrainAndTestShareClients) {
  Rng rng(1);
  const auto ds = federate(labelled_pool(200, 4), labelled_pool(80, 4), 20, PartitionMode::iid(), rng);
  ASSERT_EQ(ds.train_shards.size(), 20u);
  ASSERT_EQ(ds.test_shards.size(), 20u);
  for (std::size_t k = 0; k < 20; ++k) EXPECT_EQ(ds.train_shards[k].client_id, ds.test_shards[k].client_id);
  EXPECT_EQ(ds.num_classes, 4u);
}

TEST(ValidationSubset, SizesAndDeterminism) {
  Rng gen(3);
  SynthOptions o;
  o.n_clients = 12;
  const auto ds = synth_dataset(o, gen);
  Rng a(10), b(10);
  const auto all = validation_subset(ds.test_shards, 12, a);
  std::set<std::size_t> ids;
  for (const auto& s : all) ids.insert(s.client_id);
  EXPECT_EQ(ids.size(), 12u);

  Rng c(4);
  const auto one = validation_subset(ds.test_shards, 1, c);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_LT(one[0].client_id, 12u);

  Rng d(4), d2(4);
  const auto first = validation_subset(ds.test_shards, 5, d);
  const auto second = validation_subset(ds.test_shards, 5, d2);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(first[i].client_id, second[i].client_id);
  Rng e(1);
  EXPECT_THROW(validation_subset(ds.test_shards, 13, e), ArgumentError);
}
