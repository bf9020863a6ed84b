#include "fedsim/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <string>

#include "fedsim/errors.hpp"

namespace fedsim {
namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::string& path) {
  if (offset + 4 > bytes.size()) throw FormatError(path, "truncated header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

ClientShard filter_shard(const ClientShard& shard, const std::vector<int>& keep) {
  ClientShard out;
  out.client_id = shard.client_id;
  out.feature_dim = shard.feature_dim;
  for (std::size_t i = 0; i < shard.size(); ++i) {
    if (std::binary_search(keep.begin(), keep.end(), shard.labels[i])) {
      const auto row = shard.row(i);
      out.features.insert(out.features.end(), row.begin(), row.end());
      out.labels.push_back(shard.labels[i]);
    }
  }
  return out;
}

std::vector<int> draw_class_subset(const ClientShard& shard, std::size_t k, std::size_t num_classes, Rng& rng) {
  std::vector<int> classes(num_classes);
  std::iota(classes.begin(), classes.end(), 0);
  const std::set<int> present(shard.labels.begin(), shard.labels.end());
  // Rejection keeps the draw uniform over the k-subsets that leave the client
  // at least one sample.
  for (;;) {
    std::shuffle(classes.begin(), classes.end(), rng);
    std::vector<int> subset(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(subset.begin(), subset.end());
    const bool overlaps = std::any_of(subset.begin(), subset.end(), [&](int c) { return present.count(c) > 0; });
    if (overlaps || present.empty()) return subset;
  }
}

std::vector<std::vector<double>> class_means(std::size_t num_classes, std::size_t dim, double separation, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> dirs;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<double> v(dim);
    for (;;) {
      for (double& x : v) x = gauss(rng);
      if (num_classes <= dim) {
        // Gram-Schmidt so that all mean pairs are exactly `separation` apart.
        for (const auto& u : dirs) {
          const double proj = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
          for (std::size_t k = 0; k < dim; ++k) v[k] -= proj * u[k];
        }
      }
      const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
      if (norm > 1e-9) {
        for (double& x : v) x /= norm;
        break;
      }
    }
    dirs.push_back(v);
  }
  const double radius = separation / std::sqrt(2.0);
  for (auto& d : dirs) {
    for (double& x : d) x *= radius;
  }
  return dirs;
}

ClientShard synth_shard(std::size_t client_id, std::size_t n, const std::vector<std::vector<double>>& means,
                        std::size_t dim, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  ClientShard shard;
  shard.client_id = client_id;
  shard.feature_dim = dim;
  shard.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) shard.labels[i] = static_cast<int>(i % means.size());
  std::shuffle(shard.labels.begin(), shard.labels.end(), rng);
  shard.features.resize(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& mu = means[static_cast<std::size_t>(shard.labels[i])];
    for (std::size_t k = 0; k < dim; ++k) shard.features[i * dim + k] = mu[k] + gauss(rng);
  }
  return shard;
}

}  // namespace

std::size_t SamplePool::num_classes() const noexcept {
  if (labels.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

std::size_t FederatedDataset::train_samples() const noexcept {
  std::size_t n = 0;
  for (const auto& s : train_shards) n += s.size();
  return n;
}

std::size_t FederatedDataset::test_samples() const noexcept {
  std::size_t n = 0;
  for (const auto& s : test_shards) n += s.size();
  return n;
}

std::size_t FederatedDataset::max_shard_size() const noexcept {
  std::size_t n = 0;
  for (const auto& s : train_shards) n = std::max(n, s.size());
  return n;
}

FederatedDataset synth_dataset(const SynthOptions& opts, Rng& rng) {
  if (opts.n_clients < 1 || opts.samples_per_client < 1 || opts.num_classes < 1 || opts.feature_dim < 1) {
    throw ArgumentError("synthetic dataset sizes must all be >= 1");
  }
  FederatedDataset ds;
  ds.num_classes = opts.num_classes;
  ds.feature_dim = opts.feature_dim;
  const auto means = class_means(opts.num_classes, opts.feature_dim, opts.separation, rng);
  for (std::size_t c = 0; c < opts.n_clients; ++c) {
    ds.train_shards.push_back(synth_shard(c, opts.samples_per_client, means, opts.feature_dim, rng));
  }
  for (std::size_t c = 0; c < opts.n_clients; ++c) {
    ds.test_shards.push_back(synth_shard(c, opts.test_samples_per_client, means, opts.feature_dim, rng));
  }
  return ds;
}

IdxImagesHeader read_idx_header(const std::filesystem::path& images_path) {
  const std::string path = images_path.string();
  std::ifstream in(images_path, std::ios::binary);
  if (!in) throw FormatError(path, "cannot open file");
  std::vector<unsigned char> head(16);
  in.read(reinterpret_cast<char*>(head.data()), 16);
  head.resize(static_cast<std::size_t>(in.gcount()));
  if (read_be32(head, 0, path) != kIdxImagesMagic) throw FormatError(path, "bad magic, expected 0x00000803");
  return {read_be32(head, 4, path), read_be32(head, 8, path), read_be32(head, 12, path)};
}

std::vector<int> load_idx_labels(const std::filesystem::path& labels_path) {
  const std::string path = labels_path.string();
  const auto bytes = read_file(labels_path);
  if (read_be32(bytes, 0, path) != kIdxLabelsMagic) throw FormatError(path, "bad magic, expected 0x00000801");
  const std::size_t count = read_be32(bytes, 4, path);
  if (bytes.size() < 8 + count) throw FormatError(path, "truncated payload");
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(bytes[8 + i]);
  return labels;
}

SamplePool load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const std::string ipath = images_path.string();
  const std::string lpath = labels_path.string();
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);

  if (read_be32(images, 0, ipath) != kIdxImagesMagic) throw FormatError(ipath, "bad magic, expected 0x00000803");
  if (read_be32(labels, 0, lpath) != kIdxLabelsMagic) throw FormatError(lpath, "bad magic, expected 0x00000801");

  const std::size_t count = read_be32(images, 4, ipath);
  const std::size_t rows = read_be32(images, 8, ipath);
  const std::size_t cols = read_be32(images, 12, ipath);
  const std::size_t label_count = read_be32(labels, 4, lpath);
  const std::size_t dim = rows * cols;

  if (images.size() < 16 + count * dim) throw FormatError(ipath, "truncated payload");
  if (labels.size() < 8 + label_count) throw FormatError(lpath, "truncated payload");
  if (count != label_count) {
    throw FormatError(lpath, "holds " + std::to_string(label_count) + " labels but " + ipath + " holds " +
                                 std::to_string(count) + " images");
  }

  SamplePool pool;
  pool.feature_dim = dim;
  pool.features.resize(count * dim);
  for (std::size_t i = 0; i < count * dim; ++i) pool.features[i] = static_cast<double>(images[16 + i]) / 255.0;
  pool.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) pool.labels[i] = static_cast<int>(labels[8 + i]);
  return pool;
}

std::vector<ClientShard> partition(const SamplePool& pool, std::size_t n_clients, PartitionMode mode, Rng& rng) {
  if (n_clients < 1) throw ArgumentError("need at least one client");
  if (pool.size() < n_clients) {
    throw PartitionError("pool of " + std::to_string(pool.size()) + " samples cannot give each of " +
                         std::to_string(n_clients) + " clients a sample");
  }
  const std::size_t num_classes = pool.num_classes();
  if (mode.kind == PartitionKind::class_restricted &&
      (mode.classes_per_client < 1 || mode.classes_per_client > num_classes)) {
    throw ArgumentError("classes per client must lie in [1, " + std::to_string(num_classes) + "]");
  }

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<ClientShard> shards(n_clients);
  const std::size_t base = pool.size() / n_clients;
  const std::size_t extra = pool.size() % n_clients;
  std::size_t cursor = 0;
  for (std::size_t c = 0; c < n_clients; ++c) {
    ClientShard& s = shards[c];
    s.client_id = c;
    s.feature_dim = pool.feature_dim;
    const std::size_t take = base + (c < extra ? 1 : 0);
    for (std::size_t k = 0; k < take; ++k, ++cursor) {
      const std::size_t i = order[cursor];
      const auto* row = pool.features.data() + i * pool.feature_dim;
      s.features.insert(s.features.end(), row, row + pool.feature_dim);
      s.labels.push_back(pool.labels[i]);
    }
  }

  if (mode.kind == PartitionKind::class_restricted) {
    for (ClientShard& s : shards) s = filter_shard(s, draw_class_subset(s, mode.classes_per_client, num_classes, rng));
  }
  return shards;
}

void restrict_classes(FederatedDataset& dataset, std::size_t k, Rng& rng) {
  if (k < 1 || k > dataset.num_classes) {
    throw ArgumentError("classes per client must lie in [1, " + std::to_string(dataset.num_classes) + "]");
  }
  dataset.client_classes.clear();
  for (std::size_t c = 0; c < dataset.train_shards.size(); ++c) {
    auto subset = draw_class_subset(dataset.train_shards[c], k, dataset.num_classes, rng);
    dataset.train_shards[c] = filter_shard(dataset.train_shards[c], subset);
    if (c < dataset.test_shards.size()) dataset.test_shards[c] = filter_shard(dataset.test_shards[c], subset);
    dataset.client_classes.push_back(std::move(subset));
  }
}

FederatedDataset federate(const SamplePool& train, const SamplePool& test, std::size_t n_clients,
                          PartitionMode mode, Rng& rng) {
  if (train.feature_dim != test.feature_dim) throw ArgumentError("train and test pools differ in feature size");
  FederatedDataset ds;
  ds.feature_dim = train.feature_dim;
  ds.num_classes = std::max(train.num_classes(), test.num_classes());
  ds.train_shards = partition(train, n_clients, PartitionMode::iid(), rng);
  ds.test_shards = partition(test, n_clients, PartitionMode::iid(), rng);
  if (mode.kind == PartitionKind::class_restricted) restrict_classes(ds, mode.classes_per_client, rng);
  return ds;
}

std::vector<ClientShard> validation_subset(std::span<const ClientShard> test_shards, std::size_t n, Rng& rng) {
  if (n > test_shards.size()) {
    throw ArgumentError("validation subset of " + std::to_string(n) + " clients requested from " +
                        std::to_string(test_shards.size()));
  }
  std::vector<std::size_t> order(test_shards.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<ClientShard> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(test_shards[order[i]]);
  return out;
}

}  // namespace fedsim
