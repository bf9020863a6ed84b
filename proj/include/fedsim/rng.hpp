#pragma once

#include <cstdint>
#include <random>

namespace fedsim {

using Rng = std::mt19937_64;

enum class StreamId : std::uint32_t {
  selection = 1,
  sequence = 2,
  mining = 3,
  data = 4,
  init = 5,
  shuffle = 6,
};

/// Independent generator per subsystem, all derived from one master seed, so
/// that toggling one subsystem (e.g. the blockchain) never perturbs another.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t master_seed);

  std::uint64_t master_seed() const noexcept { return master_seed_; }

  Rng& selection() noexcept { return selection_; }
  Rng& sequence() noexcept { return sequence_; }
  Rng& mining() noexcept { return mining_; }
  Rng& data() noexcept { return data_; }
  Rng& init() noexcept { return init_; }

  /// Fresh engine keyed by (stream, a, b); independent of how far the named
  /// streams have advanced. Used for per-(round, client) batch shuffling.
  Rng derive(StreamId id, std::uint64_t a = 0, std::uint64_t b = 0) const;

 private:
  std::uint64_t master_seed_;
  Rng selection_;
  Rng sequence_;
  Rng mining_;
  Rng data_;
  Rng init_;
};

Rng make_rng(std::uint64_t master_seed, StreamId id, std::uint64_t a = 0, std::uint64_t b = 0);

}  // namespace fedsim
