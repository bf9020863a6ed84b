#include "fedsim/rng.hpp"

namespace fedsim {

Rng make_rng(std::uint64_t master_seed, StreamId id, std::uint64_t a, std::uint64_t b) {
  // seed_seq is fully specified by the standard, so the expansion is portable.
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(id),
                    static_cast<std::uint32_t>(a),
                    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

RngStreams::RngStreams(std::uint64_t master_seed)
    : master_seed_(master_seed),
      selection_(make_rng(master_seed, StreamId::selection)),
      sequence_(make_rng(master_seed, StreamId::sequence)),
      mining_(make_rng(master_seed, StreamId::mining)),
      data_(make_rng(master_seed, StreamId::data)),
      init_(make_rng(master_seed, StreamId::init)) {}

Rng RngStreams::derive(StreamId id, std::uint64_t a, std::uint64_t b) const {
  return make_rng(master_seed_, id, a + 1, b + 1);
}

}  // namespace fedsim
