#pragma once

#include <cstddef>
#include <cstdint>
#include <queue>
#include <string>
#include <vector>

#include "fedsim/ledger.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct ChainConfig {
  std::size_t n_miners = 10;
  std::size_t n_nodes = 200;
  double block_interval = 15.0;
  /// Relative hash power per miner; empty means equal shares.
  std::vector<double> hash_power;
  double total_hash_power_watts = 1350.0;
  double p2p_capacity_bps = 100e6;
  std::uint64_t block_header_bytes = 25'000;
  std::size_t max_tx_per_block = 200;
  /// Serial wired hops a block needs to reach every node (1 = full mesh).
  std::size_t hop_depth = 1;
  /// PoW difficulty exponent l; only enters the operation counts (2^l hashes
  /// per block), mining itself is sampled, not hashed.
  std::uint32_t difficulty_bits = 0;

  void validate() const;
  double rate() const noexcept { return 1.0 / block_interval; }
  /// Normalized hash-power share of each miner.
  std::vector<double> shares() const;
};

using Digest = std::uint64_t;

struct Block {
  std::uint64_t height = 0;
  Digest parent_hash = 0;
  Digest hash = 0;
  std::size_t miner_id = 0;
  std::size_t tx_count = 0;
  std::uint64_t payload_bytes = 0;
  double timestamp = 0.0;
  bool orphaned = false;
};

Digest block_digest(const Block& b);

struct MiningDraw {
  std::size_t winner = 0;
  double t_mine = 0.0;
};

/// Network-wide exponential race at rate 1/BI; the winner is drawn in
/// proportion to hash power.
MiningDraw sample_mining(const ChainConfig& cfg, Rng& rng);

/// Wired transfer time of one hop, 8·bytes / C_P2P.
double hop_time(std::uint64_t payload_bytes, const ChainConfig& cfg);

/// Time until a block is available at every node (hop_depth serial hops).
double propagate_block(const Block& block, const ChainConfig& cfg);

/// E_BC = P_h · BI · N_chain, in joules.
double pow_energy(const ChainConfig& cfg, std::uint64_t n_chain);

enum class EventKind { block_mined, competitor_mined, propagation_done };

struct SimEvent {
  double time = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::block_mined;
  std::size_t block_index = 0;
};

/// Min-queue on (time, insertion order).
class EventQueue {
 public:
  void push(double time, EventKind kind, std::size_t block_index);
  SimEvent pop();
  bool empty() const noexcept { return heap_.empty(); }
  std::size_t size() const noexcept { return heap_.size(); }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const noexcept {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
  std::uint64_t next_seq_ = 0;
};

/// One line of the exported chain trace.
struct TraceEvent {
  std::string event;  // "mining_attempt", "propagation", "fork", "accepted"
  double time = 0.0;
  std::uint64_t height = 0;
  std::size_t attempt = 0;
  std::size_t miner = 0;
  std::uint64_t payload_bytes = 0;
  double duration = 0.0;
};

/// What a block carries, for the ledger.
struct BlockContent {
  std::size_t tx_count = 0;
  std::uint64_t payload_bytes = 0;
  /// Model parameters inside the block (propagation counts them once per node).
  std::uint64_t params = 0;
};

struct RoundOutcome {
  Block block;
  std::size_t attempts = 0;
  std::size_t fork_attempts = 0;
  double t_bc = 0.0;
  /// Mining time of the accepted attempt.
  double mining_interval = 0.0;
};

struct ChainSummary {
  std::uint64_t blocks = 0;
  std::uint64_t attempts = 0;
  std::uint64_t forks = 0;
  double total_delay = 0.0;
  double mean_mining_interval = 0.0;

  double fork_probability() const noexcept {
    return attempts == 0 ? 0.0 : static_cast<double>(forks) / static_cast<double>(attempts);
  }
  double mean_block_delay() const noexcept {
    return blocks == 0 ? 0.0 : total_delay / static_cast<double>(blocks);
  }
};

/// Proof-of-work ledger driven by a discrete-event queue.
///
/// Every mining attempt races the whole network; once a block is mined it
/// floods the P2P network, and any other miner finishing inside that
/// propagation window forks the chain. A forked attempt leaves the round's
/// block invalid: both candidates are orphaned, the network waits until both
/// have propagated, and the identical transaction set is mined again. Only
/// accepted blocks extend the main chain.
class Blockchain {
 public:
  explicit Blockchain(ChainConfig cfg, bool record_trace = false);

  const ChainConfig& config() const noexcept { return cfg_; }
  const Block& tip() const noexcept { return blocks_[tip_]; }
  const Block& genesis() const noexcept { return blocks_.front(); }
  /// Main-chain blocks after genesis (N_chain).
  std::uint64_t length() const noexcept { return tip().height; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  double now() const noexcept { return now_; }
  const std::vector<TraceEvent>& trace() const noexcept { return trace_; }
  const ChainSummary& summary() const noexcept { return summary_; }

  /// Mines and propagates the next main-chain block, retrying on forks.
  RoundOutcome mine_round(const BlockContent& content, Rng& rng, CostLedger& ledger);

  /// Walks parent links from the tip to genesis checking digests and heights.
  bool verify() const;

 private:
  std::size_t add_block(Block b);
  void record(const std::string& event, double time, const Block& b, std::size_t attempt, double duration);

  ChainConfig cfg_;
  std::vector<double> shares_;
  bool record_trace_;
  std::vector<Block> blocks_;
  std::size_t tip_ = 0;
  double now_ = 0.0;
  double mining_interval_sum_ = 0.0;
  std::vector<TraceEvent> trace_;
  ChainSummary summary_;
};

/// Runs the chain alone for `n_blocks` blocks of a fixed size.
ChainSummary simulate_chain(const ChainConfig& cfg, std::size_t n_blocks, std::uint64_t payload_bytes, Rng& rng);

}  // namespace fedsim
