#include "fedsim/blockchain.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <unordered_map>

#include "fedsim/errors.hpp"

namespace fedsim {
namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_mix(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffU;
    h *= kFnvPrime;
  }
}

}  // namespace

void ChainConfig::validate() const {
  if (n_miners < 1) throw ArgumentError("blockchain needs at least one miner");
  if (n_miners > n_nodes) throw ArgumentError("miners must be a subset of the blockchain nodes");
  if (!(block_interval > 0.0)) throw ArgumentError("block interval must be > 0");
  if (!hash_power.empty()) {
    if (hash_power.size() != n_miners) throw ArgumentError("hash power list must have one entry per miner");
    for (double w : hash_power) {
      if (!(w > 0.0)) throw ArgumentError("hash power weights must be > 0");
    }
  }
  if (total_hash_power_watts < 0.0) throw ArgumentError("hashing power must be >= 0");
  if (!(p2p_capacity_bps > 0.0)) throw ArgumentError("P2P capacity must be > 0");
  if (max_tx_per_block < 1) throw ArgumentError("blocks must hold at least one transaction");
  if (hop_depth < 1) throw ArgumentError("hop depth must be >= 1");
  if (difficulty_bits > 48) throw ArgumentError("difficulty exponent above 48 is not supported");
}

std::vector<double> ChainConfig::shares() const {
  std::vector<double> w = hash_power.empty() ? std::vector<double>(n_miners, 1.0) : hash_power;
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return w;
}

Digest block_digest(const Block& b) {
  std::uint64_t h = kFnvOffset;
  fnv_mix(h, b.height);
  fnv_mix(h, b.parent_hash);
  fnv_mix(h, b.miner_id);
  fnv_mix(h, b.tx_count);
  fnv_mix(h, b.payload_bytes);
  fnv_mix(h, std::bit_cast<std::uint64_t>(b.timestamp));
  return h;
}

MiningDraw sample_mining(const ChainConfig& cfg, Rng& rng) {
  std::exponential_distribution<double> interval(cfg.rate());
  MiningDraw draw;
  draw.t_mine = interval(rng);
  if (cfg.n_miners > 1) {
    const auto shares = cfg.shares();
    std::discrete_distribution<std::size_t> pick(shares.begin(), shares.end());
    draw.winner = pick(rng);
  }
  return draw;
}

double hop_time(std::uint64_t payload_bytes, const ChainConfig& cfg) {
  return 8.0 * static_cast<double>(payload_bytes) / cfg.p2p_capacity_bps;
}

double propagate_block(const Block& block, const ChainConfig& cfg) {
  if (block.payload_bytes == 0) throw ArgumentError("cannot propagate an empty block");
  return static_cast<double>(cfg.hop_depth) * hop_time(block.payload_bytes, cfg);
}

double pow_energy(const ChainConfig& cfg, std::uint64_t n_chain) {
  return cfg.total_hash_power_watts * cfg.block_interval * static_cast<double>(n_chain);
}

void EventQueue::push(double time, EventKind kind, std::size_t block_index) {
  heap_.push(SimEvent{time, next_seq_++, kind, block_index});
}

SimEvent EventQueue::pop() {
  SimEvent e = heap_.top();
  heap_.pop();
  return e;
}

Blockchain::Blockchain(ChainConfig cfg, bool record_trace)
    : cfg_(std::move(cfg)), record_trace_(record_trace) {
  cfg_.validate();
  shares_ = cfg_.shares();
  Block genesis;
  genesis.payload_bytes = cfg_.block_header_bytes;
  genesis.hash = block_digest(genesis);
  blocks_.push_back(genesis);
}

std::size_t Blockchain::add_block(Block b) {
  b.hash = block_digest(b);
  blocks_.push_back(b);
  return blocks_.size() - 1;
}

void Blockchain::record(const std::string& event, double time, const Block& b, std::size_t attempt,
                        double duration) {
  if (!record_trace_) return;
  trace_.push_back(TraceEvent{event, time, b.height, attempt, b.miner_id, b.payload_bytes, duration});
}

RoundOutcome Blockchain::mine_round(const BlockContent& content, Rng& rng, CostLedger& ledger) {
  if (content.tx_count > cfg_.max_tx_per_block) {
    throw ArgumentError("block would hold " + std::to_string(content.tx_count) + " transactions, capacity is " +
                        std::to_string(cfg_.max_tx_per_block));
  }
  const double start = now_;
  const double block_energy = cfg_.total_hash_power_watts * cfg_.block_interval;
  const std::uint64_t deliveries = cfg_.n_nodes - 1;
  RoundOutcome outcome;

  for (;;) {
    ++outcome.attempts;
    ++summary_.attempts;
    const MiningDraw draw = sample_mining(cfg_, rng);
    const Block& parent = tip();

    Block candidate;
    candidate.height = parent.height + 1;
    candidate.parent_hash = parent.hash;
    candidate.miner_id = draw.winner;
    candidate.tx_count = content.tx_count;
    candidate.payload_bytes = content.payload_bytes;
    candidate.timestamp = now_ + draw.t_mine;
    candidate.orphaned = true;
    const std::size_t winner_index = add_block(candidate);
    const double t_prop = propagate_block(blocks_[winner_index], cfg_);

    EventQueue queue;
    queue.push(candidate.timestamp, EventKind::block_mined, winner_index);
    queue.push(candidate.timestamp + t_prop, EventKind::propagation_done, winner_index);

    // The other miners keep racing after the winner finishes; by
    // memorylessness their residual completion time is exponential at their
    // combined rate.
    const double others = 1.0 - shares_[draw.winner];
    bool forked = false;
    if (cfg_.n_miners > 1 && others > 0.0) {
      std::exponential_distribution<double> residual(cfg_.rate() * others);
      const double t_rival = residual(rng);
      if (t_rival < t_prop) {
        std::vector<double> w = shares_;
        w[draw.winner] = 0.0;
        std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
        Block rival = candidate;
        rival.miner_id = pick(rng);
        rival.timestamp = candidate.timestamp + t_rival;
        const std::size_t rival_index = add_block(rival);
        const double t_prop_rival = propagate_block(blocks_[rival_index], cfg_);
        queue.push(rival.timestamp, EventKind::competitor_mined, rival_index);
        queue.push(rival.timestamp + t_prop_rival, EventKind::propagation_done, rival_index);
      }
    }

    double settled = now_;
    while (!queue.empty()) {
      const SimEvent e = queue.pop();
      const Block& b = blocks_[e.block_index];
      switch (e.kind) {
        case EventKind::block_mined:
          record("mining_attempt", e.time, b, outcome.attempts, draw.t_mine);
          break;
        case EventKind::competitor_mined:
          forked = true;
          record("fork", e.time, b, outcome.attempts, e.time - candidate.timestamp);
          break;
        case EventKind::propagation_done:
          record("propagation", e.time, b, outcome.attempts, t_prop);
          settled = std::max(settled, e.time);
          break;
      }
    }
    now_ = settled;

    if (forked) {
      ++outcome.fork_attempts;
      ++summary_.forks;
      ledger.n_fork_attempts += 1;
      ledger.n_orphaned_blocks += 2;
      ledger.e_bc_orphaned += 2.0 * block_energy;
      ledger.bytes_p2p_orphaned += 2 * content.payload_bytes * deliveries;
      ledger.params_p2p_orphaned += 2 * content.params * cfg_.n_nodes;
      continue;
    }

    blocks_[winner_index].orphaned = false;
    tip_ = winner_index;
    outcome.block = blocks_[winner_index];
    outcome.mining_interval = draw.t_mine;
    outcome.t_bc = now_ - start;
    record("accepted", now_, blocks_[winner_index], outcome.attempts, outcome.t_bc);

    ledger.n_chain += 1;
    ledger.e_bc += block_energy;
    ledger.t_bc += outcome.t_bc;
    ledger.bytes_p2p += content.payload_bytes * deliveries;
    ledger.params_p2p += content.params * cfg_.n_nodes;

    summary_.blocks += 1;
    summary_.total_delay += outcome.t_bc;
    mining_interval_sum_ += draw.t_mine;
    summary_.mean_mining_interval = mining_interval_sum_ / static_cast<double>(summary_.blocks);
    return outcome;
  }
}

bool Blockchain::verify() const {
  std::unordered_map<Digest, std::size_t> by_hash;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (block_digest(blocks_[i]) != blocks_[i].hash) return false;
    by_hash.emplace(blocks_[i].hash, i);
  }
  std::size_t cursor = tip_;
  while (blocks_[cursor].height > 0) {
    const Block& b = blocks_[cursor];
    if (b.orphaned) return false;
    const auto it = by_hash.find(b.parent_hash);
    if (it == by_hash.end()) return false;
    if (blocks_[it->second].height + 1 != b.height) return false;
    cursor = it->second;
  }
  return cursor == 0;
}

ChainSummary simulate_chain(const ChainConfig& cfg, std::size_t n_blocks, std::uint64_t payload_bytes, Rng& rng) {
  Blockchain chain(cfg);
  CostLedger ledger;
  const BlockContent content{0, payload_bytes, 0};
  for (std::size_t i = 0; i < n_blocks; ++i) chain.mine_round(content, rng, ledger);
  return chain.summary();
}

}  // namespace fedsim
