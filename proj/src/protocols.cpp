#include "fedsim/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedsim/errors.hpp"

namespace fedsim {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Books transmissions and training time into the ledger.
class Accountant {
 public:
  Accountant(CostLedger& ledger, const SimContext& ctx) : ledger_(ledger), ctx_(ctx) {}

  void transmit(const NodeClass& sender, std::uint64_t bytes, std::uint64_t params) {
    const double t = to_seconds(packet_exchange_time(8 * bytes, ctx_.links.phy, sender));
    const double e = tx_energy(t, sender);
    if (sender.kind == NodeKind::edge_device) {
      ledger_.params_tx_edge += params;
      ledger_.bytes_tx_edge += bytes;
      ledger_.t_tx_edge += t;
      ledger_.e_tx_edge += e;
    } else {
      ledger_.params_tx_cloud += params;
      ledger_.bytes_tx_cloud += bytes;
      ledger_.t_tx_cloud += t;
      ledger_.e_tx_cloud += e;
    }
  }

  void train_time(std::size_t client, std::size_t shard_size, std::size_t epochs) {
    const double delta = ctx_.energy.tau * static_cast<double>(epochs) * static_cast<double>(shard_size);
    const double mult = ctx_.energy.multiplier(client);
    ledger_.t_train += delta;
    ledger_.t_train_weighted += mult * delta;
    ledger_.e_train += ctx_.energy.p_cpu_watts * mult * delta;
  }

  void ops(std::uint64_t n) { ledger_.scalar_op_count += n; }

 private:
  CostLedger& ledger_;
  const SimContext& ctx_;
};

void check_run(const ProtocolConfig& cfg, const SimContext& ctx) {
  if (cfg.rounds < 1) throw ArgumentError("rounds must be >= 1");
  const std::size_t n = ctx.data.num_clients();
  if (cfg.clients_per_round < 1 || cfg.clients_per_round > n) {
    throw ArgumentError("clients per round must lie in [1, " + std::to_string(n) + "]");
  }
}

std::vector<const ClientShard*> shards_of(const std::vector<ClientShard>& all, std::span<const std::size_t> ids) {
  std::vector<const ClientShard*> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) out.push_back(&all[id]);
  return out;
}

std::vector<const ClientShard*> pointers(const std::vector<ClientShard>& shards) {
  std::vector<const ClientShard*> out;
  for (const auto& s : shards) out.push_back(&s);
  return out;
}

std::size_t total_samples(std::span<const ClientShard* const> shards) {
  std::size_t n = 0;
  for (const auto* s : shards) n += s->size();
  return n;
}

/// Scores a model or returns NaN when the trainer cannot or there is no data.
EvalResult score_or_nan(const LocalTrainer& trainer, const ModelWeights& model,
                        std::span<const ClientShard* const> shards) {
  if (total_samples(shards) == 0) return {kNaN, kNaN, 0};
  auto r = trainer.score(model, shards);
  return r ? *r : EvalResult{kNaN, kNaN, 0};
}

class Evaluator {
 public:
  Evaluator(const ProtocolConfig& cfg, const SimContext& ctx, const RngStreams& streams) : ctx_(ctx) {
    Rng rng = streams.derive(StreamId::data, 0x76616c);
    const std::size_t n = std::min(cfg.validation_clients, ctx.data.test_shards.size());
    validation_ = validation_subset(ctx.data.test_shards, n, rng);
    validation_ptrs_ = pointers(validation_);
    test_ptrs_ = pointers(ctx.data.test_shards);
  }

  double train_accuracy(const ModelWeights& model, std::span<const std::size_t> clients) const {
    const auto shards = shards_of(ctx_.data.train_shards, clients);
    return score_or_nan(ctx_.trainer, model, shards).accuracy;
  }

  EvalResult validation(const ModelWeights& model) const {
    return score_or_nan(ctx_.trainer, model, validation_ptrs_);
  }

  void finish(RunResult& result) const {
    const EvalResult test = score_or_nan(ctx_.trainer, result.final_model, test_ptrs_);
    result.test_accuracy = test.accuracy;
    result.test_loss = test.loss;
  }

 private:
  const SimContext& ctx_;
  std::vector<ClientShard> validation_;
  std::vector<const ClientShard*> validation_ptrs_;
  std::vector<const ClientShard*> test_ptrs_;
};

std::vector<std::size_t> distinct(std::vector<std::size_t> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

RunResult run_gossip(const ProtocolConfig& cfg, const SimContext& ctx, RngStreams& streams, bool with_merge) {
  check_run(cfg, ctx);
  RunResult result;
  result.kind = with_merge ? ProtocolKind::gfl : ProtocolKind::gfl_nm;
  Accountant book(result.ledger, ctx);
  const Evaluator eval(cfg, ctx, streams);
  const LocalTrainer& trainer = ctx.trainer;
  const std::size_t epochs = trainer.config().epochs;

  const ModelWeights initial = trainer.initial_model(streams.init());
  const std::uint64_t w = initial.param_count();
  const std::uint64_t model_bytes = initial.byte_size();
  // lastModel cache per client, absent means "still the initial model".
  std::vector<std::optional<ModelWeights>> last_model(ctx.data.num_clients());
  ModelWeights incoming = initial;

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    const auto selected = select_clients(ctx.data.num_clients(), cfg.clients_per_round, streams.selection());
    const auto sequence = get_sequence(selected, cfg.gfl_sequence, streams.sequence());
    RoundRecord rec;
    rec.round = t;
    rec.train_accuracy = eval.train_accuracy(incoming, distinct(sequence));

    for (std::size_t i = 0; i < sequence.size(); ++i) {
      const std::size_t k = sequence[i];
      ModelWeights local = incoming;
      if (with_merge) {
        local = merge(incoming, last_model[k] ? *last_model[k] : initial);
        book.ops(2 * w);
        last_model[k] = incoming;
      }
      const ClientShard& shard = ctx.data.train_shards[k];
      Rng shuffle = streams.derive(StreamId::shuffle, t, i);
      incoming = trainer.train(std::move(local), shard, shuffle, result.ledger, t);
      book.train_time(k, shard.size(), epochs);
      result.update_sizes.push_back(shard.size());
      book.transmit(ctx.links.edge, model_bytes, w);
      book.ops(w);
    }

    const EvalResult val = eval.validation(incoming);
    rec.validation_accuracy = val.accuracy;
    rec.validation_loss = val.loss;
    result.trajectory.push_back(rec);
    if (cfg.keep_round_models) result.round_models.push_back(incoming);
  }

  if (cfg.gfl_final_broadcast) {
    for (std::size_t i = 0; i < cfg.clients_per_round; ++i) {
      book.transmit(ctx.links.edge, model_bytes, w);
      book.ops(w);
    }
  }
  result.final_model = std::move(incoming);
  eval.finish(result);
  return result;
}

RunResult run_chain(const ProtocolConfig& cfg, const SimContext& ctx, const ChainConfig& chain_cfg,
                    RngStreams& streams, bool miner_aggregates) {
  check_run(cfg, ctx);
  const std::size_t m = cfg.clients_per_round;
  if (chain_cfg.max_tx_per_block < m) {
    throw ConfigError("blockchain.max_tx_per_block", 0,
                      "block capacity " + std::to_string(chain_cfg.max_tx_per_block) + " is below " +
                          std::to_string(m) + " clients per round");
  }
  RunResult result;
  result.kind = miner_aggregates ? ProtocolKind::bfl_aggregated : ProtocolKind::bfl;
  Accountant book(result.ledger, ctx);
  const Evaluator eval(cfg, ctx, streams);
  const LocalTrainer& trainer = ctx.trainer;
  const std::size_t epochs = trainer.config().epochs;
  Blockchain chain(chain_cfg, cfg.record_chain_trace);

  const ModelWeights initial = trainer.initial_model(streams.init());
  const std::uint64_t w = initial.param_count();
  const std::uint64_t model_bytes = initial.byte_size();
  const std::uint64_t tx_bytes = model_bytes + cfg.tx_metadata_bytes;
  const std::uint64_t header = chain_cfg.block_header_bytes;
  const std::uint64_t pow_ops = std::uint64_t{1} << chain_cfg.difficulty_bits;

  // Blocks have a fixed size: m transactions, or one aggregated model. The
  // genesis block carries the initial model and is padded to that size.
  const std::uint64_t block_bytes = miner_aggregates ? header + model_bytes : header + m * tx_bytes;
  const std::uint64_t block_params = miner_aggregates ? w : m * w;

  std::vector<ModelUpdate> latest_block{ModelUpdate{initial, 1}};
  ModelWeights global = initial;

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    const auto selected = select_clients(ctx.data.num_clients(), m, streams.selection());
    RoundRecord rec;
    rec.round = t;
    rec.train_accuracy = eval.train_accuracy(global, selected);

    std::vector<ModelUpdate> pending;
    pending.reserve(m);
    for (std::size_t k : selected) {
      book.transmit(ctx.links.server, block_bytes, block_params);
      book.ops(block_params);
      // Each client averages the m block transactions itself.
      if (!miner_aggregates) book.ops(2 * w * m);
      const ClientShard& shard = ctx.data.train_shards[k];
      Rng shuffle = streams.derive(StreamId::shuffle, t, k);
      ModelWeights local = trainer.train(global, shard, shuffle, result.ledger, t);
      book.train_time(k, shard.size(), epochs);
      result.update_sizes.push_back(shard.size());
      book.transmit(ctx.links.edge, tx_bytes, w);
      book.ops(w);
      pending.push_back(ModelUpdate{std::move(local), shard.size()});
    }

    if (miner_aggregates) {
      global = fedavg(pending);
      book.ops(2 * w * m);
    }
    chain.mine_round(BlockContent{miner_aggregates ? 1 : m, block_bytes, block_params}, streams.mining(),
                     result.ledger);
    book.ops(pow_ops + block_params * chain_cfg.n_nodes);
    if (!miner_aggregates) {
      latest_block = std::move(pending);
      global = fedavg(latest_block);
    }

    const EvalResult val = eval.validation(global);
    rec.validation_accuracy = val.accuracy;
    rec.validation_loss = val.loss;
    result.trajectory.push_back(rec);
    if (cfg.keep_round_models) result.round_models.push_back(global);
  }

  result.final_model = std::move(global);
  result.chain = chain.summary();
  result.chain_trace = chain.trace();
  result.chain_valid = chain.verify() && chain.length() == cfg.rounds;
  eval.finish(result);
  return result;
}

}  // namespace

std::string_view to_string(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::cfl:
      return "cfl";
    case ProtocolKind::bfl:
      return "bfl";
    case ProtocolKind::bfl_aggregated:
      return "bfl_aggregated";
    case ProtocolKind::gfl:
      return "gfl";
    case ProtocolKind::gfl_nm:
      return "gfl_nm";
  }
  return "?";
}

std::string_view to_string(SequenceMode mode) {
  return mode == SequenceMode::with_replacement ? "with_replacement" : "permutation";
}

std::optional<ProtocolKind> parse_protocol(std::string_view name) {
  for (ProtocolKind k : {ProtocolKind::cfl, ProtocolKind::bfl, ProtocolKind::bfl_aggregated, ProtocolKind::gfl,
                         ProtocolKind::gfl_nm}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::optional<SequenceMode> parse_sequence_mode(std::string_view name) {
  if (name == "with_replacement") return SequenceMode::with_replacement;
  if (name == "permutation") return SequenceMode::permutation;
  return std::nullopt;
}

bool uses_blockchain(ProtocolKind kind) { return kind == ProtocolKind::bfl || kind == ProtocolKind::bfl_aggregated; }

std::vector<std::size_t> select_clients(std::size_t n_total, std::size_t m, Rng& rng) {
  if (m > n_total) {
    throw ArgumentError("cannot select " + std::to_string(m) + " of " + std::to_string(n_total) + " clients");
  }
  std::vector<std::size_t> ids(n_total);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  // Partial Fisher-Yates: the first m slots are a uniform m-subset.
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_total - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(m);
  return ids;
}

std::vector<std::size_t> get_sequence(std::span<const std::size_t> selected, SequenceMode mode, Rng& rng) {
  if (selected.empty()) throw ArgumentError("cannot sequence an empty selection");
  std::vector<std::size_t> seq;
  if (mode == SequenceMode::permutation) {
    seq.assign(selected.begin(), selected.end());
    std::shuffle(seq.begin(), seq.end(), rng);
    return seq;
  }
  std::uniform_int_distribution<std::size_t> pick(0, selected.size() - 1);
  seq.reserve(selected.size());
  for (std::size_t i = 0; i < selected.size(); ++i) seq.push_back(selected[pick(rng)]);
  return seq;
}

RunResult run_cfl(const ProtocolConfig& cfg, const SimContext& ctx, RngStreams& streams) {
  check_run(cfg, ctx);
  RunResult result;
  result.kind = ProtocolKind::cfl;
  Accountant book(result.ledger, ctx);
  const Evaluator eval(cfg, ctx, streams);
  const LocalTrainer& trainer = ctx.trainer;
  const std::size_t epochs = trainer.config().epochs;

  ModelWeights global = trainer.initial_model(streams.init());
  const std::uint64_t w = global.param_count();
  const std::uint64_t model_bytes = global.byte_size();

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    const auto selected = select_clients(ctx.data.num_clients(), cfg.clients_per_round, streams.selection());
    RoundRecord rec;
    rec.round = t;
    rec.train_accuracy = eval.train_accuracy(global, selected);

    std::vector<ModelUpdate> updates;
    updates.reserve(selected.size());
    for (std::size_t k : selected) {
      book.transmit(ctx.links.server, model_bytes, w);
      book.ops(w);
      const ClientShard& shard = ctx.data.train_shards[k];
      Rng shuffle = streams.derive(StreamId::shuffle, t, k);
      ModelWeights local = trainer.train(global, shard, shuffle, result.ledger, t);
      book.train_time(k, shard.size(), epochs);
      result.update_sizes.push_back(shard.size());
      book.transmit(ctx.links.edge, model_bytes, w);
      book.ops(w);
      updates.push_back(ModelUpdate{std::move(local), shard.size()});
    }
    global = fedavg(updates);
    book.ops(2 * w * selected.size());

    const EvalResult val = eval.validation(global);
    rec.validation_accuracy = val.accuracy;
    rec.validation_loss = val.loss;
    result.trajectory.push_back(rec);
    if (cfg.keep_round_models) result.round_models.push_back(global);
  }
  result.final_model = std::move(global);
  eval.finish(result);
  return result;
}

RunResult run_gfl(const ProtocolConfig& cfg, const SimContext& ctx, RngStreams& streams) {
  return run_gossip(cfg, ctx, streams, true);
}

RunResult run_gfl_nm(const ProtocolConfig& cfg, const SimContext& ctx, RngStreams& streams) {
  return run_gossip(cfg, ctx, streams, false);
}

RunResult run_bfl(const ProtocolConfig& cfg, const SimContext& ctx, const ChainConfig& chain, RngStreams& streams) {
  return run_chain(cfg, ctx, chain, streams, false);
}

RunResult run_bfl_aggregated(const ProtocolConfig& cfg, const SimContext& ctx, const ChainConfig& chain,
                             RngStreams& streams) {
  return run_chain(cfg, ctx, chain, streams, true);
}

RunResult run_protocol(const ProtocolConfig& cfg, const SimContext& ctx, const ChainConfig* chain,
                       RngStreams& streams) {
  if (uses_blockchain(cfg.kind) && chain == nullptr) {
    throw ConfigError("blockchain", 0, "protocol " + std::string(to_string(cfg.kind)) + " needs a blockchain section");
  }
  switch (cfg.kind) {
    case ProtocolKind::cfl:
      return run_cfl(cfg, ctx, streams);
    case ProtocolKind::bfl:
      return run_bfl(cfg, ctx, *chain, streams);
    case ProtocolKind::bfl_aggregated:
      return run_bfl_aggregated(cfg, ctx, *chain, streams);
    case ProtocolKind::gfl:
      return run_gfl(cfg, ctx, streams);
    case ProtocolKind::gfl_nm:
      return run_gfl_nm(cfg, ctx, streams);
  }
  throw ArgumentError("unknown protocol");
}

}  // namespace fedsim
