#include "fedsim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include "fedsim/errors.hpp"

namespace fedsim {
namespace {

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

struct AxisValue {
  std::string tag;
  std::function<void(ExperimentConfig&)> apply;
};

std::vector<std::vector<AxisValue>> sweep_axes(const ExperimentConfig& cfg) {
  std::vector<std::vector<AxisValue>> axes;
  if (!cfg.sweep) return axes;
  const SweepAxes& s = *cfg.sweep;
  auto add = [&](const auto& values, const std::string& prefix, auto setter) {
    if (values.empty()) return;
    std::vector<AxisValue> axis;
    for (auto v : values) {
      axis.push_back({prefix + num(static_cast<double>(v)), [=](ExperimentConfig& c) { setter(c, v); }});
    }
    axes.push_back(std::move(axis));
  };
  add(s.rounds, "R", [](ExperimentConfig& c, std::size_t v) { c.protocol.rounds = v; });
  add(s.epochs, "E", [](ExperimentConfig& c, std::size_t v) { c.train.epochs = v; });
  add(s.clients_per_round, "m", [](ExperimentConfig& c, std::size_t v) { c.protocol.clients_per_round = v; });
  add(s.block_interval, "BI", [](ExperimentConfig& c, double v) {
    if (c.chain) c.chain->block_interval = v;
  });
  add(s.miners, "Nm", [](ExperimentConfig& c, std::size_t v) {
    if (!c.chain) return;
    c.chain->n_miners = v;
    // A per-miner hash power list cannot follow a changing miner count.
    if (c.chain->hash_power.size() != v) c.chain->hash_power.clear();
  });
  return axes;
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

std::vector<Cell> expand_cells(const ExperimentConfig& cfg) {
  const auto axes = sweep_axes(cfg);
  std::vector<std::vector<const AxisValue*>> combos{{}};
  for (const auto& axis : axes) {
    std::vector<std::vector<const AxisValue*>> next;
    for (const auto& combo : combos) {
      for (const auto& v : axis) {
        auto c = combo;
        c.push_back(&v);
        next.push_back(std::move(c));
      }
    }
    combos = std::move(next);
  }

  std::vector<Cell> cells;
  auto make = [&](const std::string& base, ProtocolKind kind, bool chain_study) {
    for (const auto& combo : combos) {
      Cell cell;
      cell.index = cells.size();
      cell.kind = kind;
      cell.chain_study = chain_study;
      cell.config = cfg;
      cell.config.sweep.reset();
      cell.config.protocols = {kind};
      cell.name = base;
      for (const AxisValue* v : combo) {
        v->apply(cell.config);
        cell.name += "_" + v->tag;
      }
      cells.push_back(std::move(cell));
    }
  };
  if (cfg.chain_study) {
    make("chain", ProtocolKind::bfl, true);
  } else {
    for (ProtocolKind kind : cfg.protocols) make(std::string(to_string(kind)), kind, false);
  }
  return cells;
}

FederatedDataset build_dataset(const ExperimentConfig& cfg, RngStreams& streams) {
  const DatasetConfig& d = cfg.dataset;
  Rng& rng = streams.data();
  if (d.source == DatasetSource::synthetic) {
    SynthOptions opts = d.synthetic;
    opts.n_clients = d.clients;
    FederatedDataset ds = synth_dataset(opts, rng);
    if (d.partition.kind == PartitionKind::class_restricted) restrict_classes(ds, d.partition.classes_per_client, rng);
    return ds;
  }
  const SamplePool train = load_idx(d.train_images, d.train_labels);
  const SamplePool test = load_idx(d.test_images, d.test_labels);
  return federate(train, test, d.clients, d.partition, rng);
}

std::optional<TensorShape> model_input_shape(const ModelConfig& model, std::size_t input_dim) {
  if (model.kind != ModelKind::cnn) return std::nullopt;
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(input_dim))));
  if (side * side != input_dim) {
    throw ConfigError("model.kind", 0, "cnn needs square single-channel images, got " + std::to_string(input_dim) +
                                           " features");
  }
  return TensorShape{side, side, 1};
}

std::vector<LayerSpec> model_layers(const ModelConfig& model, std::size_t input_dim, std::size_t classes) {
  std::vector<LayerSpec> layers;
  if (model.kind == ModelKind::cnn) {
    layers = {ConvLayer{5, 5, 1, 32}, PoolLayer{}, ConvLayer{5, 5, 32, 64}, PoolLayer{}, DenseLayer{0, 512},
              DenseLayer{512, classes}};
    return layers;
  }
  std::size_t in = input_dim;
  for (std::size_t h : model.hidden) {
    layers.push_back(DenseLayer{in, h});
    in = h;
  }
  layers.push_back(DenseLayer{in, classes});
  return layers;
}

std::unique_ptr<LocalTrainer> build_trainer(const ExperimentConfig& cfg, std::size_t input_dim, std::size_t classes,
                                            bool counting_only) {
  const ModelConfig& model = cfg.model;
  if (counting_only || model.counting_only || model.kind == ModelKind::cnn) {
    return std::make_unique<CountingTrainer>(model_layers(model, input_dim, classes), cfg.train,
                                             model_input_shape(model, input_dim));
  }
  return std::make_unique<SgdTrainer>(Network::classifier(input_dim, model.hidden, classes), cfg.train);
}

std::pair<std::size_t, std::size_t> dataset_shape(const DatasetConfig& d) {
  if (d.source == DatasetSource::synthetic) return {d.synthetic.feature_dim, d.synthetic.num_classes};
  const IdxImagesHeader header = read_idx_header(d.train_images);
  const auto labels = load_idx_labels(d.train_labels);
  const int max_label = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  return {header.rows * header.cols, static_cast<std::size_t>(max_label) + 1};
}

std::size_t nominal_max_shard(const DatasetConfig& d) {
  if (d.source == DatasetSource::synthetic) return d.synthetic.samples_per_client;
  return ceil_div(read_idx_header(d.train_images).count, d.clients);
}

ScenarioParams scenario_for(const ExperimentConfig& cfg, ProtocolKind kind, std::uint64_t w, std::uint64_t d_max) {
  ScenarioParams p;
  p.rounds = cfg.protocol.rounds;
  p.clients = cfg.protocol.clients_per_round;
  p.epochs = cfg.train.epochs;
  p.batch_size = cfg.train.batch_size;
  p.d_max = d_max;
  p.w = w;
  p.final_broadcast = cfg.protocol.gfl_final_broadcast;
  p.tx_metadata_bytes = cfg.protocol.tx_metadata_bytes;
  p.p_cpu = cfg.energy.p_cpu_watts;
  p.tau = cfg.energy.tau;
  const ChainConfig chain = cfg.chain.value_or(ChainConfig{});
  p.n_b = chain.n_nodes;
  p.difficulty_bits = chain.difficulty_bits;
  p.header_bytes = chain.block_header_bytes;
  p.p_h = chain.total_hash_power_watts;
  p.block_interval = chain.block_interval;
  p.p_tx_edge = cfg.links.edge.tx_power_watts();
  p.p_tx_cloud = cfg.links.server.tx_power_watts();

  const std::uint64_t model_bytes = w * kParamBytes;
  const std::uint64_t tx_bytes = model_bytes + p.tx_metadata_bytes;
  std::uint64_t download = model_bytes;
  if (kind == ProtocolKind::bfl) download = p.header_bytes + p.clients * tx_bytes;
  if (kind == ProtocolKind::bfl_aggregated) download = p.header_bytes + model_bytes;
  const std::uint64_t upload = uses_blockchain(kind) ? tx_bytes : model_bytes;
  p.t_exchange_edge = to_seconds(packet_exchange_time(8 * upload, cfg.links.phy, cfg.links.edge));
  p.t_exchange_cloud = to_seconds(packet_exchange_time(8 * download, cfg.links.phy, cfg.links.server));
  return p;
}

RunRecord run_cell(const Cell& cell, bool counting_only) {
  RunRecord rec;
  rec.cell = cell;
  const ExperimentConfig& cfg = cell.config;
  try {
    RngStreams streams(cfg.seed);
    if (cell.chain_study) {
      if (!cfg.chain || !cfg.chain_study) throw ConfigError("chain_study", 0, "needs a blockchain section");
      rec.chain_study = simulate_chain(*cfg.chain, cfg.chain_study->blocks, cfg.chain_study->payload_bytes,
                                       streams.mining());
      return rec;
    }
    const FederatedDataset data = build_dataset(cfg, streams);
    const auto trainer = build_trainer(cfg, data.feature_dim, data.num_classes, counting_only);

    ProtocolConfig pc = cfg.protocol;
    pc.kind = cell.kind;
    pc.validation_clients = std::min(pc.validation_clients, data.num_clients());
    const SimContext ctx{data, *trainer, cfg.links, cfg.energy};
    const ChainConfig* chain = cfg.chain ? &*cfg.chain : nullptr;
    rec.result = run_protocol(pc, ctx, chain, streams);

    const RunResult& r = *rec.result;
    rec.scenario = scenario_for(cfg, cell.kind, trainer->param_count(), data.max_shard_size());
    rec.energy = energy_total(cell.kind, r.ledger, rec.scenario);
    rec.convergence_time = convergence_time(cell.kind, r.ledger);
    rec.reconcile = reconcile(r.ledger, rec.scenario, cell.kind, r.update_sizes);
  } catch (const ConfigError& e) {
    rec.failure = FailureKind::config;
    rec.error = e.what();
  } catch (const std::exception& e) {
    rec.failure = FailureKind::run;
    rec.error = e.what();
  }
  return rec;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  const std::vector<Cell> cells = expand_cells(cfg);
  std::vector<RunRecord> records(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      records[i] = run_cell(cells[i], opts.counting_only);
      if (opts.on_record) {
        const std::lock_guard<std::mutex> lock(report_mutex);
        opts.on_record(records[i]);
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(opts.jobs, 1, std::max<std::size_t>(cells.size(), 1));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  return records;
}

}  // namespace fedsim
