#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fedsim/costs.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/report.hpp"

namespace py = pybind11;
using namespace fedsim;

namespace {

ProtocolKind protocol_arg(const std::string& name) {
  const auto kind = parse_protocol(name);
  if (!kind) throw py::value_error("unknown protocol '" + name + "'");
  return *kind;
}

// A flat vector viewed as one single-output dense layer, so that the
// aggregation rules can be applied to arbitrary parameter vectors.
ModelWeights flat_model(std::vector<double> values) {
  if (values.size() < 2) throw py::value_error("parameter vectors need at least two entries");
  const std::size_t n = values.size();
  return ModelWeights({DenseLayer{n - 1, 1}}, std::move(values));
}

std::vector<double> to_vector(const ModelWeights& w) { return {w.values().begin(), w.values().end()}; }

NodeClass node_arg(const std::string& node) {
  if (node == "edge") return default_edge_device();
  if (node == "server") return default_server();
  throw py::value_error("node must be 'edge' or 'server'");
}

py::object json_loads(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

}  // namespace

PYBIND11_MODULE(_fedsim, m) {
  m.doc() = "Simulator of centralized, blockchain and gossip federated learning";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def(
      "model_param_count",
      [](const std::string& kind, std::size_t input_dim, std::size_t classes, std::vector<std::size_t> hidden) {
        ModelConfig cfg;
        if (kind == "cnn") {
          cfg.kind = ModelKind::cnn;
        } else if (kind != "ffnn") {
          throw py::value_error("model kind must be 'ffnn' or 'cnn'");
        }
        cfg.hidden = std::move(hidden);
        return param_count(model_layers(cfg, input_dim, classes), model_input_shape(cfg, input_dim));
      },
      py::arg("kind"), py::arg("input_dim") = 784, py::arg("classes") = 10,
      py::arg("hidden") = std::vector<std::size_t>{200, 200});

  m.def(
      "fedavg",
      [](const std::vector<std::vector<double>>& models, const std::vector<std::size_t>& sizes) {
        if (models.size() != sizes.size()) throw py::value_error("one dataset size per model is required");
        std::vector<ModelUpdate> updates;
        for (std::size_t i = 0; i < models.size(); ++i) updates.push_back({flat_model(models[i]), sizes[i]});
        return to_vector(fedavg(updates));
      },
      py::arg("models"), py::arg("sizes"), "Dataset-size weighted average of parameter vectors.");

  m.def(
      "merge",
      [](std::vector<double> a, std::vector<double> b) {
        return to_vector(merge(flat_model(std::move(a)), flat_model(std::move(b))));
      },
      py::arg("w"), py::arg("w_prev"), "Element-wise mean of two parameter vectors.");

  m.def(
      "control_frame_us",
      [](std::uint64_t len_bits) {
        return std::chrono::duration<double, std::micro>(control_frame_time(len_bits, PhyParams{})).count();
      },
      py::arg("len_bits"));

  m.def(
      "packet_exchange_s",
      [](std::uint64_t payload_bytes, const std::string& node) {
        return to_seconds(packet_exchange_time(8 * payload_bytes, PhyParams{}, node_arg(node)));
      },
      py::arg("payload_bytes"), py::arg("node") = "edge",
      "One RTS/CTS/DATA/ACK exchange carrying the payload, in seconds.");

  m.def(
      "pow_energy_wh",
      [](double hash_power_watts, double block_interval, std::uint64_t n_chain) {
        ChainConfig cfg;
        cfg.total_hash_power_watts = hash_power_watts;
        cfg.block_interval = block_interval;
        return joules_to_wh(pow_energy(cfg, n_chain));
      },
      py::arg("hash_power_watts") = 1350.0, py::arg("block_interval") = 15.0, py::arg("n_chain") = 200);

  m.def(
      "comm_overhead",
      [](const std::string& protocol, std::uint64_t rounds, std::uint64_t clients, std::uint64_t w,
         std::uint64_t n_b, bool final_broadcast) {
        ScenarioParams p;
        p.rounds = rounds;
        p.clients = clients;
        p.w = w;
        p.n_b = n_b;
        p.final_broadcast = final_broadcast;
        const CommOverhead c = comm_overhead(protocol_arg(protocol), p);
        return py::make_tuple(py::int_(py::str(c.params.str())), c.gigabytes());
      },
      py::arg("protocol"), py::arg("rounds"), py::arg("clients"), py::arg("w"), py::arg("n_b") = 200,
      py::arg("final_broadcast") = false, "Transferred parameters and gigabytes over a full run.");

  m.def(
      "convergence_time",
      [](const std::string& protocol, double t_train, double t_tx_edge, double t_tx_cloud, double t_bc) {
        return convergence_time(protocol_arg(protocol), t_train, t_tx_edge, t_tx_cloud, t_bc);
      },
      py::arg("protocol"), py::arg("t_train"), py::arg("t_tx_edge"), py::arg("t_tx_cloud") = 0.0,
      py::arg("t_bc") = 0.0);

  m.def(
      "simulate_chain",
      [](std::size_t miners, double block_interval, std::size_t blocks, std::uint64_t payload_bytes,
         std::uint64_t seed, double p2p_capacity_bps) {
        ChainConfig cfg;
        cfg.n_miners = miners;
        cfg.n_nodes = std::max(cfg.n_nodes, miners);
        cfg.block_interval = block_interval;
        cfg.p2p_capacity_bps = p2p_capacity_bps;
        Rng rng = make_rng(seed, StreamId::mining);
        ChainSummary s;
        {
          py::gil_scoped_release release;
          s = simulate_chain(cfg, blocks, payload_bytes, rng);
        }
        py::dict out;
        out["blocks"] = s.blocks;
        out["attempts"] = s.attempts;
        out["forks"] = s.forks;
        out["fork_probability"] = s.fork_probability();
        out["mean_block_delay"] = s.mean_block_delay();
        out["mean_mining_interval"] = s.mean_mining_interval;
        return out;
      },
      py::arg("miners"), py::arg("block_interval"), py::arg("blocks") = 10000,
      py::arg("payload_bytes") = 160'368'000, py::arg("seed") = 1, py::arg("p2p_capacity_bps") = 100e6);

  m.def(
      "run",
      [](const std::string& config_text, const std::filesystem::path& base_dir, bool counting_only) {
        const ExperimentConfig cfg = parse_config(config_text, base_dir);
        std::vector<std::string> reports;
        {
          py::gil_scoped_release release;
          RunOptions opts;
          opts.counting_only = counting_only;
          for (const RunRecord& r : run_experiment(cfg, opts)) reports.push_back(run_report(r).dump());
        }
        py::list out;
        for (const std::string& r : reports) out.append(json_loads(r));
        return out;
      },
      py::arg("config_text"), py::arg("base_dir") = std::filesystem::path{}, py::arg("counting_only") = false,
      "Runs every cell of a YAML config and returns one report dict per run.");
}
