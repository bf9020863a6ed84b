#include "fedsim/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t line_of(const YAML::Node& n) {
  const auto mark = n.Mark();
  return mark.line >= 0 ? static_cast<std::size_t>(mark.line) + 1 : 0;
}

/// One mapping of the document. Every key read is remembered so that
/// `finish` can reject the rest as unknown.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (!node_.IsMap()) throw ConfigError(path_, line_of(node_), "expected a mapping");
  }

  std::size_t line() const { return line_of(node_); }
  const std::string& path() const { return path_; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return static_cast<bool>(node_[key]);
  }

  std::size_t line(const std::string& key) const {
    const YAML::Node n = node_[key];
    return n ? line_of(n) : line_of(node_);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return node_[key];
  }

  std::optional<Section> child(const std::string& key) {
    YAML::Node n = raw(key);
    if (!n || n.IsNull()) return std::nullopt;
    return Section(n, field(key));
  }

  template <class T>
  void read(const std::string& key, T& out) {
    YAML::Node n = raw(key);
    if (!n) return;
    out = convert<T>(n, field(key));
  }

  void finish() const {
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(field(key), line_of(kv.first), "unknown key '" + key + "'");
    }
  }

  template <class T>
  static T convert(const YAML::Node& n, const std::string& field);

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class T>
T scalar_as(const YAML::Node& n, const std::string& field, const char* expected) {
  if (!n.IsScalar()) throw ConfigError(field, line_of(n), std::string("expected ") + expected);
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(field, line_of(n), std::string("expected ") + expected + ", got '" + n.Scalar() + "'");
  }
}

template <>
std::size_t Section::convert<std::size_t>(const YAML::Node& n, const std::string& field) {
  const auto v = scalar_as<long long>(n, field, "a non-negative integer");
  if (v < 0) throw ConfigError(field, line_of(n), "must be >= 0");
  return static_cast<std::size_t>(v);
}

template <>
double Section::convert<double>(const YAML::Node& n, const std::string& field) {
  const auto v = scalar_as<double>(n, field, "a number");
  if (!std::isfinite(v)) throw ConfigError(field, line_of(n), "must be finite");
  return v;
}

template <>
bool Section::convert<bool>(const YAML::Node& n, const std::string& field) {
  return scalar_as<bool>(n, field, "true or false");
}

template <>
std::string Section::convert<std::string>(const YAML::Node& n, const std::string& field) {
  return scalar_as<std::string>(n, field, "a string");
}

template <>
fs::path Section::convert<fs::path>(const YAML::Node& n, const std::string& field) {
  return fs::path(scalar_as<std::string>(n, field, "a path"));
}

template <class T>
std::vector<T> convert_list(const YAML::Node& n, const std::string& field) {
  if (!n.IsSequence()) throw ConfigError(field, line_of(n), "expected a list");
  std::vector<T> out;
  for (const auto& item : n) out.push_back(Section::convert<T>(item, field));
  return out;
}

template <>
std::vector<std::size_t> Section::convert<std::vector<std::size_t>>(const YAML::Node& n, const std::string& field) {
  return convert_list<std::size_t>(n, field);
}

template <>
std::vector<double> Section::convert<std::vector<double>>(const YAML::Node& n, const std::string& field) {
  return convert_list<double>(n, field);
}

void read_micros(Section& s, const std::string& key, Nanos& out) {
  double us = to_seconds(out) * 1e6;
  s.read(key, us);
  if (!(us > 0.0)) throw ConfigError(s.field(key), s.line(key), "must be > 0");
  out = Nanos(std::llround(us * 1000.0));
}

void read_node(Section& s, NodeClass& node) {
  s.read("tx_power_dbm", node.tx_power_dbm);
  std::size_t bits = node.mcs_bits_per_symbol;
  s.read("bits_per_symbol", bits);
  if (bits == 0) throw ConfigError(s.field("bits_per_symbol"), s.line("bits_per_symbol"), "must be >= 1");
  node.mcs_bits_per_symbol = bits;
  s.finish();
}

template <class T>
void require_positive(Section& s, const std::string& key, T value) {
  if (!(value > T{0})) throw ConfigError(s.field(key), s.line(key), "must be > 0");
}

void parse_dataset(Section s, DatasetConfig& d, const fs::path& base) {
  std::string source = "synthetic";
  s.read("source", source);
  if (source == "synthetic") {
    d.source = DatasetSource::synthetic;
  } else if (source == "idx") {
    d.source = DatasetSource::idx;
  } else {
    throw ConfigError(s.field("source"), s.line("source"), "expected 'synthetic' or 'idx', got '" + source + "'");
  }
  s.read("clients", d.clients);
  d.synthetic.n_clients = d.clients;
  s.read("samples_per_client", d.synthetic.samples_per_client);
  s.read("test_samples_per_client", d.synthetic.test_samples_per_client);
  s.read("classes", d.synthetic.num_classes);
  s.read("feature_dim", d.synthetic.feature_dim);
  s.read("separation", d.synthetic.separation);
  require_positive(s, "clients", d.clients);
  if (d.source == DatasetSource::synthetic) {
    require_positive(s, "samples_per_client", d.synthetic.samples_per_client);
    require_positive(s, "classes", d.synthetic.num_classes);
    require_positive(s, "feature_dim", d.synthetic.feature_dim);
  }

  for (auto [key, target] : {std::pair{"train_images", &d.train_images}, std::pair{"train_labels", &d.train_labels},
                             std::pair{"test_images", &d.test_images}, std::pair{"test_labels", &d.test_labels}}) {
    if (!s.has(key)) {
      if (d.source == DatasetSource::idx) throw ConfigError(s.field(key), s.line(), "required for idx datasets");
      continue;
    }
    s.read(key, *target);
    if (target->is_relative() && !base.empty()) *target = base / *target;
    if (d.source == DatasetSource::idx && !fs::exists(*target)) {
      throw ConfigError(s.field(key), s.line(key), "file not found: " + target->string());
    }
  }

  std::string partition = "iid";
  s.read("partition", partition);
  std::size_t k = 3;
  s.read("classes_per_client", k);
  if (partition == "iid") {
    d.partition = PartitionMode::iid();
  } else if (partition == "class_restricted") {
    if (k < 1) throw ConfigError(s.field("classes_per_client"), s.line("classes_per_client"), "must be >= 1");
    if (d.source == DatasetSource::synthetic && k > d.synthetic.num_classes) {
      throw ConfigError(s.field("classes_per_client"), s.line("classes_per_client"),
                        "exceeds the number of classes");
    }
    d.partition = PartitionMode::class_restricted(k);
  } else {
    throw ConfigError(s.field("partition"), s.line("partition"),
                      "expected 'iid' or 'class_restricted', got '" + partition + "'");
  }
  s.finish();
}

void parse_model(Section s, ModelConfig& m) {
  std::string kind = "ffnn";
  s.read("kind", kind);
  if (kind == "ffnn") {
    m.kind = ModelKind::ffnn;
  } else if (kind == "cnn") {
    m.kind = ModelKind::cnn;
  } else {
    throw ConfigError(s.field("kind"), s.line("kind"), "expected 'ffnn' or 'cnn', got '" + kind + "'");
  }
  s.read("hidden", m.hidden);
  for (std::size_t h : m.hidden) {
    if (h == 0) throw ConfigError(s.field("hidden"), s.line("hidden"), "layer widths must be >= 1");
  }
  s.read("counting_only", m.counting_only);
  s.finish();
}

void parse_federated(Section s, TrainConfig& t, ProtocolConfig& p) {
  s.read("rounds", p.rounds);
  s.read("clients_per_round", p.clients_per_round);
  s.read("epochs", t.epochs);
  s.read("batch_size", t.batch_size);
  s.read("learning_rate", t.eta);
  require_positive(s, "rounds", p.rounds);
  require_positive(s, "clients_per_round", p.clients_per_round);
  require_positive(s, "epochs", t.epochs);
  require_positive(s, "batch_size", t.batch_size);
  if (!(t.eta >= 0.0)) throw ConfigError(s.field("learning_rate"), s.line("learning_rate"), "must be >= 0");
  std::string seq(to_string(p.gfl_sequence));
  s.read("gfl_sequence", seq);
  const auto mode = parse_sequence_mode(seq);
  if (!mode) {
    throw ConfigError(s.field("gfl_sequence"), s.line("gfl_sequence"),
                      "expected 'with_replacement' or 'permutation', got '" + seq + "'");
  }
  p.gfl_sequence = *mode;
  s.read("gfl_final_broadcast", p.gfl_final_broadcast);
  s.read("tx_metadata_bytes", p.tx_metadata_bytes);
  s.read("validation_clients", p.validation_clients);
  require_positive(s, "validation_clients", p.validation_clients);
  s.finish();
}

void parse_blockchain(Section s, ChainConfig& c, bool& record_trace) {
  s.read("miners", c.n_miners);
  s.read("nodes", c.n_nodes);
  s.read("block_interval", c.block_interval);
  s.read("hash_power", c.hash_power);
  s.read("hash_power_watts", c.total_hash_power_watts);
  double mbps = c.p2p_capacity_bps / 1e6;
  s.read("p2p_capacity_mbps", mbps);
  c.p2p_capacity_bps = mbps * 1e6;
  s.read("header_bytes", c.block_header_bytes);
  s.read("max_tx_per_block", c.max_tx_per_block);
  s.read("hop_depth", c.hop_depth);
  std::size_t bits = c.difficulty_bits;
  s.read("difficulty_bits", bits);
  c.difficulty_bits = static_cast<std::uint32_t>(std::min<std::size_t>(bits, 1000));
  s.read("record_trace", record_trace);
  try {
    c.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(s.path(), s.line(), e.what());
  }
  s.finish();
}

void parse_communication(Section s, LinkModel& links) {
  PhyParams& phy = links.phy;
  read_micros(s, "sigma_leg_us", phy.sigma_leg);
  read_micros(s, "sigma_data_us", phy.sigma_data);
  read_micros(s, "slot_us", phy.t_e);
  read_micros(s, "sifs_us", phy.t_sifs);
  read_micros(s, "difs_us", phy.t_difs);
  read_micros(s, "t_phy_us", phy.t_phy);
  read_micros(s, "t_he_su_us", phy.t_hesu);
  s.read("control_bits_per_symbol", phy.bits_per_symbol_control);
  s.read("l_rts", phy.l_rts);
  s.read("l_cts", phy.l_cts);
  s.read("l_ack", phy.l_ack);
  s.read("l_service", phy.l_sf);
  s.read("l_mac", phy.l_mac);
  std::size_t cw = phy.cw, n_sc = phy.n_sc, n_ss = phy.n_ss;
  s.read("cw", cw);
  s.read("n_sc", n_sc);
  s.read("n_ss", n_ss);
  phy.cw = static_cast<std::uint32_t>(cw);
  phy.n_sc = static_cast<std::uint32_t>(n_sc);
  phy.n_ss = static_cast<std::uint32_t>(n_ss);
  s.read("mean_backoff", phy.mean_backoff);
  try {
    phy.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(s.path(), s.line(), e.what());
  }
  if (auto edge = s.child("edge")) read_node(*edge, links.edge);
  if (auto server = s.child("server")) read_node(*server, links.server);
  s.finish();
}

void parse_energy(Section s, EnergyModel& e) {
  s.read("p_cpu_watts", e.p_cpu_watts);
  s.read("tau", e.tau);
  s.read("cpu_multipliers", e.cpu_multipliers);
  if (e.p_cpu_watts < 0.0) throw ConfigError(s.field("p_cpu_watts"), s.line("p_cpu_watts"), "must be >= 0");
  if (e.tau < 0.0) throw ConfigError(s.field("tau"), s.line("tau"), "must be >= 0");
  for (double m : e.cpu_multipliers) {
    if (m < 0.0) throw ConfigError(s.field("cpu_multipliers"), s.line("cpu_multipliers"), "must be >= 0");
  }
  s.finish();
}

template <class T>
void read_axis(Section& s, const std::string& key, std::vector<T>& out) {
  if (!s.has(key)) return;
  s.read(key, out);
  if (out.empty()) throw ConfigError(s.field(key), s.line(key), "sweep axis must not be empty");
  for (T v : out) {
    if (!(v > T{0})) throw ConfigError(s.field(key), s.line(key), "sweep values must be > 0");
  }
}

void parse_sweep(Section s, SweepAxes& axes) {
  read_axis(s, "rounds", axes.rounds);
  read_axis(s, "epochs", axes.epochs);
  read_axis(s, "clients_per_round", axes.clients_per_round);
  read_axis(s, "block_interval", axes.block_interval);
  read_axis(s, "miners", axes.miners);
  s.finish();
}

void parse_chain_study(Section s, ChainStudyConfig& c) {
  s.read("blocks", c.blocks);
  s.read("payload_bytes", c.payload_bytes);
  require_positive(s, "blocks", c.blocks);
  s.finish();
}

std::vector<ProtocolKind> parse_protocols(const YAML::Node& n) {
  std::vector<std::string> names;
  if (n.IsScalar()) {
    names.push_back(Section::convert<std::string>(n, "protocols"));
  } else if (n.IsSequence()) {
    for (const auto& item : n) names.push_back(Section::convert<std::string>(item, "protocols"));
  } else {
    throw ConfigError("protocols", line_of(n), "expected a protocol name or a list of names");
  }
  if (names.empty()) throw ConfigError("protocols", line_of(n), "at least one protocol is required");
  std::vector<ProtocolKind> out;
  for (const auto& name : names) {
    const auto kind = parse_protocol(name);
    if (!kind) {
      throw ConfigError("protocols", line_of(n),
                        "unknown protocol '" + name + "' (expected cfl, bfl, bfl_aggregated, gfl or gfl_nm)");
    }
    if (std::find(out.begin(), out.end(), *kind) != out.end()) {
      throw ConfigError("protocols", line_of(n), "protocol '" + name + "' listed twice");
    }
    out.push_back(*kind);
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (protocols.empty()) throw ConfigError("protocols", 0, "at least one protocol is required");
  const bool wants_chain = chain_study.has_value() ||
                           std::any_of(protocols.begin(), protocols.end(), [](ProtocolKind k) { return uses_blockchain(k); });
  if (wants_chain && !chain) throw ConfigError("blockchain", 0, "section is required for BFL runs and chain studies");
  const std::size_t n = dataset.num_clients();
  auto check_m = [&](std::size_t m) {
    if (m > n) {
      throw ConfigError("federated.clients_per_round", 0,
                        std::to_string(m) + " exceeds the " + std::to_string(n) + " clients of the dataset");
    }
  };
  check_m(protocol.clients_per_round);
  if (sweep) {
    for (std::size_t m : sweep->clients_per_round) check_m(m);
    if (chain) {
      for (std::size_t nm : sweep->miners) {
        if (nm > chain->n_nodes) throw ConfigError("sweep.miners", 0, "exceeds blockchain.nodes");
      }
    }
  }
  if (chain) {
    if (chain->max_tx_per_block < protocol.clients_per_round && !chain_study) {
      throw ConfigError("blockchain.max_tx_per_block", 0, "is below federated.clients_per_round");
    }
  }
}

fs::path resolve_config_path(const fs::path& path) {
  if (path.is_absolute() || fs::exists(path)) return path;
  if (const char* env = std::getenv(kConfigPathEnv)) {
    std::stringstream dirs(env);
    std::string dir;
    while (std::getline(dirs, dir, ':')) {
      if (dir.empty()) continue;
      const fs::path candidate = fs::path(dir) / path;
      if (fs::exists(candidate)) return candidate;
    }
  }
  return path;
}

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("", static_cast<std::size_t>(e.mark.line) + 1, "parse error: " + e.msg);
  }
  if (root.IsNull()) throw ConfigError("", 0, "config is empty");
  Section top(root, "");
  ExperimentConfig cfg;
  cfg.dataset.clients = 3382;
  cfg.dataset.synthetic.n_clients = 3382;

  if (top.has("protocols")) {
    cfg.protocols = parse_protocols(top.raw("protocols"));
  } else if (top.has("protocol")) {
    cfg.protocols = parse_protocols(top.raw("protocol"));
  }
  std::size_t seed = cfg.seed;
  top.read("seed", seed);
  cfg.seed = seed;
  top.read("output", cfg.output);
  if (auto s = top.child("dataset")) parse_dataset(*s, cfg.dataset, base_dir);
  if (auto s = top.child("model")) parse_model(*s, cfg.model);
  if (auto s = top.child("federated")) parse_federated(*s, cfg.train, cfg.protocol);
  if (auto s = top.child("blockchain")) {
    cfg.chain.emplace();
    parse_blockchain(*s, *cfg.chain, cfg.protocol.record_chain_trace);
  }
  if (auto s = top.child("communication")) parse_communication(*s, cfg.links);
  if (auto s = top.child("energy")) parse_energy(*s, cfg.energy);
  if (auto s = top.child("sweep")) {
    cfg.sweep.emplace();
    parse_sweep(*s, *cfg.sweep);
  }
  if (auto s = top.child("chain_study")) {
    cfg.chain_study.emplace();
    parse_chain_study(*s, *cfg.chain_study);
  }
  top.finish();

  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    // Cross-field checks carry no position; point at the section involved.
    if (e.line() != 0) throw;
    const std::string section = e.field().substr(0, e.field().find('.'));
    const YAML::Node& croot = root;
    const YAML::Node n = croot[section] ? croot[section] : croot["protocols"];
    const std::size_t line = n ? line_of(n) : 0;
    throw ConfigError(e.field(), line, std::string(e.what()).substr(e.field().empty() ? 0 : e.field().size() + 4));
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  const fs::path resolved = resolve_config_path(path);
  std::ifstream in(resolved);
  if (!in) throw ConfigError("", 0, "cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), resolved.parent_path());
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  json protocols = json::array();
  for (ProtocolKind k : cfg.protocols) protocols.push_back(std::string(to_string(k)));
  j["protocols"] = protocols;
  j["seed"] = cfg.seed;
  j["output"] = cfg.output.string();

  const DatasetConfig& d = cfg.dataset;
  json ds;
  ds["source"] = d.source == DatasetSource::synthetic ? "synthetic" : "idx";
  ds["clients"] = d.num_clients();
  if (d.source == DatasetSource::synthetic) {
    ds["samples_per_client"] = d.synthetic.samples_per_client;
    ds["test_samples_per_client"] = d.synthetic.test_samples_per_client;
    ds["classes"] = d.synthetic.num_classes;
    ds["feature_dim"] = d.synthetic.feature_dim;
    ds["separation"] = d.synthetic.separation;
  } else {
    ds["train_images"] = fs::absolute(d.train_images).string();
    ds["train_labels"] = fs::absolute(d.train_labels).string();
    ds["test_images"] = fs::absolute(d.test_images).string();
    ds["test_labels"] = fs::absolute(d.test_labels).string();
  }
  ds["partition"] = d.partition.kind == PartitionKind::iid ? "iid" : "class_restricted";
  if (d.partition.kind == PartitionKind::class_restricted) ds["classes_per_client"] = d.partition.classes_per_client;
  j["dataset"] = ds;

  j["model"] = {{"kind", cfg.model.kind == ModelKind::ffnn ? "ffnn" : "cnn"},
                {"hidden", cfg.model.hidden},
                {"counting_only", cfg.model.counting_only}};

  j["federated"] = {{"rounds", cfg.protocol.rounds},
                    {"clients_per_round", cfg.protocol.clients_per_round},
                    {"epochs", cfg.train.epochs},
                    {"batch_size", cfg.train.batch_size},
                    {"learning_rate", cfg.train.eta},
                    {"gfl_sequence", std::string(to_string(cfg.protocol.gfl_sequence))},
                    {"gfl_final_broadcast", cfg.protocol.gfl_final_broadcast},
                    {"tx_metadata_bytes", cfg.protocol.tx_metadata_bytes},
                    {"validation_clients", cfg.protocol.validation_clients}};

  if (cfg.chain) {
    const ChainConfig& c = *cfg.chain;
    j["blockchain"] = {{"miners", c.n_miners},
                       {"nodes", c.n_nodes},
                       {"block_interval", c.block_interval},
                       {"hash_power", c.hash_power},
                       {"hash_power_watts", c.total_hash_power_watts},
                       {"p2p_capacity_mbps", c.p2p_capacity_bps / 1e6},
                       {"header_bytes", c.block_header_bytes},
                       {"max_tx_per_block", c.max_tx_per_block},
                       {"hop_depth", c.hop_depth},
                       {"difficulty_bits", c.difficulty_bits},
                       {"record_trace", cfg.protocol.record_chain_trace}};
  }

  const PhyParams& phy = cfg.links.phy;
  auto us = [](Nanos n) { return to_seconds(n) * 1e6; };
  auto node = [](const NodeClass& n) {
    return json{{"tx_power_dbm", n.tx_power_dbm}, {"bits_per_symbol", n.mcs_bits_per_symbol}};
  };
  j["communication"] = {{"sigma_leg_us", us(phy.sigma_leg)},
                        {"sigma_data_us", us(phy.sigma_data)},
                        {"slot_us", us(phy.t_e)},
                        {"sifs_us", us(phy.t_sifs)},
                        {"difs_us", us(phy.t_difs)},
                        {"t_phy_us", us(phy.t_phy)},
                        {"t_he_su_us", us(phy.t_hesu)},
                        {"control_bits_per_symbol", phy.bits_per_symbol_control},
                        {"l_rts", phy.l_rts},
                        {"l_cts", phy.l_cts},
                        {"l_ack", phy.l_ack},
                        {"l_service", phy.l_sf},
                        {"l_mac", phy.l_mac},
                        {"cw", phy.cw},
                        {"n_sc", phy.n_sc},
                        {"n_ss", phy.n_ss},
                        {"mean_backoff", phy.mean_backoff},
                        {"edge", node(cfg.links.edge)},
                        {"server", node(cfg.links.server)}};

  j["energy"] = {{"p_cpu_watts", cfg.energy.p_cpu_watts},
                 {"tau", cfg.energy.tau},
                 {"cpu_multipliers", cfg.energy.cpu_multipliers}};

  if (cfg.sweep) {
    json s = json::object();
    if (!cfg.sweep->rounds.empty()) s["rounds"] = cfg.sweep->rounds;
    if (!cfg.sweep->epochs.empty()) s["epochs"] = cfg.sweep->epochs;
    if (!cfg.sweep->clients_per_round.empty()) s["clients_per_round"] = cfg.sweep->clients_per_round;
    if (!cfg.sweep->block_interval.empty()) s["block_interval"] = cfg.sweep->block_interval;
    if (!cfg.sweep->miners.empty()) s["miners"] = cfg.sweep->miners;
    j["sweep"] = s;
  }
  if (cfg.chain_study) {
    j["chain_study"] = {{"blocks", cfg.chain_study->blocks}, {"payload_bytes", cfg.chain_study->payload_bytes}};
  }
  return j;
}

}  // namespace fedsim
