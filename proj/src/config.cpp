#include "atrl/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "atrl/target.hpp"

namespace atrl {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument("config: " + msg); }

// Strict object reader: every key must be consumed, every type must match.
class ObjReader {
 public:
  ObjReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("'" + path_ + "' must be an object");
  }

  template <typename T>
  void opt(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      fail("'" + path_ + "." + key + "' has the wrong type");
    }
  }

  template <typename T>
  void req(const char* key, T& out) {
    if (!j_.contains(key)) fail("'" + path_ + "' is missing required key '" + std::string(key) + "'");
    opt(key, out);
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& sub(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      (void)value;
      if (!seen_.count(key)) fail("unknown key '" + path_ + "." + key + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_train(const json& j, const std::string& path, TrainConfig& cfg) {
  ObjReader r(j, path);
  r.opt("lr", cfg.lr);
  r.opt("beta1", cfg.beta1);
  r.opt("beta2", cfg.beta2);
  r.opt("adam_eps", cfg.adam_eps);
  r.opt("epochs", cfg.epochs);
  r.opt("batch", cfg.batch);
  r.opt("seed", cfg.seed);
  r.opt("plateau_stop", cfg.plateau_stop);
  r.opt("plateau_tol", cfg.plateau_tol);
  r.opt("plateau_window", cfg.plateau_window);
  r.finish();
  cfg.validate();
}

Activation read_activation(const std::string& name, const std::string& path) {
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "relu") return Activation::kRelu;
  fail("'" + path + "' must be \"sigmoid\" or \"relu\"");
}

// ranks may mix numbers and the string "inf"
std::vector<std::size_t> read_ranks(const json& j, const std::string& path) {
  if (!j.is_array()) fail("'" + path + "' must be an array");
  std::vector<std::size_t> out;
  for (const json& v : j) {
    if (v.is_string() && v.get<std::string>() == "inf")
      out.push_back(kRankInfinite);
    else if (v.is_number_unsigned() && v.get<std::size_t>() > 0)
      out.push_back(v.get<std::size_t>());
    else
      fail("'" + path + "' entries must be positive integers or \"inf\"");
  }
  return out;
}

SweepOptions read_sweep(const json& j) {
  SweepOptions opt;
  ObjReader r(j, "sweep");
  r.opt("alphas", opt.alphas);
  if (r.has("ranks")) opt.ranks = read_ranks(r.sub("ranks"), "sweep.ranks");
  r.opt("m_h_grid", opt.m_h_grid);
  r.opt("seeds", opt.seeds);
  r.opt("tau", opt.tau);
  r.opt("train_count", opt.train_count);
  r.opt("test_count", opt.test_count);
  r.opt("data_seed", opt.data_seed);
  r.opt("target_seed", opt.target_seed);
  r.opt("n", opt.n);
  r.opt("m_v", opt.m_v);
  r.opt("ff_factor", opt.ff_factor);
  r.opt("layers", opt.layers);
  r.opt("heads", opt.heads);
  r.opt("slope_min_mh", opt.slope_min_mh);
  r.opt("slope_max_mh", opt.slope_max_mh);
  r.opt("threads", opt.threads);
  if (r.has("train")) read_train(r.sub("train"), "sweep.train", opt.train);
  r.finish();
  return opt;
}

TemporalOrderOptions read_table1(const json& j) {
  TemporalOrderOptions opt;
  ObjReader r(j, "table1");
  r.opt("tau", opt.tau);
  r.opt("train_count", opt.train_count);
  r.opt("test_count", opt.test_count);
  r.opt("data_seed", opt.data_seed);
  r.opt("model_seed", opt.model_seed);
  r.opt("permute_shift", opt.permute_shift);
  r.opt("rnn_width", opt.rnn_width);
  r.opt("n", opt.n);
  r.opt("heads", opt.heads);
  r.opt("m_h", opt.m_h);
  r.opt("m_v", opt.m_v);
  r.opt("m_ff", opt.m_ff);
  r.opt("layers", opt.layers);
  if (r.has("act")) {
    std::string act;
    r.opt("act", act);
    opt.act = read_activation(act, "table1.act");
  }
  if (r.has("train")) read_train(r.sub("train"), "table1.train", opt.train);
  r.finish();
  return opt;
}

GravityExperimentOptions read_gravity(const json& j) {
  GravityExperimentOptions opt;
  ObjReader r(j, "gravity");
  r.opt("tau", opt.tau);
  r.opt("train_count", opt.train_count);
  r.opt("holdout_count", opt.holdout_count);
  r.opt("data_seed", opt.data_seed);
  r.opt("model_seed", opt.model_seed);
  r.opt("untrained_seed", opt.untrained_seed);
  r.opt("eps", opt.physics.eps);
  r.opt("mass_lo", opt.physics.mass_lo);
  r.opt("mass_hi", opt.physics.mass_hi);
  r.opt("causal", opt.physics.causal);
  r.opt("n", opt.n);
  r.opt("heads", opt.heads);
  r.opt("m_h", opt.m_h);
  r.opt("m_v", opt.m_v);
  r.opt("m_ff", opt.m_ff);
  r.opt("layers", opt.layers);
  if (r.has("act")) {
    std::string act;
    r.opt("act", act);
    opt.act = read_activation(act, "gravity.act");
  }
  r.opt("graph_layer", opt.graph_layer);
  r.opt("graph_head", opt.graph_head);
  r.opt("export_graphs", opt.export_graphs);
  if (r.has("train")) read_train(r.sub("train"), "gravity.train", opt.train);
  r.finish();
  return opt;
}

}  // namespace

ExperimentConfig parse_experiment_config(const nlohmann::json& doc) {
  ExperimentConfig cfg;
  ObjReader r(doc, "config");
  if (!r.has("version")) fail("missing 'version'");
  r.req("version", cfg.version);
  if (cfg.version != kConfigVersion)
    fail("unsupported version " + std::to_string(cfg.version) + " (expected " +
         std::to_string(kConfigVersion) + ")");
  r.req("kind", cfg.kind);
  r.req("records", cfg.records);
  r.opt("report_prefix", cfg.report_prefix);

  if (cfg.kind == "sweep") {
    if (!r.has("sweep")) fail("kind \"sweep\" needs a 'sweep' section");
    cfg.sweep = read_sweep(r.sub("sweep"));
  } else if (cfg.kind == "table1") {
    if (!r.has("table1")) fail("kind \"table1\" needs a 'table1' section");
    cfg.table1 = read_table1(r.sub("table1"));
  } else if (cfg.kind == "gravity") {
    if (!r.has("gravity")) fail("kind \"gravity\" needs a 'gravity' section");
    cfg.gravity = read_gravity(r.sub("gravity"));
  } else {
    fail("unknown kind '" + cfg.kind + "' (expected sweep, table1, or gravity)");
  }
  if (cfg.records.empty()) fail("'records' must be a non-empty path");
  r.finish();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
  }
  return parse_experiment_config(doc);
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = version;
  j["kind"] = kind;
  j["records"] = records;
  if (!report_prefix.empty()) j["report_prefix"] = report_prefix;
  if (sweep) j["sweep"] = sweep->config_doc();
  if (table1) j["table1"] = table1->config_doc();
  if (gravity) j["gravity"] = gravity->config_doc();
  return j;
}

}  // namespace atrl
