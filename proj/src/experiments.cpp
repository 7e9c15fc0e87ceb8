#include "atrl/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "atrl/target.hpp"

namespace atrl {

namespace {

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string fmt_rank(std::size_t r) {
  return r == kRankInfinite ? std::string("inf") : std::to_string(r);
}

const char* activation_name(Activation a) {
  return a == Activation::kSigmoid ? "sigmoid" : "relu";
}

const char* kind_name(FilterKind k) {
  return k == FilterKind::kExponential ? "with_order" : "without_order";
}

nlohmann::ordered_json train_config_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["lr"] = cfg.lr;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["adam_eps"] = cfg.adam_eps;
  j["epochs"] = cfg.epochs;
  j["batch"] = cfg.batch;
  j["seed"] = cfg.seed;
  j["plateau_stop"] = cfg.plateau_stop;
  j["plateau_tol"] = cfg.plateau_tol;
  j["plateau_window"] = cfg.plateau_window;
  return j;
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double best_train_mse(const TrainResult& res) {
  double best = res.final_train_mse;
  for (const EpochStats& st : res.history) best = std::min(best, st.train_mse);
  return best;
}

// Runs fn(i) for i in [0, count) on `threads` workers. The first exception
// wins; the rest of the points still execute (workers drain the queue).
void parallel_points(std::size_t count, std::size_t threads,
                     const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n = std::min(threads, count);
  pool.reserve(n);
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

void append_all(RecordStore* store, const std::vector<ExperimentRecord>& recs) {
  if (!store) return;
  for (const ExperimentRecord& r : recs) store->append(r);
}

}  // namespace

// ---- records and store -----------------------------------------------------

std::string ExperimentRecord::to_json_line() const {
  nlohmann::ordered_json j;
  j["experiment"] = experiment;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["metric"] = metric;
  j["value"] = value;
  j["wall_time_s"] = wall_time_s;
  return j.dump();
}

ExperimentRecord ExperimentRecord::from_json_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("record: not valid JSON: ") + e.what());
  }
  ExperimentRecord rec;
  try {
    rec.experiment = j.at("experiment").get<std::string>();
    rec.config_hash = j.at("config_hash").get<std::uint64_t>();
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.metric = j.at("metric").get<std::string>();
    rec.value = j.at("value").get<double>();
    rec.wall_time_s = j.at("wall_time_s").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("record: missing or mistyped field: ") + e.what());
  }
  return rec;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t hash_config(const nlohmann::ordered_json& doc) { return fnv1a(doc.dump()); }

std::string normalize_record_line(const std::string& line) {
  ExperimentRecord rec = ExperimentRecord::from_json_line(line);
  rec.wall_time_s = 0.0;
  return rec.to_json_line();
}

RecordStore::RecordStore(std::string path) : path_(std::move(path)) {
  if (path_.empty()) throw std::invalid_argument("record store: empty path");
}

void RecordStore::append(const ExperimentRecord& rec) {
  std::lock_guard<std::mutex> lock(mu_);
  std::ofstream os(path_, std::ios::app);
  if (!os) throw std::runtime_error("record store: cannot open " + path_);
  os << rec.to_json_line() << '\n';
  if (!os) throw std::runtime_error("record store: write failed on " + path_);
}

std::vector<ExperimentRecord> RecordStore::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("record store: cannot open " + path);
  std::vector<ExperimentRecord> recs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      recs.push_back(ExperimentRecord::from_json_line(line));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return recs;
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ATRL_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

double fit_loglog_slope(const std::vector<std::pair<double, double>>& pts) {
  if (pts.size() < 2) throw std::invalid_argument("slope fit: need at least 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : pts) {
    if (!(x > 0.0) || !(y > 0.0))
      throw std::invalid_argument("slope fit: coordinates must be positive");
    const double lx = std::log(x), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = static_cast<double>(pts.size());
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("slope fit: degenerate abscissae");
  return (n * sxy - sx * sy) / denom;
}

// ---- attention-width sweep -------------------------------------------------

std::string sweep_curve_id(double alpha, std::size_t r) {
  return "sweep/alpha=" + fmt_double(alpha) + "/r=" + fmt_rank(r);
}

std::string sweep_point_id(double alpha, std::size_t r, std::size_t m_h) {
  return sweep_curve_id(alpha, r) + "/m_h=" + std::to_string(m_h);
}

nlohmann::ordered_json SweepOptions::config_doc() const {
  nlohmann::ordered_json j;
  j["experiment"] = "sweep";
  j["alphas"] = alphas;
  nlohmann::ordered_json rs = nlohmann::ordered_json::array();
  for (std::size_t r : ranks) rs.push_back(fmt_rank(r));
  j["ranks"] = rs;
  j["m_h_grid"] = m_h_grid;
  j["seeds"] = seeds;
  j["tau"] = tau;
  j["train_count"] = train_count;
  j["test_count"] = test_count;
  j["data_seed"] = data_seed;
  j["target_seed"] = target_seed;
  j["n"] = n;
  j["m_v"] = m_v;
  j["ff_factor"] = ff_factor;
  j["layers"] = layers;
  j["heads"] = heads;
  j["slope_min_mh"] = slope_min_mh;
  j["slope_max_mh"] = slope_max_mh;
  j["train"] = train_config_json(train);
  return j;
}

std::vector<ExperimentRecord> sweep_mh(const SweepOptions& opt, RecordStore* store) {
  if (opt.alphas.empty() || opt.ranks.empty() || opt.m_h_grid.empty() || opt.seeds.empty())
    throw std::invalid_argument("sweep: empty grid");
  if (opt.train_count == 0) throw std::invalid_argument("sweep: train_count must be positive");
  opt.train.validate();

  const std::uint64_t hash = hash_config(opt.config_doc());

  // one dataset pair per (alpha, r); shared read-only across points
  struct Curve {
    double alpha;
    std::size_t r;
    Dataset train_ds, test_ds;
  };
  std::vector<Curve> curves;
  for (double alpha : opt.alphas)
    for (std::size_t r : opt.ranks) {
      TargetSpec spec = make_sweep_target(alpha, r, opt.tau, opt.target_seed);
      Curve c;
      c.alpha = alpha;
      c.r = r;
      c.train_ds = gen_target_form_dataset(spec, opt.train_count, opt.data_seed);
      c.test_ds = gen_target_form_dataset(spec, opt.test_count, Rng::mix(opt.data_seed, 1));
      curves.push_back(std::move(c));
    }

  struct Point {
    std::size_t curve;
    std::size_t m_h;
    std::uint64_t seed;
  };
  std::vector<Point> points;
  for (std::size_t c = 0; c < curves.size(); ++c)
    for (std::size_t m_h : opt.m_h_grid)
      for (std::uint64_t seed : opt.seeds) points.push_back({c, m_h, seed});

  struct PointOut {
    double train_mse = 0, test_mse = 0, wall = 0;
  };
  std::vector<PointOut> outs(points.size());

  parallel_points(points.size(), resolve_threads(opt.threads), [&](std::size_t i) {
    const Point& p = points[i];
    const Curve& c = curves[p.curve];
    const auto t0 = std::chrono::steady_clock::now();

    ModelBudget b;
    b.n = opt.n;
    b.h = opt.heads;
    b.m_h = p.m_h;
    b.m_v = opt.m_v;
    b.m_ff = opt.ff_factor * p.m_h;
    b.l = opt.layers;
    b.tau = opt.tau;
    b.d = 1;
    b.d_out = 1;

    Rng init_rng(Rng::mix(p.seed, fnv1a(sweep_point_id(c.alpha, c.r, p.m_h))));
    TransformerModel model = make_model(b, init_rng);
    TrainConfig cfg = opt.train;
    cfg.seed = p.seed;
    TrainResult res = train(model, c.train_ds, c.test_ds, cfg);

    outs[i].train_mse = best_train_mse(res);
    outs[i].test_mse = res.final_test_mse;
    outs[i].wall = elapsed_s(t0);
  });

  std::vector<ExperimentRecord> recs;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    const Curve& c = curves[p.curve];
    const std::string id = sweep_point_id(c.alpha, c.r, p.m_h);
    recs.push_back({id, hash, p.seed, "train_mse", outs[i].train_mse, outs[i].wall});
    recs.push_back({id, hash, p.seed, "test_mse", outs[i].test_mse, outs[i].wall});
  }

  // slope through the per-m_h medians of each infinite-rank curve
  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    if (curves[ci].r != kRankInfinite) continue;
    std::vector<std::pair<double, double>> line;
    for (std::size_t m_h : opt.m_h_grid) {
      if (m_h < opt.slope_min_mh || m_h > opt.slope_max_mh) continue;
      std::vector<double> vals;
      for (std::size_t i = 0; i < points.size(); ++i)
        if (points[i].curve == ci && points[i].m_h == m_h) vals.push_back(outs[i].train_mse);
      line.emplace_back(static_cast<double>(m_h), median(std::move(vals)));
    }
    recs.push_back({sweep_curve_id(curves[ci].alpha, curves[ci].r), hash, 0, "slope",
                    fit_loglog_slope(line), 0.0});
  }

  append_all(store, recs);
  return recs;
}

// ---- temporal-order comparison ---------------------------------------------

std::string temporal_order_id(const std::string& model, FilterKind kind, bool permuted) {
  return std::string("table1/") + kind_name(kind) + "/" + model + "/" +
         (permuted ? "permuted" : "original");
}

nlohmann::ordered_json TemporalOrderOptions::config_doc() const {
  nlohmann::ordered_json j;
  j["experiment"] = "table1";
  j["tau"] = tau;
  j["train_count"] = train_count;
  j["test_count"] = test_count;
  j["data_seed"] = data_seed;
  j["model_seed"] = model_seed;
  j["permute_shift"] = permute_shift;
  j["rnn_width"] = rnn_width;
  j["n"] = n;
  j["heads"] = heads;
  j["m_h"] = m_h;
  j["m_v"] = m_v;
  j["m_ff"] = m_ff;
  j["layers"] = layers;
  j["act"] = activation_name(act);
  j["train"] = train_config_json(train);
  return j;
}

TemporalOrderResult run_temporal_order(const TemporalOrderOptions& opt, RecordStore* store) {
  if (opt.train_count == 0 || opt.test_count == 0)
    throw std::invalid_argument("table1: counts must be positive");
  opt.train.validate();
  const std::uint64_t hash = hash_config(opt.config_doc());

  TemporalOrderResult result;
  const Permutation perm = Permutation::rotate_left(opt.tau, opt.permute_shift);

  for (FilterKind kind : {FilterKind::kExponential, FilterKind::kRandom}) {
    // one draw for train + test so both share the filter
    Dataset all = gen_linear_functional(kind, opt.tau, opt.train_count + opt.test_count,
                                        Rng::mix(opt.data_seed, static_cast<std::uint64_t>(kind)));
    Dataset train_ds, test_ds;
    train_ds.tau = test_ds.tau = all.tau;
    train_ds.d = test_ds.d = all.d;
    train_ds.d_out = test_ds.d_out = all.d_out;
    train_ds.filter = test_ds.filter = all.filter;
    train_ds.samples.assign(all.samples.begin(),
                            all.samples.begin() + static_cast<std::ptrdiff_t>(opt.train_count));
    test_ds.samples.assign(all.samples.begin() + static_cast<std::ptrdiff_t>(opt.train_count),
                           all.samples.end());

    for (bool permuted : {false, true}) {
      const Dataset tr_local = permuted ? apply_permutation(train_ds, perm) : train_ds;
      const Dataset te_local = permuted ? apply_permutation(test_ds, perm) : test_ds;

      for (const char* model_name : {"rnn", "transformer"}) {
        const std::string id = temporal_order_id(model_name, kind, permuted);
        const auto t0 = std::chrono::steady_clock::now();
        Rng init_rng(Rng::mix(opt.model_seed, fnv1a(id)));
        TrainConfig cfg = opt.train;
        cfg.seed = fnv1a(id + "/shuffle");

        TrainResult res;
        if (std::string(model_name) == "rnn") {
          RNNParams rnn = make_rnn(opt.rnn_width, 1, 1, init_rng, RnnActivation::kLinear);
          res = train(rnn, tr_local, te_local, cfg);
        } else {
          ModelBudget b;
          b.n = opt.n;
          b.h = opt.heads;
          b.m_h = opt.m_h;
          b.m_v = opt.m_v;
          b.m_ff = opt.m_ff;
          b.l = opt.layers;
          b.tau = opt.tau;
          b.d = 1;
          b.d_out = 1;
          ModelOptions mo;
          mo.act = opt.act;
          TransformerModel model = make_model(b, init_rng, mo);
          res = train(model, tr_local, te_local, cfg);
        }
        const double wall = elapsed_s(t0);

        TemporalOrderCell cell;
        cell.model = model_name;
        cell.kind = kind;
        cell.permuted = permuted;
        cell.train_mse = res.final_train_mse;
        cell.test_mse = res.final_test_mse;
        cell.epochs_run = res.epochs_run;
        result.cells.push_back(cell);

        result.records.push_back({id, hash, cfg.seed, "train_mse", res.final_train_mse, wall});
        result.records.push_back({id, hash, cfg.seed, "test_mse", res.final_test_mse, wall});
        result.records.push_back(
            {id, hash, cfg.seed, "epochs", static_cast<double>(res.epochs_run), wall});
      }
    }
  }

  append_all(store, result.records);
  return result;
}

// ---- gravity graph recovery ------------------------------------------------

nlohmann::ordered_json GravityExperimentOptions::config_doc() const {
  nlohmann::ordered_json j;
  j["experiment"] = "gravity";
  j["tau"] = tau;
  j["train_count"] = train_count;
  j["holdout_count"] = holdout_count;
  j["data_seed"] = data_seed;
  j["model_seed"] = model_seed;
  j["untrained_seed"] = untrained_seed;
  j["eps"] = physics.eps;
  j["mass_lo"] = physics.mass_lo;
  j["mass_hi"] = physics.mass_hi;
  j["causal"] = physics.causal;
  j["n"] = n;
  j["heads"] = heads;
  j["m_h"] = m_h;
  j["m_v"] = m_v;
  j["m_ff"] = m_ff;
  j["layers"] = layers;
  j["act"] = activation_name(act);
  j["graph_layer"] = graph_layer;
  j["graph_head"] = graph_head;
  j["export_graphs"] = export_graphs;
  j["train"] = train_config_json(train);
  return j;
}

double offdiag_pearson(const Mat& a, const Mat& b) {
  if (a.rows != b.rows || a.cols != b.cols || a.rows != a.cols)
    throw std::invalid_argument("pearson: matrices must be square and same size");
  std::vector<double> u, v;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) {
      if (i == j) continue;
      u.push_back(a(i, j));
      v.push_back(b(i, j));
    }
  if (u.size() < 2) return 0.0;
  const double n = static_cast<double>(u.size());
  double mu = 0, mv = 0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    mu += u[k];
    mv += v[k];
  }
  mu /= n;
  mv /= n;
  double suv = 0, suu = 0, svv = 0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    suv += (u[k] - mu) * (v[k] - mv);
    suu += (u[k] - mu) * (u[k] - mu);
    svv += (v[k] - mv) * (v[k] - mv);
  }
  if (suu == 0.0 || svv == 0.0) return 0.0;
  return suv / std::sqrt(suu * svv);
}

double mean_graph_agreement(const TransformerModel& model, const Dataset& ds,
                            const GravityOptions& physics, std::size_t layer,
                            std::size_t head) {
  if (ds.samples.empty()) throw std::invalid_argument("agreement: empty dataset");
  double total = 0.0;
  for (const SequenceSample& smp : ds.samples) {
    const Mat truth = gravity_graph(smp.x, physics);
    const Mat learned = extract_attention_graph(model, to_tensor(smp.x), layer, head);
    total += offdiag_pearson(truth, learned);
  }
  return total / static_cast<double>(ds.samples.size());
}

GravityRunResult run_gravity(const GravityExperimentOptions& opt, RecordStore* store) {
  if (opt.train_count == 0 || opt.holdout_count == 0)
    throw std::invalid_argument("gravity: counts must be positive");
  opt.train.validate();
  const std::uint64_t hash = hash_config(opt.config_doc());
  const auto t0 = std::chrono::steady_clock::now();

  Dataset train_ds = gen_gravity(opt.tau, opt.train_count, opt.data_seed, opt.physics);
  Dataset holdout = gen_gravity(opt.tau, opt.holdout_count, Rng::mix(opt.data_seed, 1),
                                opt.physics);

  ModelBudget b;
  b.n = opt.n;
  b.h = opt.heads;
  b.m_h = opt.m_h;
  b.m_v = opt.m_v;
  b.m_ff = opt.m_ff;
  b.l = opt.layers;
  b.tau = opt.tau;
  b.d = 3;
  b.d_out = 2;
  if (opt.graph_layer >= opt.layers || opt.graph_head >= opt.heads)
    throw std::invalid_argument("gravity: graph extraction point outside the model");

  ModelOptions mo;
  mo.act = opt.act;

  Rng untrained_rng(opt.untrained_seed);
  TransformerModel untrained = make_model(b, untrained_rng, mo);

  Rng init_rng(opt.model_seed);
  TransformerModel model = make_model(b, init_rng, mo);
  TrainConfig cfg = opt.train;
  TrainResult res = train(model, train_ds, holdout, cfg);

  GravityRunResult out;
  out.agreement_untrained =
      mean_graph_agreement(untrained, holdout, opt.physics, opt.graph_layer, opt.graph_head);
  out.agreement =
      mean_graph_agreement(model, holdout, opt.physics, opt.graph_layer, opt.graph_head);
  out.train_mse = res.final_train_mse;
  out.test_mse = res.final_test_mse;
  out.epochs_run = res.epochs_run;
  for (const SequenceSample& smp : holdout.samples)
    out.graph_pairs.emplace_back(
        gravity_graph(smp.x, opt.physics),
        extract_attention_graph(model, to_tensor(smp.x), opt.graph_layer, opt.graph_head));

  const double wall = elapsed_s(t0);
  out.records.push_back({"gravity", hash, opt.model_seed, "agreement", out.agreement, wall});
  out.records.push_back(
      {"gravity", hash, opt.untrained_seed, "agreement_untrained", out.agreement_untrained, wall});
  out.records.push_back({"gravity", hash, opt.model_seed, "train_mse", out.train_mse, wall});
  out.records.push_back({"gravity", hash, opt.model_seed, "test_mse", out.test_mse, wall});
  out.records.push_back(
      {"gravity", hash, opt.model_seed, "epochs", static_cast<double>(out.epochs_run), wall});

  const std::size_t exported = std::min(opt.export_graphs, out.graph_pairs.size());
  for (std::size_t k = 0; k < exported; ++k) {
    const std::string id = "gravity/sample=" + std::to_string(k);
    const auto& [truth, learned] = out.graph_pairs[k];
    for (std::size_t i = 0; i < truth.rows; ++i)
      for (std::size_t j = 0; j < truth.cols; ++j) {
        const std::string cell = "[" + std::to_string(i) + "," + std::to_string(j) + "]";
        out.records.push_back({id, hash, opt.model_seed, "truth" + cell, truth(i, j), wall});
        out.records.push_back({id, hash, opt.model_seed, "attention" + cell, learned(i, j), wall});
      }
  }

  append_all(store, out.records);
  return out;
}

}  // namespace atrl
