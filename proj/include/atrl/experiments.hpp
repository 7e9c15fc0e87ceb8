#pragma once

// Experiment drivers and the append-only results store. Three recipes:
//   - sweep_mh:            training error vs. attention width on spectral targets
//   - run_temporal_order:  recurrent vs. attention models on convolution data,
//                          original and permuted
//   - run_gravity:         attention-graph recovery on the gravity dataset
// Every driver emits ExperimentRecords; a record is one (experiment, metric)
// measurement and serializes to one JSON line.

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "atrl/dataset.hpp"
#include "atrl/mat.hpp"
#include "atrl/train.hpp"
#include "atrl/transformer.hpp"
#include "json.hpp"

namespace atrl {

struct ExperimentRecord {
  std::string experiment;  // id, e.g. "sweep/alpha=0.55/r=6/m_h=4"
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string metric;  // "train_mse", "test_mse", "slope", "agreement", ...
  double value = 0.0;
  double wall_time_s = 0.0;

  // Canonical single-line JSON, fixed key order, no trailing newline.
  std::string to_json_line() const;
  static ExperimentRecord from_json_line(const std::string& line);
};

// 64-bit FNV-1a over the canonical dump of a config document.
std::uint64_t fnv1a(const std::string& text);
std::uint64_t hash_config(const nlohmann::ordered_json& doc);

// Strips timing from a serialized record so two runs of the same config can
// be compared byte-for-byte.
std::string normalize_record_line(const std::string& line);

// Append-only JSON-lines file. append() is serialized internally, so worker
// threads may share one store; records land in the order append() is called.
class RecordStore {
 public:
  explicit RecordStore(std::string path);
  void append(const ExperimentRecord& rec);
  const std::string& path() const { return path_; }

  static std::vector<ExperimentRecord> load(const std::string& path);

 private:
  std::string path_;
  std::mutex mu_;
};

// Number of worker threads: explicit request, else ATRL_THREADS, else 1.
std::size_t resolve_threads(std::size_t requested);

// Least-squares slope of log(y) against log(x). Requires >= 2 points with
// positive coordinates.
double fit_loglog_slope(const std::vector<std::pair<double, double>>& pts);

// ---- attention-width sweep -------------------------------------------------

struct SweepOptions {
  std::vector<double> alphas{0.55, 1.0};
  std::vector<std::size_t> ranks{2, 6, kRankInfinite};
  std::vector<std::size_t> m_h_grid{1, 2, 4, 8, 16};
  std::vector<std::uint64_t> seeds{1, 2, 3};

  std::size_t tau = 4;
  std::size_t train_count = 160;
  std::size_t test_count = 48;
  std::uint64_t data_seed = 401;       // input draws (targets differ per spec)
  std::uint64_t target_seed = 17;      // F and rho of the sweep target family

  // model sizing; m_ff co-scales with the attention width so the
  // feed-forward term never caps the decay under study
  std::size_t n = 32;
  std::size_t m_v = 16;
  std::size_t ff_factor = 16;  // m_ff = ff_factor * m_h
  std::size_t layers = 1;
  std::size_t heads = 1;

  // slope fit window for infinite-rank curves
  std::size_t slope_min_mh = 2;
  std::size_t slope_max_mh = 16;

  TrainConfig train;
  std::size_t threads = 0;  // 0: ATRL_THREADS or 1

  nlohmann::ordered_json config_doc() const;
};

std::string sweep_point_id(double alpha, std::size_t r, std::size_t m_h);
std::string sweep_curve_id(double alpha, std::size_t r);

// Runs every (alpha, r, m_h, seed) point, in parallel when threads > 1.
// Per point: records "train_mse" (best epoch) and "test_mse" (final). Per
// infinite-rank curve: a "slope" record fitted through the per-m_h medians.
// Records are appended to the store (if given) in deterministic point order
// and returned.
std::vector<ExperimentRecord> sweep_mh(const SweepOptions& opt, RecordStore* store = nullptr);

// ---- temporal-order comparison ---------------------------------------------

struct TemporalOrderOptions {
  std::size_t tau = 32;
  std::size_t train_count = 160;
  std::size_t test_count = 48;
  std::uint64_t data_seed = 501;
  std::uint64_t model_seed = 502;
  std::size_t permute_shift = 10;  // rotate-left applied to inputs

  std::size_t rnn_width = 128;

  // encoder fixed at two blocks of 128 hidden units and 4 heads
  std::size_t n = 128;
  std::size_t heads = 4;
  std::size_t m_h = 32;
  std::size_t m_v = 32;
  std::size_t m_ff = 128;
  std::size_t layers = 2;
  Activation act = Activation::kRelu;

  TrainConfig train;  // callers usually enable plateau_stop

  nlohmann::ordered_json config_doc() const;
};

struct TemporalOrderCell {
  std::string model;  // "rnn" | "transformer"
  FilterKind kind = FilterKind::kExponential;
  bool permuted = false;
  double train_mse = 0.0;
  double test_mse = 0.0;
  std::size_t epochs_run = 0;
};

std::string temporal_order_id(const std::string& model, FilterKind kind, bool permuted);

struct TemporalOrderResult {
  std::vector<TemporalOrderCell> cells;  // 8 cells, fixed order
  std::vector<ExperimentRecord> records;
};

TemporalOrderResult run_temporal_order(const TemporalOrderOptions& opt,
                                       RecordStore* store = nullptr);

// ---- gravity graph recovery ------------------------------------------------

struct GravityExperimentOptions {
  std::size_t tau = 5;  // particles
  std::size_t train_count = 256;
  std::size_t holdout_count = 100;
  std::uint64_t data_seed = 601;
  std::uint64_t model_seed = 602;
  std::uint64_t untrained_seed = 603;

  GravityOptions physics;

  std::size_t n = 32;
  std::size_t heads = 1;
  std::size_t m_h = 8;
  std::size_t m_v = 16;
  std::size_t m_ff = 64;
  std::size_t layers = 2;
  Activation act = Activation::kSigmoid;

  // which attention matrix is compared against the ground-truth graph
  std::size_t graph_layer = 1;
  std::size_t graph_head = 0;

  // first few held-out graph pairs are written into the record store
  // entry-by-entry so reports can be rebuilt from the store alone
  std::size_t export_graphs = 3;

  TrainConfig train;

  nlohmann::ordered_json config_doc() const;
};

struct GravityRunResult {
  double agreement = 0.0;            // trained model, mean off-diag Pearson
  double agreement_untrained = 0.0;  // fresh init, same metric
  double train_mse = 0.0;
  double test_mse = 0.0;
  std::size_t epochs_run = 0;
  // (ground truth, extracted) pairs for the held-out samples, in order
  std::vector<std::pair<Mat, Mat>> graph_pairs;
  std::vector<ExperimentRecord> records;
};

GravityRunResult run_gravity(const GravityExperimentOptions& opt, RecordStore* store = nullptr);

// Pearson correlation between the off-diagonal entries of two square
// matrices; 0 if either side has no variance.
double offdiag_pearson(const Mat& a, const Mat& b);

// Mean of offdiag_pearson(ground truth, extracted attention) over a gravity
// dataset.
double mean_graph_agreement(const TransformerModel& model, const Dataset& ds,
                            const GravityOptions& physics, std::size_t layer,
                            std::size_t head);

}  // namespace atrl
