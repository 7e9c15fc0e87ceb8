#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "atrl/experiments.hpp"
#include "atrl/target.hpp"

using namespace atrl;

namespace {

std::string temp_path(const std::string& stem) {
  return "/tmp/atrl_test_" + stem + "_" + std::to_string(::getpid()) + ".jsonl";
}

std::vector<std::string> normalized_lines(const std::vector<ExperimentRecord>& recs) {
  std::vector<std::string> out;
  for (const ExperimentRecord& r : recs) out.push_back(normalize_record_line(r.to_json_line()));
  return out;
}

SweepOptions micro_sweep() {
  SweepOptions opt;
  opt.alphas = {1.0};
  opt.ranks = {2};
  opt.m_h_grid = {1, 2};
  opt.seeds = {1, 2};
  opt.tau = 3;
  opt.train_count = 12;
  opt.test_count = 6;
  opt.n = 8;
  opt.m_v = 4;
  opt.ff_factor = 4;
  opt.train.epochs = 4;
  opt.train.batch = 6;
  return opt;
}

TemporalOrderOptions micro_table1() {
  TemporalOrderOptions opt;
  opt.tau = 6;
  opt.train_count = 10;
  opt.test_count = 6;
  opt.permute_shift = 2;
  opt.rnn_width = 8;
  opt.n = 12;
  opt.heads = 2;
  opt.m_h = 3;
  opt.m_v = 3;
  opt.m_ff = 8;
  opt.layers = 2;
  opt.train.epochs = 3;
  opt.train.batch = 5;
  return opt;
}

GravityExperimentOptions micro_gravity() {
  GravityExperimentOptions opt;
  opt.tau = 3;
  opt.train_count = 8;
  opt.holdout_count = 4;
  opt.n = 8;
  opt.heads = 1;
  opt.m_h = 2;
  opt.m_v = 4;
  opt.m_ff = 8;
  opt.layers = 2;
  opt.graph_layer = 1;
  opt.graph_head = 0;
  opt.train.epochs = 3;
  opt.train.batch = 4;
  return opt;
}

}  // namespace

TEST_SUITE_BEGIN("experiments");

TEST_CASE("records serialize to one canonical JSON line") {
  ExperimentRecord rec;
  rec.experiment = "sweep/alpha=1/r=2/m_h=4";
  rec.config_hash = 1234567890123456789ull;
  rec.seed = 7;
  rec.metric = "train_mse";
  rec.value = 0.5;
  rec.wall_time_s = 1.25;
  const std::string line = rec.to_json_line();
  CHECK(line ==
        "{\"experiment\":\"sweep/alpha=1/r=2/m_h=4\",\"config_hash\":1234567890123456789,"
        "\"seed\":7,\"metric\":\"train_mse\",\"value\":0.5,\"wall_time_s\":1.25}");

  ExperimentRecord back = ExperimentRecord::from_json_line(line);
  CHECK(back.experiment == rec.experiment);
  CHECK(back.config_hash == rec.config_hash);
  CHECK(back.seed == rec.seed);
  CHECK(back.metric == rec.metric);
  CHECK(back.value == rec.value);
  CHECK(back.wall_time_s == rec.wall_time_s);
}

TEST_CASE("record parsing rejects junk") {
  CHECK_THROWS_AS(ExperimentRecord::from_json_line("not json"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentRecord::from_json_line("{\"experiment\":\"x\"}"),
                  std::invalid_argument);
  CHECK_THROWS_AS(ExperimentRecord::from_json_line("{\"experiment\":1,\"config_hash\":0,"
                                                   "\"seed\":0,\"metric\":\"m\",\"value\":0,"
                                                   "\"wall_time_s\":0}"),
                  std::invalid_argument);
}

TEST_CASE("normalization zeroes only the timing field") {
  ExperimentRecord rec;
  rec.experiment = "gravity";
  rec.metric = "agreement";
  rec.value = 0.9;
  rec.wall_time_s = 123.456;
  const std::string norm = normalize_record_line(rec.to_json_line());
  ExperimentRecord back = ExperimentRecord::from_json_line(norm);
  CHECK(back.wall_time_s == 0.0);
  CHECK(back.value == 0.9);
  CHECK(back.experiment == "gravity");
}

TEST_CASE("hash matches published reference values") {
  CHECK(fnv1a("") == 14695981039346656037ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("config hash is sensitive to every field") {
  SweepOptions a = micro_sweep();
  SweepOptions b = a;
  CHECK(hash_config(a.config_doc()) == hash_config(b.config_doc()));
  b.train.lr *= 2;
  CHECK(hash_config(a.config_doc()) != hash_config(b.config_doc()));
  SweepOptions c = a;
  c.data_seed += 1;
  CHECK(hash_config(a.config_doc()) != hash_config(c.config_doc()));
}

TEST_CASE("record store appends and loads in order") {
  const std::string path = temp_path("store");
  std::remove(path.c_str());
  RecordStore store(path);
  ExperimentRecord r1{"e1", 1, 2, "m1", 0.5, 0.0};
  ExperimentRecord r2{"e2", 3, 4, "m2", 0.25, 1.0};
  store.append(r1);
  store.append(r2);
  std::vector<ExperimentRecord> recs = RecordStore::load(path);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].experiment == "e1");
  CHECK(recs[1].experiment == "e2");
  CHECK(recs[1].value == 0.25);
  std::remove(path.c_str());
}

TEST_CASE("record store load reports the offending line") {
  const std::string path = temp_path("corrupt");
  {
    std::ofstream os(path);
    os << ExperimentRecord{"ok", 0, 0, "m", 1.0, 0.0}.to_json_line() << "\n";
    os << "garbage line\n";
  }
  try {
    RecordStore::load(path);
    FAIL("expected a parse failure");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(RecordStore::load("/nonexistent/dir/file.jsonl"), std::runtime_error);
}

TEST_CASE("thread count resolution: explicit, then environment, then one") {
  CHECK(resolve_threads(3) == 3);
  ::setenv("ATRL_THREADS", "5", 1);
  CHECK(resolve_threads(0) == 5);
  CHECK(resolve_threads(2) == 2);
  ::setenv("ATRL_THREADS", "junk", 1);
  CHECK(resolve_threads(0) == 1);
  ::unsetenv("ATRL_THREADS");
  CHECK(resolve_threads(0) == 1);
}

TEST_CASE("log-log slope fit recovers exact power laws") {
  std::vector<std::pair<double, double>> pts;
  for (double x : {1.0, 2.0, 4.0, 8.0}) pts.emplace_back(x, 3.0 * std::pow(x, -1.5));
  CHECK(fit_loglog_slope(pts) == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK_THROWS_AS(fit_loglog_slope({{1.0, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(fit_loglog_slope({{1.0, 1.0}, {2.0, -1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(fit_loglog_slope({{2.0, 1.0}, {2.0, 3.0}}), std::invalid_argument);
}

TEST_CASE("off-diagonal correlation ignores the diagonal") {
  Mat a(3, 3), b(3, 3);
  double v = 0.1;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      a(i, j) = (i == j) ? 99.0 : (v += 0.07);
      b(i, j) = (i == j) ? -5.0 : 2.0 * a(i, j) + 1.0;
    }
  CHECK(offdiag_pearson(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) b(i, j) = -3.0 * a(i, j);
  CHECK(offdiag_pearson(a, b) == doctest::Approx(-1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) b(i, j) = 4.0;
  CHECK(offdiag_pearson(a, b) == 0.0);
  Mat bad(2, 3);
  CHECK_THROWS_AS(offdiag_pearson(a, bad), std::invalid_argument);
}

TEST_CASE("sweep ids name every coordinate") {
  CHECK(sweep_point_id(0.55, 6, 4) == "sweep/alpha=0.55/r=6/m_h=4");
  CHECK(sweep_point_id(1.0, kRankInfinite, 16) == "sweep/alpha=1/r=inf/m_h=16");
  CHECK(sweep_curve_id(0.55, kRankInfinite) == "sweep/alpha=0.55/r=inf");
}

TEST_CASE("micro sweep emits two records per point plus curve slopes") {
  SweepOptions opt = micro_sweep();
  std::vector<ExperimentRecord> recs = sweep_mh(opt);
  // 1 alpha x 1 rank x 2 m_h x 2 seeds = 4 points, 2 records each, no slope
  REQUIRE(recs.size() == 8);
  const std::uint64_t hash = hash_config(opt.config_doc());
  for (const ExperimentRecord& r : recs) {
    CHECK(r.config_hash == hash);
    CHECK((r.metric == "train_mse" || r.metric == "test_mse"));
    CHECK(r.value >= 0.0);
    CHECK(r.experiment.substr(0, 18) == "sweep/alpha=1/r=2/");
  }
  CHECK(recs[0].experiment == "sweep/alpha=1/r=2/m_h=1");
  CHECK(recs[0].seed == 1);
  CHECK(recs[2].seed == 2);
  CHECK(recs[4].experiment == "sweep/alpha=1/r=2/m_h=2");

  opt.ranks = {kRankInfinite};
  opt.m_h_grid = {2, 4};
  opt.slope_min_mh = 2;
  opt.slope_max_mh = 4;
  std::vector<ExperimentRecord> recs2 = sweep_mh(opt);
  REQUIRE(recs2.size() == 9);
  const ExperimentRecord& slope = recs2.back();
  CHECK(slope.experiment == "sweep/alpha=1/r=inf");
  CHECK(slope.metric == "slope");

  // the slope record is the fit through the per-m_h medians of the points
  auto median_of = [&](std::size_t m_h) {
    std::vector<double> vals;
    for (const ExperimentRecord& r : recs2)
      if (r.metric == "train_mse" && r.experiment == sweep_point_id(1.0, kRankInfinite, m_h))
        vals.push_back(r.value);
    REQUIRE(vals.size() == 2);
    std::sort(vals.begin(), vals.end());
    return 0.5 * (vals[0] + vals[1]);
  };
  std::vector<std::pair<double, double>> line{{2.0, median_of(2)}, {4.0, median_of(4)}};
  CHECK(slope.value == doctest::Approx(fit_loglog_slope(line)).epsilon(1e-12));
}

TEST_CASE("sweep results do not depend on the thread count") {
  SweepOptions opt = micro_sweep();
  opt.threads = 1;
  std::vector<std::string> serial = normalized_lines(sweep_mh(opt));
  opt.threads = 3;
  std::vector<std::string> threaded = normalized_lines(sweep_mh(opt));
  REQUIRE(serial.size() == threaded.size());
  for (std::size_t i = 0; i < serial.size(); ++i) CHECK(serial[i] == threaded[i]);
}

TEST_CASE("sweep reruns reproduce records and the store mirrors them") {
  const std::string path = temp_path("sweep");
  std::remove(path.c_str());
  SweepOptions opt = micro_sweep();
  RecordStore store(path);
  std::vector<ExperimentRecord> first = sweep_mh(opt, &store);
  std::vector<ExperimentRecord> stored = RecordStore::load(path);
  REQUIRE(stored.size() == first.size());
  for (std::size_t i = 0; i < first.size(); ++i)
    CHECK(stored[i].to_json_line() == first[i].to_json_line());

  std::vector<ExperimentRecord> second = sweep_mh(opt);
  std::vector<std::string> a = normalized_lines(first);
  std::vector<std::string> b = normalized_lines(second);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  std::remove(path.c_str());
}

TEST_CASE("temporal-order run covers all eight cells deterministically") {
  TemporalOrderOptions opt = micro_table1();
  TemporalOrderResult res = run_temporal_order(opt);
  REQUIRE(res.cells.size() == 8);
  REQUIRE(res.records.size() == 24);

  std::vector<std::string> expected_ids = {
      "table1/with_order/rnn/original",       "table1/with_order/transformer/original",
      "table1/with_order/rnn/permuted",       "table1/with_order/transformer/permuted",
      "table1/without_order/rnn/original",    "table1/without_order/transformer/original",
      "table1/without_order/rnn/permuted",    "table1/without_order/transformer/permuted"};
  for (std::size_t i = 0; i < 8; ++i) {
    const TemporalOrderCell& c = res.cells[i];
    CHECK(temporal_order_id(c.model, c.kind, c.permuted) == expected_ids[i]);
    CHECK(c.train_mse >= 0.0);
    CHECK(c.epochs_run == opt.train.epochs);
  }
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(res.records[3 * i].metric == "train_mse");
    CHECK(res.records[3 * i + 1].metric == "test_mse");
    CHECK(res.records[3 * i + 2].metric == "epochs");
    CHECK(res.records[3 * i].experiment == expected_ids[i]);
  }

  TemporalOrderResult res2 = run_temporal_order(opt);
  std::vector<std::string> a = normalized_lines(res.records);
  std::vector<std::string> b = normalized_lines(res2.records);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("gravity run reports agreement and graph pairs") {
  GravityExperimentOptions opt = micro_gravity();
  GravityRunResult res = run_gravity(opt);
  CHECK(res.agreement >= -1.0);
  CHECK(res.agreement <= 1.0);
  CHECK(res.agreement_untrained >= -1.0);
  CHECK(res.agreement_untrained <= 1.0);
  REQUIRE(res.graph_pairs.size() == opt.holdout_count);
  for (const auto& [truth, learned] : res.graph_pairs) {
    REQUIRE(truth.rows == opt.tau);
    REQUIRE(learned.rows == opt.tau);
    for (std::size_t i = 0; i < truth.rows; ++i) {
      double ts = 0, ls = 0;
      for (std::size_t j = 0; j < truth.cols; ++j) {
        ts += truth(i, j);
        ls += learned(i, j);
      }
      CHECK(ts == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(ls == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  // 5 scalar metrics + 3 exported graph pairs written entry-by-entry
  REQUIRE(res.records.size() == 5 + 3 * 2 * opt.tau * opt.tau);
  CHECK(res.records[0].metric == "agreement");
  CHECK(res.records[1].metric == "agreement_untrained");
  CHECK(res.records[5].experiment == "gravity/sample=0");
  CHECK(res.records[5].metric == "truth[0,0]");
  CHECK(res.records[6].metric == "attention[0,0]");
  CHECK(res.records[5].value == res.graph_pairs[0].first(0, 0));
  CHECK(res.records[6].value == res.graph_pairs[0].second(0, 0));

  GravityRunResult res2 = run_gravity(opt);
  std::vector<std::string> a = normalized_lines(res.records);
  std::vector<std::string> b = normalized_lines(res2.records);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  GravityExperimentOptions bad = opt;
  bad.graph_layer = 5;
  CHECK_THROWS_AS(run_gravity(bad), std::invalid_argument);
}

TEST_SUITE_END();
