#include "atrl/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "atrl/target.hpp"

namespace atrl {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t next = s.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (!end || *end != '\0') return std::nullopt;
  return v;
}

std::optional<std::size_t> parse_size(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (!end || *end != '\0') return std::nullopt;
  return static_cast<std::size_t>(v);
}

// "key=value" -> value if the key matches
std::optional<std::string> strip_key(const std::string& seg, const std::string& key) {
  if (seg.rfind(key + "=", 0) != 0) return std::nullopt;
  return seg.substr(key.size() + 1);
}

bool is_graph_entry(const ExperimentRecord& rec) {
  return rec.experiment.rfind("gravity/sample=", 0) == 0;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string svg_header(double w, double h) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
     << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  return os.str();
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::optional<SweepCoord> parse_sweep_id(const std::string& experiment) {
  const std::vector<std::string> segs = split(experiment, '/');
  if (segs.size() < 3 || segs.size() > 4 || segs[0] != "sweep") return std::nullopt;
  const auto alpha_s = strip_key(segs[1], "alpha");
  const auto r_s = strip_key(segs[2], "r");
  if (!alpha_s || !r_s) return std::nullopt;
  SweepCoord c;
  const auto alpha = parse_double(*alpha_s);
  if (!alpha) return std::nullopt;
  c.alpha = *alpha;
  if (*r_s == "inf") {
    c.r = kRankInfinite;
  } else {
    const auto r = parse_size(*r_s);
    if (!r) return std::nullopt;
    c.r = *r;
  }
  if (segs.size() == 4) {
    const auto mh_s = strip_key(segs[3], "m_h");
    if (!mh_s) return std::nullopt;
    const auto mh = parse_size(*mh_s);
    if (!mh || *mh == 0) return std::nullopt;
    c.m_h = *mh;
  }
  return c;
}

std::string summary_csv(const std::vector<ExperimentRecord>& records) {
  struct Row {
    std::string experiment;
    std::uint64_t seed = 0;
    std::optional<double> train, test, slope, agreement;
  };
  std::vector<Row> rows;
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> index;

  for (const ExperimentRecord& rec : records) {
    if (is_graph_entry(rec) || rec.metric == "epochs") continue;
    const auto key = std::make_pair(rec.experiment, rec.seed);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, rows.size()).first;
      rows.push_back({rec.experiment, rec.seed, {}, {}, {}, {}});
    }
    Row& row = rows[it->second];
    if (rec.metric == "train_mse")
      row.train = rec.value;
    else if (rec.metric == "test_mse")
      row.test = rec.value;
    else if (rec.metric == "slope")
      row.slope = rec.value;
    else if (rec.metric == "agreement" || rec.metric == "agreement_untrained")
      row.agreement = rec.value;
  }

  std::ostringstream os;
  os << "experiment,alpha,r,m_h,seed,train_mse,test_mse,slope,agreement\n";
  auto cell = [](const std::optional<double>& v) {
    return v ? fmt("%.17g", *v) : std::string();
  };
  for (const Row& row : rows) {
    std::string alpha, r, m_h;
    if (const auto c = parse_sweep_id(row.experiment)) {
      alpha = fmt("%g", c->alpha);
      r = c->r == kRankInfinite ? "inf" : std::to_string(c->r);
      if (c->m_h > 0) m_h = std::to_string(c->m_h);
    }
    os << row.experiment << ',' << alpha << ',' << r << ',' << m_h << ',' << row.seed << ','
       << cell(row.train) << ',' << cell(row.test) << ',' << cell(row.slope) << ','
       << cell(row.agreement) << '\n';
  }
  return os.str();
}

SweepPlot build_sweep_plot(const std::vector<ExperimentRecord>& records) {
  // curve key -> m_h -> per-seed train errors, keeping first-appearance order
  struct CurveData {
    SweepCoord coord;
    std::string label;
    std::map<std::size_t, std::vector<double>> by_mh;
  };
  std::vector<CurveData> curves;
  std::map<std::string, std::size_t> curve_index;

  for (const ExperimentRecord& rec : records) {
    if (rec.metric != "train_mse") continue;
    const auto c = parse_sweep_id(rec.experiment);
    if (!c || c->m_h == 0) continue;
    const std::string key = "alpha=" + fmt("%g", c->alpha) + ", r=" +
                            (c->r == kRankInfinite ? "inf" : std::to_string(c->r));
    auto it = curve_index.find(key);
    if (it == curve_index.end()) {
      it = curve_index.emplace(key, curves.size()).first;
      curves.push_back({*c, key, {}});
    }
    curves[it->second].by_mh[c->m_h].push_back(rec.value);
  }
  if (curves.empty()) throw std::invalid_argument("sweep plot: no sweep point records");

  SweepPlot plot;
  for (const CurveData& cd : curves) {
    SweepPlot::Line line;
    line.label = cd.label;
    for (const auto& [m_h, vals] : cd.by_mh) {
      const double med = median_of(vals);
      if (!(med > 0.0))
        throw std::invalid_argument("sweep plot: nonpositive error at " + cd.label);
      line.pts.emplace_back(static_cast<double>(m_h), med);
    }
    plot.lines.push_back(std::move(line));
  }
  // reference decay lines, anchored at each infinite-rank curve's first point
  const std::size_t data_lines = plot.lines.size();
  for (std::size_t i = 0; i < data_lines; ++i) {
    const CurveData& cd = curves[i];
    if (cd.coord.r != kRankInfinite) continue;
    const auto& pts = plot.lines[i].pts;
    const double expo = 1.0 - 2.0 * cd.coord.alpha;
    const double c0 = pts.front().second / std::pow(pts.front().first, expo);
    SweepPlot::Line ref;
    ref.label = "m_h^(" + fmt("%g", expo) + ") reference";
    ref.reference = true;
    for (const auto& [x, y] : pts) {
      (void)y;
      ref.pts.emplace_back(x, c0 * std::pow(x, expo));
    }
    plot.lines.push_back(std::move(ref));
  }

  // render: log-log axes, data space mapped affinely into the plot box
  double lx0 = 1e300, lx1 = -1e300, ly0 = 1e300, ly1 = -1e300;
  for (const auto& line : plot.lines)
    for (const auto& [x, y] : line.pts) {
      lx0 = std::min(lx0, std::log10(x));
      lx1 = std::max(lx1, std::log10(x));
      ly0 = std::min(ly0, std::log10(y));
      ly1 = std::max(ly1, std::log10(y));
    }
  if (lx1 - lx0 < 1e-12) lx1 = lx0 + 1.0;
  if (ly1 - ly0 < 1e-12) ly1 = ly0 + 1.0;

  const double W = 640, H = 480, ml = 70, mr = 200, mt = 30, mb = 50;
  auto px = [&](double x) { return ml + (std::log10(x) - lx0) / (lx1 - lx0) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (std::log10(y) - ly0) / (ly1 - ly0) * (H - mt - mb); };

  std::ostringstream os;
  os << svg_header(W, H);
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\""
     << H - mt - mb << "\" fill=\"none\" stroke=\"#333\"/>\n";
  // decade ticks
  for (int e = static_cast<int>(std::ceil(ly0)); e <= static_cast<int>(std::floor(ly1)); ++e) {
    const double y = py(std::pow(10.0, e));
    os << "<line x1=\"" << ml - 4 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
       << "\" stroke=\"#333\"/>\n"
       << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
       << "\" text-anchor=\"end\" font-size=\"11\">1e" << e << "</text>\n";
  }
  std::set<double> xticks;
  for (const auto& line : plot.lines)
    for (const auto& [x, y] : line.pts) {
      (void)y;
      xticks.insert(x);
    }
  for (double x : xticks) {
    os << "<line x1=\"" << px(x) << "\" y1=\"" << H - mb << "\" x2=\"" << px(x) << "\" y2=\""
       << H - mb + 4 << "\" stroke=\"#333\"/>\n"
       << "<text x=\"" << px(x) << "\" y=\"" << H - mb + 18
       << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt("%g", x) << "</text>\n";
  }
  os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12
     << "\" text-anchor=\"middle\" font-size=\"12\">attention width m_h</text>\n";
  os << "<text x=\"16\" y=\"" << (mt + H - mb) / 2
     << "\" font-size=\"12\" transform=\"rotate(-90 16 " << (mt + H - mb) / 2
     << ")\" text-anchor=\"middle\">train MSE</text>\n";

  std::size_t color = 0;
  double legend_y = mt + 12;
  for (const auto& line : plot.lines) {
    const std::string stroke = line.reference ? "#888" : kPalette[color++ % 6];
    os << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\"";
    if (line.reference) os << " stroke-dasharray=\"6 4\"";
    os << " points=\"";
    for (const auto& [x, y] : line.pts) os << px(x) << ',' << py(y) << ' ';
    os << "\"/>\n";
    if (!line.reference)
      for (const auto& [x, y] : line.pts)
        os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"2.5\" fill=\"" << stroke
           << "\"/>\n";
    os << "<line x1=\"" << W - mr + 12 << "\" y1=\"" << legend_y - 4 << "\" x2=\"" << W - mr + 36
       << "\" y2=\"" << legend_y - 4 << "\" stroke=\"" << stroke << "\" stroke-width=\"2\"";
    if (line.reference) os << " stroke-dasharray=\"6 4\"";
    os << "/>\n<text x=\"" << W - mr + 42 << "\" y=\"" << legend_y << "\" font-size=\"11\">"
       << line.label << "</text>\n";
    legend_y += 16;
  }
  os << "</svg>\n";
  plot.svg = os.str();
  return plot;
}

std::string gravity_heatmap_svg(const std::vector<ExperimentRecord>& records) {
  // sample -> ("truth"/"attention") -> (i, j) -> value
  std::map<std::size_t, std::map<std::string, std::map<std::pair<std::size_t, std::size_t>, double>>>
      samples;
  for (const ExperimentRecord& rec : records) {
    if (!is_graph_entry(rec)) continue;
    const auto idx = parse_size(rec.experiment.substr(std::string("gravity/sample=").size()));
    if (!idx) continue;
    std::size_t i = 0, j = 0;
    char name[16];
    if (std::sscanf(rec.metric.c_str(), "%9[a-z][%zu,%zu]", name, &i, &j) != 3) continue;
    samples[*idx][name][{i, j}] = rec.value;
  }
  if (samples.empty()) throw std::invalid_argument("gravity heatmap: no graph records");

  // reconstruct dense matrices, insisting on complete squares
  struct PairMats {
    Mat truth, attention;
  };
  std::vector<PairMats> mats;
  for (const auto& [idx, byname] : samples) {
    PairMats pm;
    for (const std::string name : {"truth", "attention"}) {
      const auto it = byname.find(name);
      if (it == byname.end())
        throw std::invalid_argument("gravity heatmap: sample " + std::to_string(idx) +
                                    " lacks " + name + " entries");
      std::size_t tau = 0;
      for (const auto& [ij, v] : it->second) {
        (void)v;
        tau = std::max(tau, std::max(ij.first, ij.second) + 1);
      }
      Mat m(tau, tau);
      if (it->second.size() != tau * tau)
        throw std::invalid_argument("gravity heatmap: sample " + std::to_string(idx) +
                                    " has an incomplete " + name + " matrix");
      for (const auto& [ij, v] : it->second) m(ij.first, ij.second) = v;
      (name == std::string("truth") ? pm.truth : pm.attention) = m;
    }
    mats.push_back(std::move(pm));
  }

  const double cellpx = 26, gap = 40, label_h = 24;
  const std::size_t tau = mats[0].truth.rows;
  const double panel = cellpx * static_cast<double>(tau);
  const double W = 40 + panel * 2 + gap + 40;
  const double H = label_h + mats.size() * (panel + 34);

  auto shade = [](double v, double vmax) {
    const double t = vmax > 0 ? std::clamp(v / vmax, 0.0, 1.0) : 0.0;
    const int r = static_cast<int>(255 + t * (8 - 255));
    const int g = static_cast<int>(255 + t * (48 - 255));
    const int b = static_cast<int>(255 + t * (107 - 255));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "rgb(%d,%d,%d)", r, g, b);
    return std::string(buf);
  };

  std::ostringstream os;
  os << svg_header(W, H);
  os << "<text x=\"" << 40 + panel / 2 << "\" y=\"16\" text-anchor=\"middle\" font-size=\"12\">"
     << "ground truth</text>\n"
     << "<text x=\"" << 40 + panel + gap + panel / 2
     << "\" y=\"16\" text-anchor=\"middle\" font-size=\"12\">attention</text>\n";
  double oy = label_h;
  for (std::size_t s = 0; s < mats.size(); ++s) {
    const Mat* pair[2] = {&mats[s].truth, &mats[s].attention};
    for (int p = 0; p < 2; ++p) {
      const Mat& m = *pair[p];
      double vmax = 0;
      for (double v : m.a) vmax = std::max(vmax, v);
      const double ox = 40 + p * (panel + gap);
      for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j)
          os << "<rect x=\"" << ox + static_cast<double>(j) * cellpx << "\" y=\""
             << oy + static_cast<double>(i) * cellpx << "\" width=\"" << cellpx << "\" height=\""
             << cellpx << "\" fill=\"" << shade(m(i, j), vmax)
             << "\" stroke=\"#ccc\" stroke-width=\"0.5\"/>\n";
      os << "<rect x=\"" << ox << "\" y=\"" << oy << "\" width=\"" << panel << "\" height=\""
         << panel << "\" fill=\"none\" stroke=\"#333\"/>\n";
    }
    os << "<text x=\"8\" y=\"" << oy + panel / 2 << "\" font-size=\"11\">#" << s << "</text>\n";
    oy += panel + 34;
  }
  os << "</svg>\n";
  return os.str();
}

std::string table1_text(const std::vector<ExperimentRecord>& records) {
  const char* kinds[2] = {"with_order", "without_order"};
  const char* variants[2] = {"original", "permuted"};
  const char* models[2] = {"rnn", "transformer"};

  std::map<std::string, double> mse;
  for (const ExperimentRecord& rec : records)
    if (rec.metric == "test_mse" && rec.experiment.rfind("table1/", 0) == 0)
      mse[rec.experiment] = rec.value;

  std::vector<std::string> missing;
  for (const char* kind : kinds)
    for (const char* model : models)
      for (const char* variant : variants) {
        const std::string id = std::string("table1/") + kind + "/" + model + "/" + variant;
        if (!mse.count(id)) missing.push_back(id);
      }
  if (!missing.empty()) {
    std::string msg = "report: missing table1 cells:";
    for (const std::string& id : missing) msg += " " + id;
    throw std::invalid_argument(msg);
  }

  std::ostringstream os;
  os << "test MSE            with order                without order\n";
  os << "                    original     permuted     original     permuted\n";
  for (const char* model : models) {
    os << model;
    for (std::size_t pad = std::string(model).size(); pad < 20; ++pad) os << ' ';
    bool first = true;
    for (const char* kind : kinds)
      for (const char* variant : variants) {
        const std::string id = std::string("table1/") + kind + "/" + model + "/" + variant;
        if (!first) os << ' ';
        first = false;
        os << fmt("%-12.2e", mse.at(id));
      }
    os << '\n';
  }
  return os.str();
}

ReportFiles emit_report(const std::vector<ExperimentRecord>& records, const std::string& kind,
                        const std::string& out_prefix) {
  if (records.empty()) throw std::invalid_argument("report: no records");
  if (out_prefix.empty()) throw std::invalid_argument("report: empty output prefix");

  // build everything first so a failed validation writes nothing
  std::vector<std::pair<std::string, std::string>> files;  // path, content
  if (kind == "sweep") {
    // every sweep point must cover the union of seeds
    std::set<std::uint64_t> seeds;
    std::map<std::string, std::set<std::uint64_t>> by_point;
    for (const ExperimentRecord& rec : records) {
      const auto c = parse_sweep_id(rec.experiment);
      if (!c || c->m_h == 0 || rec.metric != "train_mse") continue;
      seeds.insert(rec.seed);
      by_point[rec.experiment].insert(rec.seed);
    }
    if (by_point.empty()) throw std::invalid_argument("report: no sweep records");
    std::string missing;
    for (const auto& [id, have] : by_point)
      for (std::uint64_t s : seeds)
        if (!have.count(s)) missing += " " + id + " seed=" + std::to_string(s);
    if (!missing.empty())
      throw std::invalid_argument("report: missing sweep cells:" + missing);
    files.emplace_back(out_prefix + "_fig2.svg", build_sweep_plot(records).svg);
  } else if (kind == "table1") {
    files.emplace_back(out_prefix + "_table1.txt", table1_text(records));
  } else if (kind == "gravity") {
    bool have_agree = false, have_untrained = false;
    for (const ExperimentRecord& rec : records) {
      have_agree |= rec.metric == "agreement";
      have_untrained |= rec.metric == "agreement_untrained";
    }
    std::string missing;
    if (!have_agree) missing += " gravity agreement";
    if (!have_untrained) missing += " gravity agreement_untrained";
    if (!missing.empty())
      throw std::invalid_argument("report: missing gravity cells:" + missing);
    files.emplace_back(out_prefix + "_fig1.svg", gravity_heatmap_svg(records));
  } else {
    throw std::invalid_argument("report: unknown kind '" + kind + "'");
  }
  files.emplace_back(out_prefix + "_summary.csv", summary_csv(records));

  ReportFiles out;
  for (const auto& [path, content] : files) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("report: cannot open " + path);
    os << content;
    if (!os) throw std::runtime_error("report: write failed on " + path);
    out.written.push_back(path);
  }
  return out;
}

}  // namespace atrl
