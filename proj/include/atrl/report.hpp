#pragma once

// Report generation from the results store: a fixed-column CSV summary plus
// per-experiment artifacts (log-log sweep plot, attention heatmaps, MSE
// table). Everything is rebuilt from ExperimentRecords alone, so deleting
// intermediates never changes a report.

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "atrl/experiments.hpp"
#include "atrl/mat.hpp"

namespace atrl {

struct SweepCoord {
  double alpha = 0;
  std::size_t r = 0;     // kRankInfinite for "inf"
  std::size_t m_h = 0;   // 0 when the id names a whole curve
};

// "sweep/alpha=0.55/r=6/m_h=4" -> coordinates; nullopt for non-sweep ids.
// Curve ids (no m_h segment) parse with m_h = 0.
std::optional<SweepCoord> parse_sweep_id(const std::string& experiment);

// One row per (experiment, seed) group in first-appearance order; columns
// experiment, alpha, r, m_h, seed, train_mse, test_mse, slope, agreement.
// Graph-entry records are summarized elsewhere and skipped here.
std::string summary_csv(const std::vector<ExperimentRecord>& records);

// Sweep curves in data coordinates, plus the rendered SVG. Each data line is
// the per-m_h median train error of one (alpha, r) curve; every alpha with an
// infinite-rank curve also gets a m_h^(1-2*alpha) reference line anchored at
// that curve's first point.
struct SweepPlot {
  struct Line {
    std::string label;
    bool reference = false;
    std::vector<std::pair<double, double>> pts;  // (m_h, error)
  };
  std::vector<Line> lines;
  std::string svg;
};

SweepPlot build_sweep_plot(const std::vector<ExperimentRecord>& records);

// Side-by-side heatmaps of the exported gravity graph pairs (truth left,
// extracted attention right), one row per exported sample.
std::string gravity_heatmap_svg(const std::vector<ExperimentRecord>& records);

// Eight-cell MSE table over {rnn, transformer} x {with, without order} x
// {original, permuted}, scientific notation, from test_mse records.
std::string table1_text(const std::vector<ExperimentRecord>& records);

// Validates completeness for `kind` ("sweep" | "table1" | "gravity"), then
// writes <out_prefix>_summary.csv plus the kind's artifact:
//   sweep   -> <out_prefix>_fig2.svg
//   gravity -> <out_prefix>_fig1.svg
//   table1  -> <out_prefix>_table1.txt
// Missing cells raise with a list of the absent (experiment, seed) pairs and
// nothing is written.
struct ReportFiles {
  std::vector<std::string> written;
};

ReportFiles emit_report(const std::vector<ExperimentRecord>& records, const std::string& kind,
                        const std::string& out_prefix);

}  // namespace atrl
