#pragma once

// Plain dense row-major matrix for the numerical-linear-algebra side of the
// project (SVD, POD, attention graphs). Deliberately separate from Tensor:
// nothing here ever carries gradients.

#include <cstddef>
#include <vector>

namespace atrl {

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
  std::size_t numel() const { return rows * cols; }
};

inline Mat transpose(const Mat& m) {
  Mat t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

}  // namespace atrl
