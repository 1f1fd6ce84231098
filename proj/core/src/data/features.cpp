#include "fedfc/data/features.hpp"

#include <cmath>
#include <stdexcept>

namespace fedfc::data {

std::vector<Matrix> sliding_windows(const Matrix& series, int window, int stride) {
  if (window <= 0 || stride <= 0)
    throw std::invalid_argument("sliding_windows: window and stride must be positive");
  if (series.rows() < window)
    throw std::invalid_argument("sliding_windows: series shorter than window (" +
                                std::to_string(series.rows()) + " < " +
                                std::to_string(window) + ")");
  const Index count = (series.rows() - window) / stride + 1;
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k)
    out.push_back(series.middleRows(k * stride, window));
  return out;
}

Matrix pearson_correlation(const Matrix& window) {
  const Index T = window.rows(), R = window.cols();
  if (T < 2) throw std::invalid_argument("pearson_correlation: need at least two frames");

  Vector mean = window.colwise().mean();
  Matrix centered = window.rowwise() - mean.transpose();
  Vector sd(R);
  for (Index j = 0; j < R; ++j)
    sd(j) = std::sqrt(centered.col(j).squaredNorm() / static_cast<double>(T));

  Matrix corr = Matrix::Zero(R, R);
  for (Index i = 0; i < R; ++i) {
    corr(i, i) = 1.0;
    if (sd(i) == 0.0) continue;
    for (Index j = i + 1; j < R; ++j) {
      if (sd(j) == 0.0) continue;
      const double cov = centered.col(i).dot(centered.col(j)) / static_cast<double>(T);
      const double r = cov / (sd(i) * sd(j));
      corr(i, j) = r;
      corr(j, i) = r;
    }
  }
  return corr;
}

Matrix fisher_z(const Matrix& corr) {
  constexpr double cap = 1.0 - 1e-7;
  Matrix z(corr.rows(), corr.cols());
  for (Index i = 0; i < corr.rows(); ++i)
    for (Index j = 0; j < corr.cols(); ++j) {
      double r = corr(i, j);
      if (r > cap) r = cap;
      if (r < -cap) r = -cap;
      z(i, j) = std::atanh(r);
    }
  return z;
}

Vector flatten_upper(const Matrix& sym) {
  const Index R = sym.rows();
  if (sym.cols() != R) throw std::invalid_argument("flatten_upper: matrix not square");
  Vector flat(R * (R - 1) / 2);
  Index k = 0;
  for (Index i = 0; i < R; ++i)
    for (Index j = i + 1; j < R; ++j) flat(k++) = sym(i, j);
  return flat;
}

Matrix unflatten_upper(const Vector& flat, Index r) {
  if (flat.size() != r * (r - 1) / 2)
    throw std::invalid_argument("unflatten_upper: length does not match dimension");
  Matrix sym = Matrix::Zero(r, r);
  Index k = 0;
  for (Index i = 0; i < r; ++i)
    for (Index j = i + 1; j < r; ++j) {
      sym(i, j) = flat(k);
      sym(j, i) = flat(k);
      ++k;
    }
  return sym;
}

std::vector<ConnectivityFeature> subject_features(const RoiTimeSeries& series,
                                                  int window, int stride) {
  std::vector<Matrix> windows = sliding_windows(series.values, window, stride);
  std::vector<ConnectivityFeature> out;
  out.reserve(windows.size());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    ConnectivityFeature f;
    f.subject_id = series.subject_id;
    f.site_id = series.site_id;
    f.label = series.label;
    f.window = static_cast<int>(w);
    f.values = flatten_upper(fisher_z(pearson_correlation(windows[w])));
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace fedfc::data
