#pragma once

#include <string>
#include <vector>

#include "fedfc/types.hpp"

namespace fedfc::data {

struct RoiTimeSeries {
  std::string subject_id;
  std::string site_id;
  int label = 0;            // 0 control, 1 case
  Matrix values;            // T x R, one row per time frame
};

struct ConnectivityFeature {
  std::string subject_id;
  std::string site_id;
  int label = 0;
  int window = 0;
  Vector values;            // R*(R-1)/2 upper-triangle entries
};

// Fully overlapping windows: floor((T - window) / stride) + 1 of them.
std::vector<Matrix> sliding_windows(const Matrix& series, int window, int stride);

// Pearson correlation across time for one window; symmetric, unit diagonal,
// zero-variance columns yield zero correlations.
Matrix pearson_correlation(const Matrix& window);

// Fisher r-to-z with |r| clamped to 1 - 1e-7 so outputs stay finite.
Matrix fisher_z(const Matrix& corr);

// Row-major upper triangle (i < j) of a symmetric R x R matrix.
Vector flatten_upper(const Matrix& sym);
Matrix unflatten_upper(const Vector& flat, Index r);

// windows -> correlation -> fisher z -> flatten for one subject.
std::vector<ConnectivityFeature> subject_features(const RoiTimeSeries& series,
                                                  int window, int stride);

}  // namespace fedfc::data
