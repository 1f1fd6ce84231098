#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedfc/fed/federation.hpp"
#include "fedfc/nn/model.hpp"
#include "fedfc/types.hpp"

namespace fedfc::interpret {

// Guided-backprop gradient of the pre-softmax class score, rectified.
struct SaliencyVector {
  Vector values;  // length R(R-1)/2, all >= 0
  int class_id = 0;
  std::string subject_id;
  std::string site_id;
};

struct RoiScoreVector {
  Vector scores;  // length R, in [0,1] once normalized
  bool normalized = false;
};

SaliencyVector guided_gradient(nn::MlpModel& model, const Matrix& x, int c);

// The unrectified plain-rule gradient of the same score; unlike the guided
// variant this is a true derivative, so it can be checked against finite
// differences.
Vector plain_input_gradient(nn::MlpModel& model, const Matrix& x, int c);

// Symmetric R x R matrix with zero diagonal from an upper-triangle vector.
Matrix build_grad_matrix(const Vector& g, Index r);

// Column sums scaled so the max is 1; an all-zero matrix stays all zero and
// is marked unnormalized.
RoiScoreVector roi_scores(const Matrix& mat);

// Indices of the k largest scores, descending, ties to the lower ROI index.
std::vector<Index> top_k(const Vector& scores, int k);

// |A intersect B| / |A union B|; two empty sets count as identical.
double jaccard(const std::vector<Index>& a, const std::vector<Index>& b);

struct BiomarkerCell {
  std::string site;
  int class_id = 0;
  RoiScoreVector scores;
  std::vector<Index> top;
};

struct BiomarkerReport {
  int k = 10;
  std::vector<BiomarkerCell> cells;      // (site, class) sorted
  std::map<int, double> consistency;     // class -> mean pairwise Jaccard
};

// Saliency toward the true class of every test point, averaged per
// (site, class), reduced to ROI scores and top-k sets; consistency compares
// the top-k sets across sites within a class.
BiomarkerReport biomarker_report(nn::MlpModel& model,
                                 const std::vector<fed::SiteData>& tests,
                                 Index r, int k = 10);

}  // namespace fedfc::interpret
