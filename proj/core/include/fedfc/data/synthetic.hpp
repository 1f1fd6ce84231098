#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fedfc/data/features.hpp"
#include "fedfc/types.hpp"

namespace fedfc::data {

struct SynthConfig {
  int n_sites = 4;
  int subjects_per_class = 20;  // per site
  int rois = 30;
  int frames = 47;
  int window = 32;
  int stride = 1;
  double signal_strength = 0.3;   // class contrast on planted ROI pairs
  double shift_strength = 0.0;    // site-specific affine perturbation
  int informative_roi_count = 10;
  std::uint64_t seed = 0;
  // Per-site overrides of shift_strength, keyed by site id ("site0", ...).
  std::map<std::string, double> site_shift;
  // per-site AR(1) temporal smoothing coefficient in [0, 1); models scanner
  // filtering differences, which survive per-feature normalization
  std::map<std::string, double> site_smooth;
  // per-site per-frame probability of a motion burst that hits every ROI at
  // once; bursts drag all window correlations upward together, a site
  // signature that per-feature standardization cannot remove
  std::map<std::string, double> site_spike;
};

struct SynthDataset {
  std::vector<RoiTimeSeries> subjects;
  std::vector<int> informative_rois;            // sorted ROI indices
  std::array<Matrix, 2> class_templates;        // correlation, per class
  std::map<std::pair<std::string, int>, Matrix> site_covariances;
};

// Two class-level connectivity templates differing on pairs within the
// planted ROI set; per site an affine perturbation (mean shift plus a mixing
// of the ROI axes, fixed per site by seed) applied to correlated Gaussian
// series realizing the per-site, per-class covariance.  shift_strength 0
// makes every site's class-conditional covariance identical.
SynthDataset synth_generate(const SynthConfig& cfg);

std::vector<std::string> synth_site_ids(const SynthConfig& cfg);

}  // namespace fedfc::data
