#include "fedfc/data/synthetic.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fedfc/rng.hpp"

namespace fedfc::data {

namespace {

Matrix fill_normal(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

// Cholesky factor, blending toward a scaled identity until the matrix is
// positive definite; errors out instead of distorting beyond the bound.
Matrix chol_with_ridge(Matrix m, const std::string& what) {
  const double scale = m.trace() / static_cast<double>(m.rows());
  double ridge = 0.0;
  for (double step = 1e-8; ridge <= 1.0; step *= 2.0) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    m += step * scale * Matrix::Identity(m.rows(), m.cols());
    ridge += step;
  }
  throw std::runtime_error("synth_generate: " + what +
                           " not positive definite within ridge bound");
}

// Factor-structured random correlation matrix; positive definite by
// construction.
Matrix random_correlation(Index r, Rng& rng) {
  const Index factors = std::max<Index>(2, r / 6);
  Matrix f = fill_normal(r, factors, rng);
  Matrix a = f * f.transpose() +
             static_cast<double>(factors) * 1.5 * Matrix::Identity(r, r);
  Vector d = a.diagonal().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * a * d.asDiagonal();
}

Matrix project_correlation(Matrix c, const std::string& what) {
  double ridge = 0.0;
  for (double step = 1e-8; ridge <= 1.0; step *= 2.0) {
    Eigen::LLT<Matrix> llt(c);
    if (llt.info() == Eigen::Success) return c;
    c = (c + step * Matrix::Identity(c.rows(), c.cols())) / (1.0 + step);
    ridge += step;
  }
  throw std::runtime_error("synth_generate: " + what +
                           " not positive definite within ridge bound");
}

}  // namespace

std::vector<std::string> synth_site_ids(const SynthConfig& cfg) {
  std::vector<std::string> ids;
  for (int s = 0; s < cfg.n_sites; ++s) ids.push_back("site" + std::to_string(s));
  return ids;
}

SynthDataset synth_generate(const SynthConfig& cfg) {
  if (cfg.n_sites < 1) throw std::invalid_argument("synth_generate: need at least one site");
  if (cfg.subjects_per_class < 1)
    throw std::invalid_argument("synth_generate: need at least one subject per class");
  if (cfg.rois < 2) throw std::invalid_argument("synth_generate: need at least two ROIs");
  if (cfg.frames < 2) throw std::invalid_argument("synth_generate: need at least two frames");
  if (cfg.informative_roi_count < 0 || cfg.informative_roi_count > cfg.rois)
    throw std::invalid_argument("synth_generate: informative ROI count out of range");
  if (cfg.signal_strength < 0.0 || cfg.shift_strength < 0.0)
    throw std::invalid_argument("synth_generate: strengths must be non-negative");

  const Index R = cfg.rois;
  SynthDataset out;

  Rng template_rng = Rng::derive(cfg.seed, "template");
  Matrix base = random_correlation(R, template_rng);

  {
    std::vector<int> order(static_cast<std::size_t>(R));
    std::iota(order.begin(), order.end(), 0);
    Rng planted_rng = Rng::derive(cfg.seed, "planted");
    planted_rng.shuffle(order);
    out.informative_rois.assign(order.begin(), order.begin() + cfg.informative_roi_count);
    std::sort(out.informative_rois.begin(), out.informative_rois.end());
  }

  Matrix contrast = base;
  if (cfg.signal_strength > 0.0)
    for (std::size_t a = 0; a < out.informative_rois.size(); ++a)
      for (std::size_t b = a + 1; b < out.informative_rois.size(); ++b) {
        const Index i = out.informative_rois[a], j = out.informative_rois[b];
        const double v = std::clamp(base(i, j) + cfg.signal_strength, -0.95, 0.95);
        contrast(i, j) = v;
        contrast(j, i) = v;
      }
  out.class_templates[0] = project_correlation(base, "class 0 template");
  out.class_templates[1] = project_correlation(contrast, "class 1 template");

  const std::vector<std::string> sites = synth_site_ids(cfg);
  for (const std::string& site : sites) {
    Rng site_rng = Rng::derive(cfg.seed, "site/" + site);
    double shift = cfg.shift_strength;
    if (auto it = cfg.site_shift.find(site); it != cfg.site_shift.end()) shift = it->second;
    if (shift < 0.0)
      throw std::invalid_argument("synth_generate: negative shift for " + site);
    double smooth = 0.0;
    if (auto it = cfg.site_smooth.find(site); it != cfg.site_smooth.end())
      smooth = it->second;
    if (smooth < 0.0 || smooth >= 1.0)
      throw std::invalid_argument("synth_generate: smoothing outside [0, 1) for " +
                                  site);
    double spike = 0.0;
    if (auto it = cfg.site_spike.find(site); it != cfg.site_spike.end())
      spike = it->second;
    if (spike < 0.0 || spike >= 1.0)
      throw std::invalid_argument("synth_generate: spike rate outside [0, 1) for " +
                                  site);

    Matrix mixing = Matrix::Identity(R, R) +
                    shift / std::sqrt(static_cast<double>(R)) * fill_normal(R, R, site_rng);
    Vector mean_shift = shift * fill_normal(R, 1, site_rng);

    for (int cls = 0; cls < 2; ++cls) {
      Matrix cov = mixing * out.class_templates[static_cast<std::size_t>(cls)] *
                   mixing.transpose();
      Matrix chol = chol_with_ridge(cov, "site covariance");
      out.site_covariances.emplace(std::make_pair(site, cls), cov);

      for (int idx = 0; idx < cfg.subjects_per_class; ++idx) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s_c%d_s%03d", site.c_str(), cls, idx);
        RoiTimeSeries ts;
        ts.subject_id = buf;
        ts.site_id = site;
        ts.label = cls;
        Rng subj_rng = Rng::derive(cfg.seed, "series/" + ts.subject_id);
        Matrix z = fill_normal(cfg.frames, R, subj_rng);
        if (smooth > 0.0) {
          // same filter on every channel, so lag-zero correlations and hence
          // the planted structure are preserved; only the sampling behaviour
          // of windowed estimates changes
          const double fresh = std::sqrt(1.0 - smooth * smooth);
          for (Index t = 1; t < z.rows(); ++t)
            z.row(t) = smooth * z.row(t - 1) + fresh * z.row(t);
        }
        ts.values = (z * chol.transpose()).rowwise() + mean_shift.transpose();
        if (spike > 0.0) {
          // motion bursts: a whole frame jumps in unison, signed at random;
          // separate stream so spike-free sites stay bit-identical
          Rng spike_rng = Rng::derive(cfg.seed, "spikes/" + ts.subject_id);
          for (Index t = 0; t < ts.values.rows(); ++t)
            if (spike_rng.uniform01() < spike) {
              const double amp = spike_rng.uniform01() < 0.5 ? 4.0 : -4.0;
              ts.values.row(t).array() += amp;
            }
        }
        out.subjects.push_back(std::move(ts));
      }
    }
  }
  return out;
}

}  // namespace fedfc::data
