#include "fedfc/interpret/interpret.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include "fedfc/data/features.hpp"

namespace fedfc::interpret {

namespace {

Vector score_gradient(nn::MlpModel& model, const Matrix& x, int c,
                      nn::ReluRule rule) {
  if (x.rows() != 1)
    throw std::invalid_argument("saliency expects a single row");
  if (c < 0 || c >= model.output_dim())
    throw std::invalid_argument("saliency: class out of range");
  nn::ForwardCache cache;
  nn::forward(model, x, nn::Mode::Eval, nullptr, &cache);
  Matrix d_top = Matrix::Zero(1, model.output_dim());
  d_top(0, c) = 1.0;  // d y^c / d logits
  nn::BackpropResult back = nn::backprop(model, cache, d_top, true, rule);
  return back.input_grad.row(0).transpose();
}

}  // namespace

SaliencyVector guided_gradient(nn::MlpModel& model, const Matrix& x, int c) {
  SaliencyVector s;
  s.values =
      score_gradient(model, x, c, nn::ReluRule::Guided).cwiseMax(0.0);
  s.class_id = c;
  return s;
}

Vector plain_input_gradient(nn::MlpModel& model, const Matrix& x, int c) {
  return score_gradient(model, x, c, nn::ReluRule::Plain);
}

Matrix build_grad_matrix(const Vector& g, Index r) {
  return data::unflatten_upper(g, r);
}

RoiScoreVector roi_scores(const Matrix& mat) {
  RoiScoreVector out;
  out.scores = mat.colwise().sum().transpose();
  const double peak = out.scores.maxCoeff();
  if (peak > 0.0) {
    out.scores /= peak;
    out.normalized = true;
  }
  return out;
}

std::vector<Index> top_k(const Vector& scores, int k) {
  std::vector<Index> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return a < b;
  });
  const std::size_t take =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), idx.size());
  idx.resize(take);
  return idx;
}

double jaccard(const std::vector<Index>& a, const std::vector<Index>& b) {
  std::set<Index> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::vector<Index> both;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(),
                        std::back_inserter(both));
  const std::size_t uni = sa.size() + sb.size() - both.size();
  if (uni == 0) return 1.0;
  return static_cast<double>(both.size()) / static_cast<double>(uni);
}

BiomarkerReport biomarker_report(nn::MlpModel& model,
                                 const std::vector<fed::SiteData>& tests,
                                 Index r, int k) {
  BiomarkerReport report;
  report.k = k;
  std::vector<const fed::SiteData*> ordered;
  for (const fed::SiteData& t : tests) {
    if (t.x.rows() == 0)
      throw std::invalid_argument("biomarker_report: empty test set for site " +
                                  t.site_id);
    ordered.push_back(&t);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const fed::SiteData* a, const fed::SiteData* b) {
              return a->site_id < b->site_id;
            });

  std::map<int, std::vector<const BiomarkerCell*>> by_class;
  for (const fed::SiteData* t : ordered) {
    std::map<int, std::pair<Vector, int>> sums;  // class -> (sum, count)
    for (Index row = 0; row < t->x.rows(); ++row) {
      const int c = t->y[static_cast<std::size_t>(row)];
      SaliencyVector s = guided_gradient(model, t->x.row(row), c);
      auto it = sums.find(c);
      if (it == sums.end())
        sums.emplace(c, std::make_pair(s.values, 1));
      else {
        it->second.first += s.values;
        ++it->second.second;
      }
    }
    for (auto& [c, acc] : sums) {
      Vector mean = acc.first / static_cast<double>(acc.second);
      BiomarkerCell cell;
      cell.site = t->site_id;
      cell.class_id = c;
      cell.scores = roi_scores(build_grad_matrix(mean, r));
      cell.top = top_k(cell.scores.scores, k);
      report.cells.push_back(std::move(cell));
    }
  }

  for (const BiomarkerCell& cell : report.cells)
    by_class[cell.class_id].push_back(&cell);
  for (const auto& [c, cells] : by_class) {
    double total = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < cells.size(); ++i)
      for (std::size_t j = i + 1; j < cells.size(); ++j) {
        total += jaccard(cells[i]->top, cells[j]->top);
        ++pairs;
      }
    report.consistency[c] = pairs == 0 ? 1.0 : total / pairs;
  }
  return report;
}

}  // namespace fedfc::interpret
