#include "fedfc/data/normalize.hpp"

#include <cmath>
#include <stdexcept>

namespace fedfc::data {

std::map<std::string, NormStats> zscore_fit(
    const std::vector<ConnectivityFeature>& train) {
  if (train.empty()) throw std::invalid_argument("zscore_fit: no training vectors");

  std::map<std::string, std::vector<const ConnectivityFeature*>> by_site;
  for (const ConnectivityFeature& f : train) by_site[f.site_id].push_back(&f);

  std::map<std::string, NormStats> stats;
  for (auto& [site, rows] : by_site) {
    const Index dim = rows.front()->values.size();
    Vector sum = Vector::Zero(dim);
    for (const ConnectivityFeature* f : rows) {
      if (f->values.size() != dim)
        throw std::invalid_argument("zscore_fit: inconsistent feature dimension at site " + site);
      sum += f->values;
    }
    const double n = static_cast<double>(rows.size());
    Vector mean = sum / n;
    Vector ss = Vector::Zero(dim);
    for (const ConnectivityFeature* f : rows) {
      Vector d = f->values - mean;
      ss += d.cwiseProduct(d);
    }
    NormStats s;
    s.mean = std::move(mean);
    s.std = (ss / n).cwiseSqrt().cwiseMax(1e-8);
    stats.emplace(site, std::move(s));
  }
  return stats;
}

Vector zscore_apply(const std::map<std::string, NormStats>& stats,
                    const std::string& site_id, const Vector& x) {
  auto it = stats.find(site_id);
  if (it == stats.end())
    throw std::invalid_argument("zscore_apply: no statistics for site " + site_id);
  if (x.size() != it->second.mean.size())
    throw std::invalid_argument("zscore_apply: feature dimension mismatch");
  return (x - it->second.mean).cwiseQuotient(it->second.std);
}

}  // namespace fedfc::data
