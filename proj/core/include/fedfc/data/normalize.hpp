#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedfc/data/features.hpp"
#include "fedfc/types.hpp"

namespace fedfc::data {

struct NormStats {
  Vector mean;
  Vector std;  // population std, floored at 1e-8
};

// Feature-wise statistics per site, fitted on training vectors only.
std::map<std::string, NormStats> zscore_fit(
    const std::vector<ConnectivityFeature>& train);

// (x - mean) / std with the fitting site's statistics; unknown site throws.
Vector zscore_apply(const std::map<std::string, NormStats>& stats,
                    const std::string& site_id, const Vector& x);

}  // namespace fedfc::data
