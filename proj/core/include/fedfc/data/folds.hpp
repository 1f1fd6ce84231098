#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fedfc::data {

struct SubjectInfo {
  std::string subject_id;
  std::string site_id;
  int label = 0;
};

struct FoldSplit {
  int k = 0;
  std::map<std::string, int> assignment;  // subject id -> fold

  int fold_of(const std::string& subject_id) const;
};

// Subject-wise k-fold, stratified by (site, label): within each stratum the
// shuffled subjects are dealt round-robin, so fold sizes differ by at most
// one per stratum.  Deterministic in seed.
FoldSplit subject_kfold(const std::vector<SubjectInfo>& subjects, int k,
                        std::uint64_t seed);

}  // namespace fedfc::data
