#include "fedfc/data/folds.hpp"

#include <stdexcept>

#include "fedfc/rng.hpp"

namespace fedfc::data {

int FoldSplit::fold_of(const std::string& subject_id) const {
  auto it = assignment.find(subject_id);
  if (it == assignment.end())
    throw std::invalid_argument("FoldSplit: unknown subject " + subject_id);
  return it->second;
}

FoldSplit subject_kfold(const std::vector<SubjectInfo>& subjects, int k,
                        std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("subject_kfold: k must be at least 2");
  if (subjects.empty()) throw std::invalid_argument("subject_kfold: no subjects");

  std::map<std::pair<std::string, int>, std::vector<std::string>> strata;
  for (const SubjectInfo& s : subjects) {
    auto [it, inserted] = strata.try_emplace({s.site_id, s.label});
    (void)inserted;
    it->second.push_back(s.subject_id);
  }

  FoldSplit split;
  split.k = k;
  for (auto& [key, ids] : strata) {
    Rng rng = Rng::derive(seed, "fold/" + key.first + "/" + std::to_string(key.second));
    rng.shuffle(ids);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto [it, inserted] = split.assignment.emplace(ids[i], static_cast<int>(i % k));
      if (!inserted)
        throw std::invalid_argument("subject_kfold: duplicate subject " + ids[i]);
    }
  }
  return split;
}

}  // namespace fedfc::data
