#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedfc/types.hpp"

namespace fedfc::eval {

// Subject-level decision over per-window binary predictions: class 1 wins
// only with a strict majority, ties go to class 0.
int majority_vote(const std::vector<int>& window_predictions);

struct FoldScore {
  double subject_accuracy = 0.0;
  double window_accuracy = 0.0;
  int subjects = 0;
  int windows = 0;
};

// Window predictions and true labels grouped per subject; every subject must
// have at least one window.
FoldScore score_windows(
    const std::map<std::string, std::vector<int>>& predictions_by_subject,
    const std::map<std::string, int>& label_by_subject);

}  // namespace fedfc::eval
