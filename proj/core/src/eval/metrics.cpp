#include "fedfc/eval/metrics.hpp"

#include <stdexcept>

namespace fedfc::eval {

int majority_vote(const std::vector<int>& window_predictions) {
  if (window_predictions.empty())
    throw std::invalid_argument("majority_vote: no window predictions");
  int ones = 0;
  for (int p : window_predictions) {
    if (p != 0 && p != 1)
      throw std::invalid_argument("majority_vote: predictions must be 0 or 1");
    ones += p;
  }
  return 2 * ones > static_cast<int>(window_predictions.size()) ? 1 : 0;
}

FoldScore score_windows(
    const std::map<std::string, std::vector<int>>& predictions_by_subject,
    const std::map<std::string, int>& label_by_subject) {
  if (predictions_by_subject.empty())
    throw std::invalid_argument("score_windows: no subjects");

  FoldScore score;
  int correct_subjects = 0, correct_windows = 0;
  for (const auto& [subject, preds] : predictions_by_subject) {
    auto it = label_by_subject.find(subject);
    if (it == label_by_subject.end())
      throw std::invalid_argument("score_windows: no label for subject " + subject);
    const int label = it->second;
    if (majority_vote(preds) == label) ++correct_subjects;
    for (int p : preds)
      if (p == label) ++correct_windows;
    score.windows += static_cast<int>(preds.size());
  }
  score.subjects = static_cast<int>(predictions_by_subject.size());
  score.subject_accuracy = static_cast<double>(correct_subjects) / score.subjects;
  score.window_accuracy = static_cast<double>(correct_windows) / score.windows;
  return score;
}

}  // namespace fedfc::eval
