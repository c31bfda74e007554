#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lidarsdf/detector.hpp"

namespace lidarsdf {

inline constexpr double kMatchRadius = 5.0;

struct TrialOutcome {
  BevBox gt;
  double score = 0.0;  // 0 when unmatched
  bool matched = false;
  std::string scene_id;
};

struct Curve {
  std::vector<double> thresholds;
  std::vector<double> recall;
};

/// Highest-scoring detection whose centre is strictly closer than 5 m to the gt centre.
TrialOutcome match_detection(const std::vector<Detection>& detections, const BevBox& gt);

/// recall(t) = fraction of outcomes with score > t on a uniform grid over [0, 1].
Curve threshold_recall(const std::vector<TrialOutcome>& outcomes, int n_thresholds = 1001);

/// Trapezoidal area under the curve over its threshold range.
double auc(const Curve& curve);

struct GridCell {
  double sum = 0.0;
  int count = 0;
  double mean() const { return count > 0 ? sum / count : 0.0; }
};

/// Keyed by integer cell index (floor(x / cell), floor(y / cell)); cells with no pairs are absent.
using ReductionGrid = std::map<std::pair<int, int>, GridCell>;

/// Per-cell mean of (baseline score - adversarial score), placed by the baseline gt centre.
ReductionGrid score_reduction_grid(const std::vector<std::pair<TrialOutcome, TrialOutcome>>& pairs,
                                   double cell = 10.0);

/// CSV `threshold,recall`.
std::string curve_to_csv(const Curve& curve);

/// CSV `cell_x,cell_y,mean_reduction,count`; cell_x/cell_y are the cell's lower corner.
std::string grid_to_csv(const ReductionGrid& grid, double cell = 10.0);

}  // namespace lidarsdf
