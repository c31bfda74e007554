#include "lidarsdf/eval.hpp"

#include <cmath>
#include <sstream>

#include "lidarsdf/errors.hpp"

namespace lidarsdf {

TrialOutcome match_detection(const std::vector<Detection>& detections, const BevBox& gt) {
  TrialOutcome out;
  out.gt = gt;
  for (const auto& d : detections) {
    if (!((d.box.center() - gt.center()).norm() < kMatchRadius)) continue;
    if (!out.matched || d.score > out.score) {
      out.score = d.score;
      out.matched = true;
    }
  }
  return out;
}

Curve threshold_recall(const std::vector<TrialOutcome>& outcomes, int n_thresholds) {
  if (outcomes.empty()) throw EmptyOutcomes("threshold_recall needs at least one outcome");
  if (n_thresholds < 2) throw InvalidArgument("need at least two thresholds");
  Curve c;
  c.thresholds.resize(static_cast<std::size_t>(n_thresholds));
  c.recall.resize(static_cast<std::size_t>(n_thresholds));
  const double total = static_cast<double>(outcomes.size());
  for (int i = 0; i < n_thresholds; ++i) {
    const double t = static_cast<double>(i) / (n_thresholds - 1);
    std::size_t above = 0;
    for (const auto& o : outcomes) {
      if (o.matched && o.score > t) ++above;
    }
    c.thresholds[static_cast<std::size_t>(i)] = t;
    c.recall[static_cast<std::size_t>(i)] = static_cast<double>(above) / total;
  }
  return c;
}

double auc(const Curve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.thresholds.size(); ++i) {
    area += 0.5 * (curve.recall[i] + curve.recall[i - 1]) * (curve.thresholds[i] - curve.thresholds[i - 1]);
  }
  return area;
}

ReductionGrid score_reduction_grid(const std::vector<std::pair<TrialOutcome, TrialOutcome>>& pairs, double cell) {
  if (!(cell > 0.0)) throw InvalidArgument("cell size must be positive");
  ReductionGrid grid;
  for (const auto& [base, adv] : pairs) {
    const std::pair<int, int> key{static_cast<int>(std::floor(base.gt.cx() / cell)),
                                  static_cast<int>(std::floor(base.gt.cy() / cell))};
    auto& c = grid[key];
    c.sum += base.score - adv.score;
    ++c.count;
  }
  return grid;
}

std::string curve_to_csv(const Curve& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "threshold,recall\n";
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) os << curve.thresholds[i] << ',' << curve.recall[i] << '\n';
  return os.str();
}

std::string grid_to_csv(const ReductionGrid& grid, double cell) {
  std::ostringstream os;
  os.precision(17);
  os << "cell_x,cell_y,mean_reduction,count\n";
  for (const auto& [key, c] : grid) {
    os << key.first * cell << ',' << key.second * cell << ',' << c.mean() << ',' << c.count << '\n';
  }
  return os.str();
}

}  // namespace lidarsdf
