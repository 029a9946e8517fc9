#ifndef DTLAB_STATS_HPP_
#define DTLAB_STATS_HPP_

#include <vector>

namespace dtlab {

struct Correlation {
  double value = 0.0;
  bool defined = false;  // needs >= 2 points and variation on both axes
};

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y);

// Spearman rank correlation with average ranks for ties.
Correlation spearman(const std::vector<double>& x, const std::vector<double>& y);

std::vector<double> average_ranks(const std::vector<double>& values);

}  // namespace dtlab

#endif  // DTLAB_STATS_HPP_
