#ifndef DTLAB_ROBUSTNESS_HPP_
#define DTLAB_ROBUSTNESS_HPP_

#include <cstdint>

#include "dtlab/dataset.hpp"
#include "dtlab/network.hpp"

namespace dtlab {

enum class AttackNorm { kLinf, kL2 };

struct AttackConfig {
  double epsilon = 0.25;
  int steps = 20;
  double step_size = 0.0;  // <= 0 means epsilon / 8
  bool random_start = false;
  AttackNorm norm = AttackNorm::kLinf;
  std::uint64_t seed = 0;

  double effective_step() const { return step_size > 0.0 ? step_size : epsilon / 8.0; }
  void validate() const;
  // True when step_size * steps < epsilon (attack may not reach the boundary).
  bool underpowered() const;
};

// Projected gradient ascent on the squared loss against target y within the
// epsilon ball around x. The returned point never has lower loss than x when
// random_start is false (the start point stays in the candidate set).
Vector pgd_attack(const Network& model, const Vector& x, const Vector& y, const AttackConfig& cfg);

double clean_accuracy(const Network& model, const EmpiricalDataset& data);

// Fraction of points that are correctly classified and stay correctly
// classified under attack.
double robust_accuracy(const Network& model, const EmpiricalDataset& data, const AttackConfig& cfg);

int argmax_index(const Vector& v);

}  // namespace dtlab

#endif  // DTLAB_ROBUSTNESS_HPP_
