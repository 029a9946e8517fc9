#ifndef DTLAB_PSEUDOMETRIC_HPP_
#define DTLAB_PSEUDOMETRIC_HPP_

#include <cstdint>
#include <vector>

#include "dtlab/dataset.hpp"
#include "dtlab/network.hpp"
#include "dtlab/train.hpp"

namespace dtlab {

// Finite surrogate for the extractor class F; the fine-tuning class G is
// linear heads with intercept, optionally ridge-stabilized.
struct FunctionClassSample {
  std::vector<Network> extractors;
  double ridge = 0.0;

  void validate() const;
};

// Infimum over linear heads of the loss of g o f on data (exact least
// squares; minimum-norm solution when ridge = 0).
double inf_finetune_loss(const Network& extractor, const EmpiricalDataset& data, double ridge = 0.0);

struct PerExtractorLosses {
  double loss_s = 0.0;
  double loss_t = 0.0;
};

struct PseudometricEstimate {
  double value = 0.0;
  int argmax_extractor = -1;
  std::vector<PerExtractorLosses> per_extractor;
};

PseudometricEstimate estimate_pseudometric(const FunctionClassSample& cls,
                                           const EmpiricalDataset& ds,
                                           const EmpiricalDataset& dt);

struct TransferBoundReport {
  double tau = 0.0;          // inf_g loss_T(g o f_model) - loss_S(model)
  double d = 0.0;            // pseudometric over the class
  double source_loss = 0.0;  // the model's own head on the source
  double target_inf = 0.0;
  bool holds = false;        // tau <= d + 1e-9
};

// The model's extractor must be a member of cls.extractors.
TransferBoundReport check_transfer_bound(const TrainedModel& model, const FunctionClassSample& cls,
                                         const EmpiricalDataset& ds, const EmpiricalDataset& dt);

struct RademacherEstimate {
  double value = 0.0;
  double std_error = 0.0;
  int n_draws = 0;
};

// Monte Carlo sup-correlation of a finite set of loss functions with
// Rademacher signs: rows of `loss_values` are functions, columns samples.
RademacherEstimate rademacher_mc_values(const Matrix& loss_values, int n_draws, std::uint64_t seed);

// Loss grid = class extractors x (least-squares head plus perturbed heads).
// A finite grid sup underestimates the true complexity, so downstream
// reports flag results as estimate-based.
RademacherEstimate rademacher_mc(const FunctionClassSample& cls, const EmpiricalDataset& data,
                                 int n_draws, int heads_per_extractor = 64, std::uint64_t seed = 0);

// Exact W1 between two equal-size empirical samples, Euclidean metric on the
// concatenated (x, y) points. Cubic-time exact assignment; n capped at 256.
double wasserstein_exact(const EmpiricalDataset& a, const EmpiricalDataset& b);

// Exact solver for the square assignment problem (returns minimum total
// cost). Exposed for testing.
double solve_assignment(const Matrix& cost);

// 0.5 * sum |p - q| over a shared finite support; masses must sum to 1.
double tv_discrete(const std::vector<double>& p, const std::vector<double>& q);

struct EmpBoundReport {
  double tau = 0.0;
  double d_hat = 0.0;
  double rad_s = 0.0;
  double rad_t = 0.0;
  double concentration = 0.0;  // 9 c sqrt(ln(8/delta) / (2 n))
  double rhs = 0.0;
  double slack = 0.0;  // rhs - tau
  bool holds = false;
  bool estimate_based = true;  // the Rademacher terms come from a grid sup
  double c = 0.0;
  double delta = 0.0;
  int n = 0;
};

// Assembles the finite-sample transfer bound from the pieces above.
// Errors if any observed per-sample loss exceeds the stated bound c.
EmpBoundReport check_emp_bound(const TrainedModel& model, const FunctionClassSample& cls,
                               const EmpiricalDataset& ds, const EmpiricalDataset& dt,
                               double delta, double c, int rad_draws = 200,
                               std::uint64_t seed = 0);

}  // namespace dtlab

#endif  // DTLAB_PSEUDOMETRIC_HPP_
