#ifndef DTLAB_ADVVERIFY_HPP_
#define DTLAB_ADVVERIFY_HPP_

#include <cstdint>
#include <vector>

#include "dtlab/dataset.hpp"
#include "dtlab/network.hpp"

namespace dtlab {

// Largest singular value by power iteration on M^T M (deterministic starts).
double spectral_norm(const Matrix& m);

// Sign pattern of the relu preactivations, one bit vector per hidden layer.
struct ActivationPattern {
  std::vector<std::vector<std::uint8_t>> bits;
};

ActivationPattern activation_pattern(const Network& net, const Vector& x);

struct RegionRadius {
  double value = 0.0;     // l2 ball radius on which the pattern is certified
  int skipped_rows = 0;   // degenerate all-zero weight rows
  bool exact = false;     // exact hyperplane distance (single hidden layer)
};

// For one hidden layer: exact min distance to the layer-1 hyperplanes.
// Deeper nets get a certified lower bound via layer-wise Lipschitz
// propagation.
RegionRadius region_radius(const Network& net, const Vector& x);

struct JacEquivReport {
  double sup_dev = 0.0;          // max ||f(x+d)-f(x)|| over ||d||_2 = eps
  double eps_times_opnorm = 0.0; // eps * sigma_max(J)
  double rel_gap = 0.0;
  double epsilon = 0.0;
  bool skipped = false;          // zero radius: both sides vanish
};

JacEquivReport verify_jacobian_equivalence(const Network& net, const Vector& x, int n_probe,
                                           std::uint64_t seed);

struct AobjConfig {
  double lambda = 0.0;
  double epsilon = 0.1;  // the fixed radius constant in the objective
};

// Empirical risk plus (lambda * epsilon / n) * sum spectral norms of the
// whole-model Jacobians. Heads are pure matrices (rows = output weights).
double aobj_eval(const Matrix& head, const Network& extractor, const EmpiricalDataset& data,
                 const AobjConfig& cfg);

// Objective value of the zero function: (1/n) sum ||y_i||^2, lambda-free.
double aobj_zero(const EmpiricalDataset& data);

struct MembershipReport {
  bool member = false;
  Matrix best_head;
  double best_obj = 0.0;
  double zero_obj = 0.0;
};

// Does any head with all row norms >= delta reach the zero-function
// objective? Inner infimum approximated by a projected least-squares start
// refined with monotone projected gradient descent, plus any caller-supplied
// candidate heads.
MembershipReport class_membership(const Network& extractor, const EmpiricalDataset& data,
                                  const AobjConfig& cfg, double delta,
                                  const std::vector<Matrix>& extra_candidates = {});

struct NestingPairReport {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double witness_t = 0.0;      // bisection parameter of the boundary witness
  double witness_alpha = 0.0;
  double witness_c = 0.0;
  bool member_lambda1 = false; // expected true (objective meets the zero bar)
  bool member_lambda2 = false; // expected false
  double margin_lambda2 = 0.0; // inner inf at lambda2 minus the zero bar
  int b_doublings = -1;        // doublings until the scaled-identity net exits the class
  double b_found = -1.0;
  bool b_certified = false;    // exclusion certified by the lambda*eps*B*delta lower bound
};

struct NestingReport {
  std::vector<NestingPairReport> pairs;
  double ybar_norm = 0.0;
};

// Boundary-witness construction per adjacent lambda pair plus the
// scaled-identity exclusion witness. Errors when ybar = 0 or the bisection
// bracket cannot be found.
NestingReport verify_nesting(const EmpiricalDataset& data, const std::vector<double>& lambda_grid,
                             double delta, const AobjConfig& cfg, int max_b_doublings = 60);

// The boundary witness network itself (exposed for tests): a rank-1 first
// layer reading alpha * x_1 + c into the first feature.
Network witness_network(int input_dim, double alpha, double c);

// Exact inner infimum of the objective over the witness head ray
// {w e_1^T : ||w|| >= delta} for a witness extractor.
double witness_inner_inf(const EmpiricalDataset& data, double alpha, double c, double lambda,
                         double epsilon, double delta);

}  // namespace dtlab

#endif  // DTLAB_ADVVERIFY_HPP_
