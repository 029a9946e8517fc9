#ifndef DTLAB_DATASET_HPP_
#define DTLAB_DATASET_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dtlab/network.hpp"

namespace dtlab {

// Finite sample with uniform weights 1/n. Rows are samples.
struct EmpiricalDataset {
  Matrix inputs;   // n x m
  Matrix targets;  // n x d

  int size() const { return static_cast<int>(inputs.rows()); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }
  int target_dim() const { return static_cast<int>(targets.cols()); }

  void validate() const;
};

struct SyntheticSpec {
  // gaussian-blobs | low-dim-manifold | linear-teacher
  std::string kind = "gaussian-blobs";
  int input_dim = 2;
  // Classes for gaussian-blobs (one-hot targets), output dim otherwise.
  int output_dim = 2;
  int n_samples = 64;
  Vector shift;  // target-domain input mean shift; empty means zero
  // same | negate | permute | scale:<a>  (how y_T relates to y_S's rule)
  std::string label_map = "same";
  std::uint64_t seed = 0;
};

std::pair<EmpiricalDataset, EmpiricalDataset> generate_synthetic(const SyntheticSpec& spec);

// CSV with header x0..x{m-1},y0..y{d-1}; comma separated, '.' decimal point,
// LF newlines, 17 significant digits.
EmpiricalDataset read_csv(const std::string& path);
void write_csv(const EmpiricalDataset& ds, const std::string& path);

// The shared-marginal instance: atoms with uniform mass, per-atom source and
// target values, Euclidean norm. ||f||_D is the average of per-atom norms.
struct ToyInstance {
  Matrix atoms;    // n x m
  Matrix ys;       // n x d
  Matrix yt;       // n x d
  double norm_ys = 0.0;
  double norm_yt = 0.0;
  double norm_diff = 0.0;
};

ToyInstance make_toy_instance(const Matrix& atoms, const Matrix& ys, const Matrix& yt);

}  // namespace dtlab

#endif  // DTLAB_DATASET_HPP_
