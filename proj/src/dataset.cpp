#include "dtlab/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dtlab/rng.hpp"

namespace dtlab {

namespace {

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct LabelMap {
  enum Kind { kSame, kNegate, kPermute, kScale } kind = kSame;
  double scale = 1.0;
};

LabelMap parse_label_map(const std::string& s) {
  LabelMap m;
  if (s == "same" || s.empty()) {
    m.kind = LabelMap::kSame;
  } else if (s == "negate") {
    m.kind = LabelMap::kNegate;
  } else if (s == "permute") {
    m.kind = LabelMap::kPermute;
  } else if (s.rfind("scale:", 0) == 0) {
    m.kind = LabelMap::kScale;
    m.scale = std::stod(s.substr(6));
  } else {
    throw std::invalid_argument("unknown label_map: " + s);
  }
  return m;
}

Vector map_target(const LabelMap& m, const Vector& y) {
  switch (m.kind) {
    case LabelMap::kSame: return y;
    case LabelMap::kNegate: return -y;
    case LabelMap::kScale: return m.scale * y;
    case LabelMap::kPermute: {
      Vector out(y.size());
      for (int i = 0; i < y.size(); ++i) out[(i + 1) % y.size()] = y[i];
      return out;
    }
  }
  return y;
}

// Fixed rectangular teacher: 2 on the (cyclic) diagonal. Keeps simple specs
// like 1-D "y = 2x" exactly representable.
Matrix teacher_matrix(int out_dim, int in_dim) {
  Matrix t = Matrix::Zero(out_dim, in_dim);
  for (int r = 0; r < out_dim; ++r) t(r, r % in_dim) = 2.0;
  return t;
}

Vector blob_mean(int cls, int n_classes, int dim) {
  // Class means on a radius-3 circle in the first two coordinates
  // (or +-3 along the single axis when dim == 1).
  Vector mu = Vector::Zero(dim);
  const double angle = 2.0 * 3.14159265358979323846 * cls / n_classes;
  if (dim == 1) {
    mu[0] = 3.0 * std::cos(angle);
  } else {
    mu[0] = 3.0 * std::cos(angle);
    mu[1] = 3.0 * std::sin(angle);
  }
  return mu;
}

}  // namespace

void EmpiricalDataset::validate() const {
  if (inputs.rows() < 1) throw std::invalid_argument("dataset: need at least one sample");
  if (inputs.rows() != targets.rows()) {
    throw std::invalid_argument("dataset: inputs/targets length mismatch");
  }
  if (!inputs.allFinite() || !targets.allFinite()) {
    throw std::invalid_argument("dataset: non-finite values");
  }
}

std::pair<EmpiricalDataset, EmpiricalDataset> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.input_dim < 1 || spec.output_dim < 1) {
    throw std::invalid_argument("generate_synthetic: dims must be >= 1");
  }
  if (spec.n_samples < 2) throw std::invalid_argument("generate_synthetic: need n >= 2");
  const LabelMap lmap = parse_label_map(spec.label_map);
  Vector shift = spec.shift;
  if (shift.size() == 0) shift = Vector::Zero(spec.input_dim);
  if (shift.size() != spec.input_dim) {
    throw std::invalid_argument("generate_synthetic: shift dim mismatch");
  }

  const int n = spec.n_samples;
  const int m = spec.input_dim;
  const int d = spec.output_dim;
  EmpiricalDataset src, tgt;
  src.inputs = Matrix(n, m);
  src.targets = Matrix(n, d);
  tgt.inputs = Matrix(n, m);
  tgt.targets = Matrix(n, d);

  SplitMix64 src_rng = SplitMix64::substream(spec.seed, 0);
  SplitMix64 tgt_rng = SplitMix64::substream(spec.seed, 1);

  auto fill_domain = [&](EmpiricalDataset& ds, SplitMix64& rng, bool target_domain) {
    if (spec.kind == "gaussian-blobs") {
      for (int i = 0; i < n; ++i) {
        const int cls = i % d;
        Vector x = blob_mean(cls, d, m);
        for (int c = 0; c < m; ++c) x[c] += rng.gaussian();
        if (target_domain) x += shift;
        Vector onehot = Vector::Zero(d);
        onehot[cls] = 1.0;
        ds.inputs.row(i) = x.transpose();
        ds.targets.row(i) = (target_domain ? map_target(lmap, onehot) : onehot).transpose();
      }
    } else if (spec.kind == "linear-teacher") {
      const Matrix teacher = teacher_matrix(d, m);
      for (int i = 0; i < n; ++i) {
        Vector x(m);
        for (int c = 0; c < m; ++c) x[c] = rng.gaussian();
        if (target_domain) x += shift;
        const Vector y = teacher * x;
        ds.inputs.row(i) = x.transpose();
        ds.targets.row(i) = (target_domain ? map_target(lmap, y) : y).transpose();
      }
    } else if (spec.kind == "low-dim-manifold") {
      // Inputs on an affine subspace of codimension 1: latent k = m-1
      // coordinates embedded by a fixed orthonormal basis (identity columns).
      const int k = m - 1;
      for (int i = 0; i < n; ++i) {
        Vector x = Vector::Zero(m);
        for (int c = 0; c < k; ++c) x[c] = rng.gaussian();
        x[m - 1] = 1.0;  // offset off the origin so the subspace is affine
        if (target_domain) x += shift;
        const Vector y = teacher_matrix(d, m) * x;
        ds.inputs.row(i) = x.transpose();
        ds.targets.row(i) = (target_domain ? map_target(lmap, y) : y).transpose();
      }
    } else {
      throw std::invalid_argument("unknown synthetic kind: " + spec.kind);
    }
  };

  fill_domain(src, src_rng, false);
  fill_domain(tgt, tgt_rng, true);
  src.validate();
  tgt.validate();
  return {std::move(src), std::move(tgt)};
}

EmpiricalDataset read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) || line.empty()) {
    throw std::runtime_error(path + ": no rows");
  }
  // Header x0..x{m-1},y0..y{d-1} determines the dimensions.
  int m = 0, d = 0;
  {
    std::stringstream ss(line);
    std::string col;
    bool seen_y = false;
    while (std::getline(ss, col, ',')) {
      if (col.rfind("x", 0) == 0 && !seen_y) {
        ++m;
      } else if (col.rfind("y", 0) == 0) {
        seen_y = true;
        ++d;
      } else {
        throw std::runtime_error(path + ":1: bad header column '" + col + "'");
      }
    }
    if (m == 0 || d == 0) throw std::runtime_error(path + ":1: header must name x and y columns");
  }
  std::vector<double> values;
  int rows = 0;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int cols = 0;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": non-numeric cell '" + cell + "'");
      }
      if (used != cell.size()) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": non-numeric cell '" + cell + "'");
      }
      values.push_back(v);
      ++cols;
    }
    if (cols != m + d) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(m + d) + " cells, got " + std::to_string(cols));
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error(path + ": no rows");
  EmpiricalDataset ds;
  ds.inputs = Matrix(rows, m);
  ds.targets = Matrix(rows, d);
  for (int i = 0; i < rows; ++i) {
    for (int c = 0; c < m; ++c) ds.inputs(i, c) = values[i * (m + d) + c];
    for (int c = 0; c < d; ++c) ds.targets(i, c) = values[i * (m + d) + m + c];
  }
  ds.validate();
  return ds;
}

void write_csv(const EmpiricalDataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  for (int c = 0; c < ds.input_dim(); ++c) f << (c > 0 ? "," : "") << "x" << c;
  for (int c = 0; c < ds.target_dim(); ++c) f << ",y" << c;
  f << "\n";
  for (int i = 0; i < ds.size(); ++i) {
    for (int c = 0; c < ds.input_dim(); ++c) {
      f << (c > 0 ? "," : "") << format_g17(ds.inputs(i, c));
    }
    for (int c = 0; c < ds.target_dim(); ++c) f << "," << format_g17(ds.targets(i, c));
    f << "\n";
  }
}

ToyInstance make_toy_instance(const Matrix& atoms, const Matrix& ys, const Matrix& yt) {
  if (atoms.rows() == 0) throw std::invalid_argument("make_toy_instance: zero atoms");
  if (ys.rows() != atoms.rows() || yt.rows() != atoms.rows()) {
    throw std::invalid_argument("make_toy_instance: length mismatch");
  }
  if (ys.cols() != yt.cols()) throw std::invalid_argument("make_toy_instance: y dim mismatch");
  ToyInstance inst;
  inst.atoms = atoms;
  inst.ys = ys;
  inst.yt = yt;
  const int n = static_cast<int>(atoms.rows());
  for (int i = 0; i < n; ++i) {
    inst.norm_ys += ys.row(i).norm();
    inst.norm_yt += yt.row(i).norm();
    inst.norm_diff += (ys.row(i) - yt.row(i)).norm();
  }
  inst.norm_ys /= n;
  inst.norm_yt /= n;
  inst.norm_diff /= n;
  return inst;
}

}  // namespace dtlab
