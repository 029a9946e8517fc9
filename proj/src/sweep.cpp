#include "dtlab/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dtlab/rng.hpp"

namespace dtlab {

namespace {

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CellResult {
  double clean_acc_src = 0.0;
  double robust_acc_src = 0.0;
  double acc_src_ft = 0.0;
  double acc_tgt = 0.0;
  bool failed = false;
};

CellResult run_cell(const SweepConfig& cfg, const EmpiricalDataset& source,
                    const EmpiricalDataset& target, double value, std::uint64_t seed) {
  CellResult cell;
  try {
    TrainConfig tc = apply_knob(cfg.base, cfg.knob, value);
    tc.seed = seed;
    std::vector<int> dims;
    dims.push_back(source.input_dim());
    for (int h : cfg.hidden) dims.push_back(h);
    dims.push_back(source.target_dim());
    const Network arch = random_network(dims, cfg.activation,
                                        SplitMix64::substream(seed, 99).next_u64());
    const TrainedModel model = sgd_train(tc, source, arch);
    const Network full = model.full_network();

    cell.clean_acc_src = clean_accuracy(full, source);
    AttackConfig atk = cfg.attack;
    atk.seed = SplitMix64::substream(seed, 7).next_u64();
    cell.robust_acc_src = robust_accuracy(full, source, atk);

    const FineTuneResult ft = fine_tune_linear(model.extractor, target, cfg.finetune_ridge);
    TrainedModel transferred;
    transferred.extractor = model.extractor;
    transferred.head_weight = ft.head_weight;
    transferred.head_bias = ft.head_bias;
    cell.acc_tgt = evaluate(transferred, target, EvalMode::kArgmaxAccuracy);
    cell.acc_src_ft = evaluate(transferred, source, EvalMode::kArgmaxAccuracy);
  } catch (const std::runtime_error&) {
    cell.failed = true;  // numerical failure (NaN/Inf abort); row marked failed
  }
  return cell;
}

}  // namespace

void SweepConfig::validate() const {
  if (values.empty()) throw std::invalid_argument("sweep: values must be nonempty");
  if (seeds.empty()) throw std::invalid_argument("sweep: seeds must be nonempty");
  if (threads < 1) throw std::invalid_argument("sweep: threads must be >= 1");
  base.validate();
  attack.validate();
  apply_knob(base, knob, values.front());  // validates the knob name
}

TrainConfig apply_knob(const TrainConfig& base, const std::string& knob, double value) {
  TrainConfig tc = base;
  if (knob == "reg.lambda") {
    if (base.regularizer.kind == RegularizerKind::kNone ||
        base.regularizer.kind == RegularizerKind::kLastLayerNorm) {
      throw std::invalid_argument("sweep: reg.lambda knob needs a lambda-style regularizer");
    }
    tc.regularizer.lambda = value;
    if (base.regularizer.kind == RegularizerKind::kAdversarial) tc.regularizer.adv_epsilon = value;
  } else if (knob == "reg.target_norm") {
    if (value == 0.0) {
      tc.regularizer.kind = RegularizerKind::kNone;
    } else {
      tc.regularizer.kind = RegularizerKind::kLastLayerNorm;
      tc.regularizer.target_norm = value;
    }
  } else if (knob == "aug.b_sigma" || knob == "aug.w_theta" || knob == "aug.shift_mag") {
    if (!base.augmentation) {
      throw std::invalid_argument("sweep: augmentation knob needs an augmentation block");
    }
    AugmentationSpec aug = *base.augmentation;
    if (knob == "aug.b_sigma") {
      aug.b_kind = BDistKind::kGaussianIso;
      aug.b_sigma = value;
    } else if (knob == "aug.w_theta") {
      aug.w_kind = WDistKind::kFixedPlaneRotation;
      aug.w_theta = value;
    } else {
      if (value == 0.0) {
        aug.b_kind = BDistKind::kZero;
      } else {
        aug.b_kind = BDistKind::kFixedShift;
        if (aug.b_shift.size() == 0 || aug.b_shift.norm() == 0.0) {
          throw std::invalid_argument("sweep: aug.shift_mag needs a base shift direction");
        }
        aug.b_shift = (value / aug.b_shift.norm()) * aug.b_shift;
      }
    }
    tc.augmentation = aug;
  } else {
    throw std::invalid_argument("sweep: unknown knob '" + knob + "'");
  }
  return tc;
}

SweepReport run_sweep(const SweepConfig& cfg, const EmpiricalDataset& source,
                      const EmpiricalDataset& target) {
  cfg.validate();
  source.validate();
  target.validate();

  std::vector<double> values = cfg.values;
  if (std::find(values.begin(), values.end(), 0.0) == values.end()) {
    values.insert(values.begin(), 0.0);  // vanilla cells pair each seed
  }

  struct Task {
    double value;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (double v : values) {
    for (std::uint64_t s : cfg.seeds) tasks.push_back({v, s});
  }
  std::vector<CellResult> cells(tasks.size());

  const int n_threads = std::min<int>(cfg.threads, static_cast<int>(tasks.size()));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      cells[i] = run_cell(cfg, source, target, tasks[i].value, tasks[i].seed);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (int t = 0; t < n_threads; ++t) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
          cells[i] = run_cell(cfg, source, target, tasks[i].value, tasks[i].seed);
        }
      });
    }
    for (std::thread& w : workers) w.join();
  }

  // Per-seed vanilla gaps (value == 0 cells).
  std::map<std::uint64_t, double> vanilla_gap;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].value == 0.0 && !cells[i].failed) {
      vanilla_gap[tasks[i].seed] = cells[i].acc_tgt - cells[i].acc_src_ft;
    }
  }

  SweepReport report;
  report.rows.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    SweepRow row;
    row.knob = cfg.knob;
    row.value = tasks[i].value;
    row.seed = tasks[i].seed;
    if (cells[i].failed || vanilla_gap.count(tasks[i].seed) == 0) {
      row.status = "failed";
    } else {
      row.clean_acc_src = cells[i].clean_acc_src;
      row.robust_acc_src = cells[i].robust_acc_src;
      row.acc_src_ft = cells[i].acc_src_ft;
      row.acc_tgt = cells[i].acc_tgt;
      row.rel_dt = (cells[i].acc_tgt - cells[i].acc_src_ft) - vanilla_gap[tasks[i].seed];
    }
    report.rows.push_back(std::move(row));
  }
  report.stats = compute_stats(report.rows);
  return report;
}

SweepStats compute_stats(const std::vector<SweepRow>& rows) {
  SweepStats stats;
  std::vector<double> knob, robust, reldt;
  for (const SweepRow& row : rows) {
    if (row.status != "ok") {
      ++stats.n_failed;
      continue;
    }
    ++stats.n_ok;
    knob.push_back(row.value);
    robust.push_back(row.robust_acc_src);
    reldt.push_back(row.rel_dt);
  }
  stats.pearson_robust_reldt = pearson(robust, reldt);
  stats.spearman_robust_reldt = spearman(robust, reldt);
  stats.pearson_knob_reldt = pearson(knob, reldt);
  stats.spearman_knob_reldt = spearman(knob, reldt);
  return stats;
}

void write_rows_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << "knob,value,seed,clean_acc_src,robust_acc_src,acc_src_ft,acc_tgt,rel_dt,status\n";
  for (const SweepRow& r : rows) {
    f << r.knob << "," << format_g17(r.value) << "," << r.seed << ","
      << format_g17(r.clean_acc_src) << "," << format_g17(r.robust_acc_src) << ","
      << format_g17(r.acc_src_ft) << "," << format_g17(r.acc_tgt) << ","
      << format_g17(r.rel_dt) << "," << r.status << "\n";
  }
}

std::vector<SweepRow> read_rows_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error(path + ": empty rows file");
  std::vector<SweepRow> rows;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cols;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 9) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 9 columns");
    }
    SweepRow r;
    r.knob = cols[0];
    r.value = std::stod(cols[1]);
    r.seed = std::stoull(cols[2]);
    r.clean_acc_src = std::stod(cols[3]);
    r.robust_acc_src = std::stod(cols[4]);
    r.acc_src_ft = std::stod(cols[5]);
    r.acc_tgt = std::stod(cols[6]);
    r.rel_dt = std::stod(cols[7]);
    r.status = cols[8];
    rows.push_back(std::move(r));
  }
  return rows;
}

void render_report(const std::vector<std::string>& sweep_dirs, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (sweep_dirs.empty()) throw std::invalid_argument("report: no sweep directories given");
  std::vector<SweepRow> rows;
  int missing = 0;
  for (const std::string& dir : sweep_dirs) {
    const std::string path = (fs::path(dir) / "rows.csv").string();
    if (!fs::exists(path)) {
      ++missing;
      continue;
    }
    const std::vector<SweepRow> part = read_rows_csv(path);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (missing > 0) {
    std::fprintf(stderr, "report: warning: %d sweep director%s without rows.csv\n", missing,
                 missing == 1 ? "y" : "ies");
  }
  fs::create_directories(out_dir);
  write_rows_csv(rows, (fs::path(out_dir) / "rows.csv").string());

  const SweepStats stats = compute_stats(rows);
  auto corr_str = [](const Correlation& c) {
    return c.defined ? format_g17(c.value) : std::string("undefined");
  };
  {
    std::ofstream f((fs::path(out_dir) / "summary.csv").string());
    f << "metric,value\n";
    f << "n_rows," << rows.size() << "\n";
    f << "n_ok," << stats.n_ok << "\n";
    f << "n_failed," << stats.n_failed << "\n";
    f << "n_missing_dirs," << missing << "\n";
    f << "pearson_robust_reldt," << corr_str(stats.pearson_robust_reldt) << "\n";
    f << "spearman_robust_reldt," << corr_str(stats.spearman_robust_reldt) << "\n";
    f << "pearson_knob_reldt," << corr_str(stats.pearson_knob_reldt) << "\n";
    f << "spearman_knob_reldt," << corr_str(stats.spearman_knob_reldt) << "\n";
  }
  {
    std::ofstream f((fs::path(out_dir) / "plot_robust_vs_reldt.csv").string());
    f << "robust_acc_src,rel_dt\n";
    for (const SweepRow& r : rows) {
      if (r.status == "ok") f << format_g17(r.robust_acc_src) << "," << format_g17(r.rel_dt) << "\n";
    }
  }
  {
    std::ofstream f((fs::path(out_dir) / "plot_knob_vs_reldt.csv").string());
    f << "value,rel_dt\n";
    for (const SweepRow& r : rows) {
      if (r.status == "ok") f << format_g17(r.value) << "," << format_g17(r.rel_dt) << "\n";
    }
  }
}

TrainConfig train_from_config(const Config& cfg) {
  TrainConfig tc;
  tc.epochs = cfg.get_int("train.epochs", 100);
  tc.batch_size = cfg.get_int("train.batch", 32);
  tc.lr = cfg.get_double("train.lr", 0.05);
  tc.momentum = cfg.get_double("train.momentum", 0.9);
  tc.lr_decay_epochs = cfg.get_int_list("train.lr_decay_epochs", {});
  tc.decay_factor = cfg.get_double("train.decay_factor", 0.1);
  tc.seed = cfg.get_uint64("train.seed", 0);

  const std::string kind = cfg.get_string("reg.kind", "none");
  if (kind == "none") {
    tc.regularizer.kind = RegularizerKind::kNone;
  } else if (kind == "wd") {
    tc.regularizer.kind = RegularizerKind::kWeightDecay;
  } else if (kind == "jr") {
    tc.regularizer.kind = RegularizerKind::kJacobian;
  } else if (kind == "llr") {
    tc.regularizer.kind = RegularizerKind::kLastLayer;
  } else if (kind == "ll-norm") {
    tc.regularizer.kind = RegularizerKind::kLastLayerNorm;
  } else if (kind == "adv") {
    tc.regularizer.kind = RegularizerKind::kAdversarial;
  } else {
    throw std::invalid_argument("config: unknown reg.kind '" + kind + "'");
  }
  tc.regularizer.lambda = cfg.get_double("reg.lambda", 0.0);
  tc.regularizer.target_norm = cfg.get_double("reg.target_norm", 1.0);
  tc.regularizer.adv_epsilon = cfg.get_double("reg.epsilon", 0.25);
  tc.regularizer.adv_steps = cfg.get_int("reg.steps", 20);
  tc.regularizer.adv_step_size = cfg.get_double("reg.step_size", 0.0);

  if (cfg.get_string("aug.level", "") != "") {
    tc.augmentation = augment_from_config(cfg);
  }
  return tc;
}

std::vector<int> hidden_from_config(const Config& cfg) {
  return cfg.get_int_list("train.arch", {32, 32});
}

Activation activation_from_config(const Config& cfg) {
  return activation_from_name(cfg.get_string("train.activation", "relu"));
}

AttackConfig attack_from_config(const Config& cfg) {
  AttackConfig atk;
  atk.epsilon = cfg.get_double("attack.epsilon", 0.25);
  atk.steps = cfg.get_int("attack.steps", 20);
  atk.step_size = cfg.get_double("attack.step_size", 0.0);
  atk.random_start = cfg.get_bool("attack.random_start", false);
  const std::string norm = cfg.get_string("attack.norm", "linf");
  if (norm == "linf") {
    atk.norm = AttackNorm::kLinf;
  } else if (norm == "l2") {
    atk.norm = AttackNorm::kL2;
  } else {
    throw std::invalid_argument("config: unknown attack.norm '" + norm + "'");
  }
  atk.seed = cfg.get_uint64("attack.seed", 0);
  if (atk.underpowered()) {
    std::fprintf(stderr, "warning: attack step_size * steps < epsilon\n");
  }
  return atk;
}

SyntheticSpec synthetic_from_config(const Config& cfg) {
  SyntheticSpec spec;
  spec.kind = cfg.get_string("data.kind", "gaussian-blobs");
  spec.input_dim = cfg.get_int("data.input_dim", 2);
  spec.output_dim = cfg.get_int("data.classes", cfg.get_int("data.output_dim", 2));
  spec.n_samples = cfg.get_int("data.samples", 64);
  spec.label_map = cfg.get_string("data.label_map", "same");
  spec.seed = cfg.get_uint64("data.seed", 0);
  const std::vector<double> shift = cfg.get_double_list("data.shift", {});
  if (!shift.empty()) {
    spec.shift = Vector(static_cast<int>(shift.size()));
    for (std::size_t i = 0; i < shift.size(); ++i) spec.shift[static_cast<int>(i)] = shift[i];
  }
  return spec;
}

AugmentationSpec augment_from_config(const Config& cfg) {
  AugmentationSpec aug;
  const std::string level = cfg.get_string("aug.level", "data");
  if (level == "data") {
    aug.level = AugLevel::kData;
  } else if (level == "feature") {
    aug.level = AugLevel::kFeature;
  } else {
    throw std::invalid_argument("config: unknown aug.level '" + level + "'");
  }
  const std::string algo = cfg.get_string("aug.algorithm", "loss-averaging");
  if (algo == "loss-averaging") {
    aug.algorithm = AugAlgorithm::kLossAveraging;
  } else if (algo == "prediction-averaging") {
    aug.algorithm = AugAlgorithm::kPredictionAveraging;
  } else {
    throw std::invalid_argument("config: unknown aug.algorithm '" + algo + "'");
  }
  const std::string w = cfg.get_string("aug.w", "identity");
  if (w == "identity") {
    aug.w_kind = WDistKind::kIdentity;
  } else if (w == "rademacher-diagonal") {
    aug.w_kind = WDistKind::kRademacherDiagonal;
    aug.w_scale = cfg.get_double("aug.w_s", 0.0);
  } else if (w == "fixed-plane-rotation") {
    aug.w_kind = WDistKind::kFixedPlaneRotation;
    aug.w_theta = cfg.get_double("aug.w_theta", 0.0);
    aug.w_prob = cfg.get_double("aug.w_p", 1.0);
  } else {
    throw std::invalid_argument("config: unknown aug.w '" + w + "'");
  }
  const std::string b = cfg.get_string("aug.b", "zero");
  if (b == "zero") {
    aug.b_kind = BDistKind::kZero;
  } else if (b == "gaussian-iso") {
    aug.b_kind = BDistKind::kGaussianIso;
    aug.b_sigma = cfg.get_double("aug.b_sigma", 0.0);
  } else if (b == "fixed-shift") {
    aug.b_kind = BDistKind::kFixedShift;
    const std::vector<double> v = cfg.get_double_list("aug.b_v");
    aug.b_shift = Vector(static_cast<int>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) aug.b_shift[static_cast<int>(i)] = v[i];
    aug.b_prob = cfg.get_double("aug.b_p", 1.0);
  } else {
    throw std::invalid_argument("config: unknown aug.b '" + b + "'");
  }
  aug.independent = cfg.get_bool("aug.independent", true);
  aug.seed = cfg.get_uint64("aug.seed", 0);
  return aug;
}

SweepConfig sweep_from_config(const Config& cfg) {
  SweepConfig sc;
  sc.base = train_from_config(cfg);
  sc.hidden = hidden_from_config(cfg);
  sc.activation = activation_from_config(cfg);
  sc.knob = cfg.get_string("sweep.knob", "reg.lambda");
  sc.values = cfg.get_double_list("sweep.values");
  sc.seeds = cfg.get_uint64_list("sweep.seeds", {1});
  sc.attack = attack_from_config(cfg);
  sc.attack.random_start = cfg.get_bool("attack.random_start", true);  // sweeps default true
  sc.finetune_ridge = cfg.get_double("sweep.finetune_ridge", 0.0);
  return sc;
}

}  // namespace dtlab
