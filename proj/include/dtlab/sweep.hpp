#ifndef DTLAB_SWEEP_HPP_
#define DTLAB_SWEEP_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "dtlab/config.hpp"
#include "dtlab/robustness.hpp"
#include "dtlab/stats.hpp"
#include "dtlab/train.hpp"

namespace dtlab {

// One knob swept over values x seeds: train on source, attack on source,
// re-head on target, difference against the same-seed vanilla (knob = 0)
// cell.
struct SweepConfig {
  TrainConfig base;             // per-cell seed is overridden
  std::vector<int> hidden;      // hidden widths of the architecture
  Activation activation = Activation::kRelu;
  // reg.lambda | reg.target_norm | aug.b_sigma | aug.w_theta | aug.shift_mag
  std::string knob = "reg.lambda";
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  AttackConfig attack;
  double finetune_ridge = 0.0;
  int threads = 1;

  void validate() const;
};

struct SweepRow {
  std::string knob;
  double value = 0.0;
  std::uint64_t seed = 0;
  double clean_acc_src = 0.0;
  double robust_acc_src = 0.0;
  double acc_src_ft = 0.0;  // fine-tuned model evaluated back on the source
  double acc_tgt = 0.0;
  double rel_dt = 0.0;
  std::string status = "ok";  // ok | failed
};

struct SweepStats {
  Correlation pearson_robust_reldt;
  Correlation spearman_robust_reldt;
  Correlation pearson_knob_reldt;
  Correlation spearman_knob_reldt;
  int n_ok = 0;
  int n_failed = 0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  SweepStats stats;
};

SweepReport run_sweep(const SweepConfig& cfg, const EmpiricalDataset& source,
                      const EmpiricalDataset& target);

SweepStats compute_stats(const std::vector<SweepRow>& rows);

// rows.csv with the fixed column order
// knob,value,seed,clean_acc_src,robust_acc_src,acc_src_ft,acc_tgt,rel_dt,status
void write_rows_csv(const std::vector<SweepRow>& rows, const std::string& path);
std::vector<SweepRow> read_rows_csv(const std::string& path);

// Renders summary.csv, rows.csv and per-figure plot-data CSVs from one or
// more completed sweep directories (rows are concatenated; each sweep keeps
// its own vanilla baseline).
void render_report(const std::vector<std::string>& sweep_dirs, const std::string& out_dir);

// Config-to-domain builders shared by the CLI.
TrainConfig train_from_config(const Config& cfg);
std::vector<int> hidden_from_config(const Config& cfg);
Activation activation_from_config(const Config& cfg);
AttackConfig attack_from_config(const Config& cfg);
SyntheticSpec synthetic_from_config(const Config& cfg);
AugmentationSpec augment_from_config(const Config& cfg);
SweepConfig sweep_from_config(const Config& cfg);

// The knob application used by run_sweep; exposed for tests.
TrainConfig apply_knob(const TrainConfig& base, const std::string& knob, double value);

}  // namespace dtlab

#endif  // DTLAB_SWEEP_HPP_
