// Experiment runner: training, attacks, fine-tuning transfer, sweeps, and
// the verification suites, all driven by flat text configs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtlab/advverify.hpp"
#include "dtlab/bounds.hpp"
#include "dtlab/config.hpp"
#include "dtlab/daverify.hpp"
#include "dtlab/pseudometric.hpp"
#include "dtlab/sweep.hpp"

namespace fs = std::filesystem;
using namespace dtlab;

namespace {

struct CliArgs {
  std::string command;
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
  std::vector<std::string> positional;
};

void print_usage() {
  std::cout <<
      "usage: dtlab <command> [--config <path>] [--out <dir>] [--seed <u64>] [--threads <n>]\n"
      "\n"
      "commands:\n"
      "  train          train a model on the source dataset\n"
      "  attack         clean and robust accuracy of a saved model\n"
      "  finetune       least-squares re-heading of a saved model\n"
      "  sweep          knob x seed grid with relative transfer accuracy\n"
      "  report <dirs>  merge finished sweep directories into summary CSVs\n"
      "  pseudometric   class-wise loss gaps between two datasets\n"
      "  toy            norm-budget curve on a paired toy instance\n"
      "  tightness      sphere-atom target construction and bound check\n"
      "  verify-da      augmented-objective identity check over magnitudes\n"
      "  verify-advreg  jacobian-regularization class nesting check\n";
}

CliArgs parse_args(int argc, char** argv) {
  CliArgs args;
  if (argc < 2) throw std::invalid_argument("missing command");
  args.command = argv[1];
  for (int i = 2; i < argc; ++i) {
    const std::string arg = argv[i];
    auto next = [&](const char* name) {
      if (i + 1 >= argc) throw std::invalid_argument(std::string(name) + " needs a value");
      return std::string(argv[++i]);
    };
    if (arg == "--config") {
      args.config_path = next("--config");
    } else if (arg == "--out") {
      args.out_dir = next("--out");
    } else if (arg == "--seed") {
      args.seed = std::stoull(next("--seed"));
      args.seed_given = true;
    } else if (arg == "--threads") {
      args.threads = std::stoi(next("--threads"));
    } else if (arg.rfind("--", 0) == 0) {
      throw std::invalid_argument("unknown flag: " + arg);
    } else {
      args.positional.push_back(arg);
    }
  }
  return args;
}

Config load_config(const CliArgs& args) {
  if (args.config_path.empty()) throw std::invalid_argument("--config is required");
  Config cfg = Config::parse_file(args.config_path);
  if (args.seed_given) {
    cfg.set("train.seed", std::to_string(args.seed));
    cfg.set("data.seed", std::to_string(args.seed));
  }
  return cfg;
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// source/target resolution: explicit CSV paths win, otherwise the synthetic
// generator block is used.
std::pair<EmpiricalDataset, EmpiricalDataset> resolve_pair(const Config& cfg) {
  if (cfg.has("data.source_csv") && cfg.has("data.target_csv")) {
    return {read_csv(cfg.get_string("data.source_csv")), read_csv(cfg.get_string("data.target_csv"))};
  }
  return generate_synthetic(synthetic_from_config(cfg));
}

EmpiricalDataset resolve_source(const Config& cfg) {
  if (cfg.has("data.source_csv")) return read_csv(cfg.get_string("data.source_csv"));
  return generate_synthetic(synthetic_from_config(cfg)).first;
}

Network arch_for(const Config& cfg, const EmpiricalDataset& data) {
  std::vector<int> dims;
  dims.push_back(data.input_dim());
  for (int h : hidden_from_config(cfg)) dims.push_back(h);
  dims.push_back(data.target_dim());
  const std::uint64_t seed = cfg.get_uint64("train.init_seed", cfg.get_uint64("train.seed", 0) + 99);
  return random_network(dims, activation_from_config(cfg), seed);
}

FunctionClassSample class_from_config(const Config& cfg, const EmpiricalDataset& data) {
  FunctionClassSample cls;
  cls.ridge = cfg.get_double("class.ridge", 0.0);
  if (cfg.has("class.networks_dir")) {
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(cfg.get_string("class.networks_dir"))) {
      if (entry.is_regular_file()) paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    for (const std::string& p : paths) cls.extractors.push_back(load_network_file(p));
    if (cls.extractors.empty()) {
      throw std::invalid_argument("class.networks_dir contains no network files");
    }
    return cls;
  }
  const int count = cfg.get_int("class.count", 8);
  const int dfeat = cfg.get_int("class.feature_dim", 4);
  const std::uint64_t seed = cfg.get_uint64("class.seed", 1);
  std::vector<int> dims;
  dims.push_back(data.input_dim());
  for (int h : cfg.get_int_list("class.hidden", {8})) dims.push_back(h);
  dims.push_back(dfeat);
  const Activation act = activation_from_name(cfg.get_string("class.activation", "tanh"));
  for (int i = 0; i < count; ++i) {
    cls.extractors.push_back(random_network(dims, act, seed + i));
  }
  return cls;
}

int cmd_train(const CliArgs& args) {
  const Config cfg = load_config(args);
  const EmpiricalDataset source = resolve_source(cfg);
  const TrainConfig tc = train_from_config(cfg);
  const Network arch = arch_for(cfg, source);
  const TrainedModel model = sgd_train(tc, source, arch);
  fs::create_directories(args.out_dir);
  save_model(model, (fs::path(args.out_dir) / "model.txt").string());
  {
    std::ofstream f((fs::path(args.out_dir) / "history.csv").string());
    f << "epoch,loss,lr\n";
    for (const EpochRecord& rec : model.history) {
      f << rec.epoch << "," << g17(rec.loss) << "," << g17(rec.lr) << "\n";
    }
  }
  std::cout << "trained: final loss " << evaluate(model, source, EvalMode::kSquaredLoss)
            << ", accuracy " << evaluate(model, source, EvalMode::kArgmaxAccuracy) << "\n";
  return 0;
}

int cmd_attack(const CliArgs& args) {
  const Config cfg = load_config(args);
  const TrainedModel model = load_model(cfg.get_string("model.path"));
  const EmpiricalDataset data = resolve_source(cfg);
  const AttackConfig atk = attack_from_config(cfg);
  const Network full = model.full_network();
  const double clean = clean_accuracy(full, data);
  const double robust = robust_accuracy(full, data, atk);
  fs::create_directories(args.out_dir);
  std::ofstream f((fs::path(args.out_dir) / "attack.csv").string());
  f << "epsilon,steps,clean_acc,robust_acc\n";
  f << g17(atk.epsilon) << "," << atk.steps << "," << g17(clean) << "," << g17(robust) << "\n";
  std::cout << "clean " << clean << " robust " << robust << " (eps " << atk.epsilon << ")\n";
  return 0;
}

int cmd_finetune(const CliArgs& args) {
  const Config cfg = load_config(args);
  const TrainedModel model = load_model(cfg.get_string("model.path"));
  const EmpiricalDataset data = resolve_source(cfg);
  const double ridge = cfg.get_double("finetune.ridge", 0.0);
  const FineTuneResult ft = fine_tune_linear(model.extractor, data, ridge);
  TrainedModel out = model;
  out.head_weight = ft.head_weight;
  out.head_bias = ft.head_bias;
  fs::create_directories(args.out_dir);
  save_model(out, (fs::path(args.out_dir) / "model.txt").string());
  std::cout << "fine-tuned: loss " << ft.loss << ", accuracy "
            << evaluate(out, data, EvalMode::kArgmaxAccuracy) << "\n";
  return 0;
}

int cmd_sweep(const CliArgs& args) {
  const Config cfg = load_config(args);
  auto [source, target] = resolve_pair(cfg);
  SweepConfig sc = sweep_from_config(cfg);
  sc.threads = args.threads;
  const SweepReport report = run_sweep(sc, source, target);
  fs::create_directories(args.out_dir);
  write_rows_csv(report.rows, (fs::path(args.out_dir) / "rows.csv").string());
  render_report({args.out_dir}, args.out_dir);
  auto show = [](const char* name, const Correlation& c) {
    std::cout << "  " << name << ": " << (c.defined ? std::to_string(c.value) : "undefined") << "\n";
  };
  std::cout << "sweep finished: " << report.stats.n_ok << " ok, " << report.stats.n_failed
            << " failed\n";
  show("spearman(knob, rel_dt)", report.stats.spearman_knob_reldt);
  show("pearson(robust, rel_dt)", report.stats.pearson_robust_reldt);
  return 0;
}

int cmd_report(const CliArgs& args) {
  if (args.positional.empty()) {
    throw std::invalid_argument("report: give at least one sweep directory");
  }
  render_report(args.positional, args.out_dir);
  std::cout << "report written to " << args.out_dir << "\n";
  return 0;
}

int cmd_pseudometric(const CliArgs& args) {
  const Config cfg = load_config(args);
  auto [source, target] = resolve_pair(cfg);
  const FunctionClassSample cls = class_from_config(cfg, source);
  const PseudometricEstimate est = estimate_pseudometric(cls, source, target);
  fs::create_directories(args.out_dir);
  std::ofstream f((fs::path(args.out_dir) / "pseudometric.csv").string());
  f << "extractor,loss_s_inf,loss_t_inf,gap\n";
  for (std::size_t i = 0; i < est.per_extractor.size(); ++i) {
    const auto& pe = est.per_extractor[i];
    f << i << "," << g17(pe.loss_s) << "," << g17(pe.loss_t) << ","
      << g17(std::abs(pe.loss_s - pe.loss_t)) << "\n";
  }
  f << "max," << "" << "," << "" << "," << g17(est.value) << "\n";
  std::cout << "pseudometric " << est.value << " (argmax extractor " << est.argmax_extractor
            << ")\n";
  return 0;
}

int cmd_toy(const CliArgs& args) {
  const Config cfg = load_config(args);
  const EmpiricalDataset src = read_csv(cfg.get_string("toy.source_csv"));
  const EmpiricalDataset tgt = read_csv(cfg.get_string("toy.target_csv"));
  if (src.inputs != tgt.inputs) {
    throw std::invalid_argument("toy: the two CSVs must share the input atoms");
  }
  const ToyInstance inst = make_toy_instance(src.inputs, src.targets, tgt.targets);
  std::vector<double> grid = cfg.get_double_list("toy.c_grid", {});
  if (grid.empty()) {
    for (int i = 0; i <= 20; ++i) grid.push_back(1.2 * inst.norm_ys * i / 20.0);
  }
  const auto curve = toy_curve(inst, grid);
  fs::create_directories(args.out_dir);
  std::ofstream f((fs::path(args.out_dir) / "toy_curve.csv").string());
  f << "c,loss_s,loss_t,relative\n";
  for (const ToyCurvePoint& pt : curve) {
    f << g17(pt.c) << "," << g17(pt.loss_s) << "," << g17(pt.loss_t) << "," << g17(pt.relative)
      << "\n";
  }
  std::cout << "toy curve with " << curve.size() << " points written\n";
  return 0;
}

int cmd_tightness(const CliArgs& args) {
  const Config cfg = load_config(args);
  const EmpiricalDataset source = resolve_source(cfg);
  const FunctionClassSample cls = class_from_config(cfg, source);
  const TightnessConstruction tc = tightness_construct(source, source.inputs);

  // Optimal over the class unless a suboptimality factor is requested.
  int best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cls.extractors.size(); ++i) {
    const double l = inf_finetune_loss(cls.extractors[i], source, cls.ridge);
    if (l < best_loss) {
      best_loss = l;
      best = static_cast<int>(i);
    }
  }
  TrainedModel model;
  model.extractor = cls.extractors[best];
  const FineTuneResult ls = fine_tune_linear(model.extractor, source, cls.ridge);
  model.head_weight = cfg.get_double("tightness.head_scale", 1.0) * ls.head_weight;
  model.head_bias = ls.head_bias;

  const TightnessReport rep = tightness_verify(cls, model, source, tc);
  fs::create_directories(args.out_dir);
  write_csv(tc.target, (fs::path(args.out_dir) / "target.csv").string());
  std::ofstream f((fs::path(args.out_dir) / "tightness.csv").string());
  f << "tau,d,eps_opt,gap,holds\n";
  f << g17(rep.tau) << "," << g17(rep.d) << "," << g17(rep.eps_opt) << "," << g17(rep.gap) << ","
    << (rep.holds ? "true" : "false") << "\n";
  std::cout << "tightness: tau " << rep.tau << " d " << rep.d << " gap " << rep.gap << " holds "
            << (rep.holds ? "yes" : "no") << "\n";
  return rep.holds ? 0 : 2;
}

int cmd_verify_da(const CliArgs& args) {
  const Config cfg = load_config(args);
  const EmpiricalDataset data = resolve_source(cfg);
  if (data.target_dim() != 1) {
    throw std::invalid_argument("verify-da: needs scalar targets (y0 only)");
  }
  TrainedModel model;
  if (cfg.has("model.path")) {
    model = load_model(cfg.get_string("model.path"));
  } else {
    const Network extractor = random_network(
        {data.input_dim(), cfg.get_int("da.hidden", 8), cfg.get_int("da.feature_dim", 3)},
        activation_from_name(cfg.get_string("da.activation", "tanh")),
        cfg.get_uint64("da.seed", 1));
    model.extractor = extractor;
    const FineTuneResult ls = fine_tune_linear(extractor, data, 0.0);
    model.head_weight = ls.head_weight;
    model.head_bias = ls.head_bias;
  }
  const AugmentationSpec spec = augment_from_config(cfg);
  const std::vector<double> grid = cfg.get_double_list("da.s_grid", {0.1, 0.05, 0.025, 0.0125});
  const int n_mc = cfg.get_int("da.n_mc", 100000);
  const DaVerifyResult res = verify_da_identity(model, data, spec, grid, n_mc,
                                                cfg.get_uint64("da.mc_seed", 1));
  fs::create_directories(args.out_dir);
  std::ofstream f((fs::path(args.out_dir) / "verify_da.csv").string());
  f << "s,lhs,rhs,residual,stderr,exact\n";
  for (const OmegaReport& row : res.rows) {
    f << g17(row.s) << "," << g17(row.lhs) << "," << g17(row.rhs) << "," << g17(row.residual)
      << "," << g17(row.lhs_stderr) << "," << (row.exact ? "true" : "false") << "\n";
  }
  f << "slope," << (res.slope_defined ? g17(res.slope) : "undefined") << ",,,,\n";
  std::cout << "verify-da: " << (res.pass ? "pass" : "FAIL")
            << (res.slope_defined ? " slope " + std::to_string(res.slope) : "") << "\n";
  return res.pass ? 0 : 2;
}

int cmd_verify_advreg(const CliArgs& args) {
  const Config cfg = load_config(args);
  const EmpiricalDataset data = resolve_source(cfg);
  AobjConfig ac;
  ac.epsilon = cfg.get_double("advreg.epsilon", 0.1);
  const std::vector<double> grid = cfg.get_double_list("advreg.lambda_grid", {0.1, 0.3, 1.0});
  const double delta = cfg.get_double("advreg.delta", 0.05);
  const NestingReport rep = verify_nesting(data, grid, delta, ac);
  fs::create_directories(args.out_dir);
  std::ofstream f((fs::path(args.out_dir) / "verify_advreg.csv").string());
  f << "lambda1,lambda2,witness_T,member_lambda1,member_lambda2,B_found\n";
  bool ok = true;
  for (const NestingPairReport& pair : rep.pairs) {
    f << g17(pair.lambda1) << "," << g17(pair.lambda2) << "," << g17(pair.witness_t) << ","
      << (pair.member_lambda1 ? "true" : "false") << ","
      << (pair.member_lambda2 ? "true" : "false") << "," << g17(pair.b_found) << "\n";
    ok = ok && pair.member_lambda1 && !pair.member_lambda2 && pair.b_doublings >= 0;
  }
  std::cout << "verify-advreg: " << rep.pairs.size() << " pairs, "
            << (ok ? "all flips confirmed" : "FLIP MISSING") << "\n";
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    const CliArgs args = parse_args(argc, argv);
    if (args.command == "help" || args.command == "--help" || args.command == "-h") {
      print_usage();
      return 0;
    }
    if (args.command == "train") return cmd_train(args);
    if (args.command == "attack") return cmd_attack(args);
    if (args.command == "finetune") return cmd_finetune(args);
    if (args.command == "sweep") return cmd_sweep(args);
    if (args.command == "report") return cmd_report(args);
    if (args.command == "pseudometric") return cmd_pseudometric(args);
    if (args.command == "toy") return cmd_toy(args);
    if (args.command == "tightness") return cmd_tightness(args);
    if (args.command == "verify-da") return cmd_verify_da(args);
    if (args.command == "verify-advreg") return cmd_verify_advreg(args);
    throw std::invalid_argument("unknown command: " + args.command);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
