// Copyright 2026 The fairmf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end. Subcommands cover the full pipeline:
//   prepare-data  raw log -> binarized matrix + user split
//   train         matrix -> factor checkpoint
//   evaluate      checkpoint + split -> ranking and exposure metrics
//   grid-search   hyperparameter sweep -> metric table + trade-off frontier
//   diagnose      training run -> convergence-theory check report
// Exit codes: 0 success, 1 execution failure, 2 rejected flags or config.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "fairmf/diagnostics.hpp"
#include "fairmf/eval_harness.hpp"
#include "fairmf/io.hpp"

namespace fairmf::cli {
namespace {

// Hyperparameter flags. Precedence: built-in defaults, then the config file,
// then any flag the user passed explicitly.
struct HpFlags {
  HyperParams bound;  // flag storage
  std::string config_path;
  std::vector<std::pair<CLI::Option*, std::function<void(HyperParams&)>>>
      overrides;

  // Field-by-field wiring keeps the flag-over-config override mapping
  // obvious.
  void attach(CLI::App* cmd) {
    overrides.clear();
    auto wire = [&](CLI::Option* opt, std::function<void(HyperParams&)> fn) {
      overrides.emplace_back(opt, std::move(fn));
    };
    wire(cmd->add_option("--d", bound.d, "factor dimension"),
         [this](HyperParams& hp) { hp.d = bound.d; });
    wire(cmd->add_option("--lambda2", bound.lambda2, "ridge weight scale"),
         [this](HyperParams& hp) { hp.lambda2 = bound.lambda2; });
    wire(cmd->add_option("--eta", bound.eta, "frequency-scaling exponent"),
         [this](HyperParams& hp) { hp.eta = bound.eta; });
    wire(cmd->add_option("--alpha0", bound.alpha0, "implicit-pair weight"),
         [this](HyperParams& hp) { hp.alpha0 = bound.alpha0; });
    wire(cmd->add_option("--lambda-f", bound.lambda_f,
                         "exposure-fairness weight"),
         [this](HyperParams& hp) { hp.lambda_f = bound.lambda_f; });
    wire(cmd->add_option("--rho", bound.rho, "consensus penalty"),
         [this](HyperParams& hp) { hp.rho = bound.rho; });
    wire(cmd->add_option("--gamma", bound.gamma, "user step size"),
         [this](HyperParams& hp) { hp.gamma = bound.gamma; });
    wire(cmd->add_option("--sigma", bound.sigma, "init scale"),
         [this](HyperParams& hp) { hp.sigma = bound.sigma; });
    wire(cmd->add_option("--t-train", bound.t_train, "training epochs"),
         [this](HyperParams& hp) { hp.t_train = bound.t_train; });
    wire(cmd->add_option("--t-fold", bound.t_fold, "fold-in epochs"),
         [this](HyperParams& hp) { hp.t_fold = bound.t_fold; });
    wire(cmd->add_option("--seed", bound.seed, "RNG seed"),
         [this](HyperParams& hp) { hp.seed = bound.seed; });
    cmd->add_option("--config", config_path,
                    "JSON file with hyperparameter fields; explicit flags "
                    "override it");
  }

  HyperParams resolve() const {
    HyperParams hp;
    if (!config_path.empty()) {
      try {
        hp = hyperparams_from_json(load_json(config_path));
      } catch (const std::exception& e) {
        throw std::invalid_argument("config file " + config_path + ": " +
                                    e.what());
      }
    }
    for (const auto& [opt, apply] : overrides) {
      if (opt->count() > 0) apply(hp);
    }
    hp.validate();
    return hp;
  }
};

struct ExecFlags {
  int threads = 0;
  bool deterministic = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--threads", threads,
                    "worker threads; 0 means the OpenMP default");
    cmd->add_flag("--deterministic", deterministic,
                  "single-threaded bit-reproducible reductions");
  }

  ExecPolicy policy() const {
    ExecPolicy ex;
    ex.threads = threads;
    ex.deterministic = deterministic;
    return ex;
  }
};

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::vector<std::string>& input_paths,
                    const Json& params,
                    const std::vector<std::string>& outputs,
                    const ExecFlags& exec) {
  Json j;
  j["command"] = command;
  Json inputs = Json::object();
  for (const auto& p : input_paths) {
    inputs[std::filesystem::path(p).filename().string()] = fnv1a64_file(p);
  }
  j["inputs"] = std::move(inputs);
  j["params"] = params;
  j["outputs"] = outputs;
  j["exec"] = {{"threads", exec.threads},
               {"deterministic", exec.deterministic}};
  save_json(out_dir + "/manifest.json", j);
}

// Loads the training matrix; when a split is present the returned matrix is
// the train-user submatrix, matching the strong-generalization protocol.
struct TrainData {
  SparseBinaryMatrix full;
  SparseBinaryMatrix train;
  SplitSpec split;
  bool has_split = false;
  std::vector<std::string> inputs;
};

TrainData load_train_data(const std::string& data_dir) {
  TrainData d;
  const std::string matrix_path = data_dir + "/matrix.sbm1";
  d.full = load_matrix(matrix_path);
  d.inputs.push_back(matrix_path);
  const std::string split_path = data_dir + "/split.json";
  if (std::filesystem::exists(split_path)) {
    d.split = load_split(split_path);
    d.split.check(d.full);
    d.train = user_submatrix(d.full, d.split.train_users);
    d.has_split = true;
    d.inputs.push_back(split_path);
  } else {
    d.train = d.full;
  }
  return d;
}

int run_prepare(const std::string& input, const std::string& out_dir,
                const std::string& delimiter, bool header,
                Real rating_threshold, int min_user_count, int min_item_count,
                Real val_frac, Real test_frac, Real fold_in_frac,
                std::uint64_t seed, const ExecFlags& exec) {
  FileFormat fmt;
  if (delimiter == "tab") {
    fmt.delimiter = '\t';
  } else if (delimiter == "comma") {
    fmt.delimiter = ',';
  } else if (delimiter.size() == 1) {
    fmt.delimiter = delimiter[0];
  } else {
    throw std::invalid_argument("--delimiter must be 'tab', 'comma', or one "
                                "character");
  }
  fmt.has_header = header;

  const auto log = load_interactions(input, fmt);
  const auto bin = binarize_and_filter(log, rating_threshold, min_user_count,
                                       min_item_count);
  const auto split = strong_generalization_split(bin.matrix, val_frac,
                                                 test_frac, fold_in_frac,
                                                 seed);
  split.check(bin.matrix);

  std::filesystem::create_directories(out_dir);
  save_matrix(out_dir + "/matrix.sbm1", bin.matrix);
  save_split(out_dir + "/split.json", split);
  const auto dump_ids = [&](const std::string& name,
                            const std::vector<std::string>& ids) {
    std::ofstream out(out_dir + "/" + name);
    if (!out) throw std::runtime_error("cannot write " + out_dir + "/" + name);
    for (const auto& id : ids) out << id << '\n';
  };
  dump_ids("user_ids.txt", bin.user_ids);
  dump_ids("item_ids.txt", bin.item_ids);

  write_manifest(out_dir, "prepare-data", {input},
                 Json{{"rating_threshold", rating_threshold},
                      {"min_user_count", min_user_count},
                      {"min_item_count", min_item_count},
                      {"val_frac", val_frac},
                      {"test_frac", test_frac},
                      {"fold_in_frac", fold_in_frac},
                      {"seed", seed}},
                 {"matrix.sbm1", "split.json", "user_ids.txt", "item_ids.txt"},
                 exec);
  std::cout << "prepared " << bin.matrix.n_users << " users x "
            << bin.matrix.n_items << " items, " << bin.matrix.nnz()
            << " interactions (" << split.train_users.size() << " train / "
            << split.val_users.size() << " val / " << split.test_users.size()
            << " test)\n";
  return 0;
}

int run_train(const std::string& data_dir, const std::string& out_dir,
              const std::string& solver_str, const HpFlags& hp_flags,
              const ExecFlags& exec) {
  const Solver solver = solver_from_name(solver_str);
  const HyperParams hp = hp_flags.resolve();
  const TrainData data = load_train_data(data_dir);
  const ExecPolicy ex = exec.policy();

  Checkpoint ck;
  ck.solver = solver_name(solver);
  ck.hp = hp;
  std::vector<std::string> outputs = {"u.fmf1", "v.fmf1", "model.json"};
  std::filesystem::create_directories(out_dir);
  if (solver == Solver::kIals) {
    const IalsResult r = train_ials(data.train, hp, ex);
    ck.u = r.u;
    ck.v = r.v;
    ck.loss_trace = r.loss;
    save_loss_csv(out_dir + "/loss.csv", r.loss);
    outputs.push_back("loss.csv");
    std::cout << "trained ials: loss " << r.loss.front() << " -> "
              << r.loss.back() << " over " << hp.t_train << " epochs\n";
  } else {
    AdmmOptions opts;
    opts.exec = ex;
    const AdmmResult r = train_fiadmm(data.train, hp, opts);
    ck.u = r.state.u;
    ck.v = r.state.v;
    ck.s = r.state.s;
    ck.w = r.state.w;
    ck.trace = r.trace;
    save_trace_csv(out_dir + "/trace.csv", r.trace);
    outputs.push_back("trace.csv");
    std::cout << "trained fiadmm: objective " << r.trace.front().l_rho
              << " -> " << r.trace.back().l_rho << ", final violation "
              << r.trace.back().violation << "\n";
  }
  save_checkpoint(out_dir, ck);

  std::vector<std::string> inputs = data.inputs;
  if (!hp_flags.config_path.empty()) inputs.push_back(hp_flags.config_path);
  write_manifest(out_dir, "train", inputs,
                 Json{{"solver", ck.solver},
                      {"hyperparams", hyperparams_to_json(hp)},
                      {"trained_on", data.has_split ? "train_users"
                                                    : "all_users"}},
                 outputs, exec);
  return 0;
}

int run_evaluate(const std::string& data_dir, const std::string& model_dir,
                 const std::string& out_dir, std::vector<int> k_list,
                 const std::vector<std::string>& splits,
                 const ExecFlags& exec) {
  if (k_list.empty()) k_list = {5, 10, 20, 50, 100};
  const TrainData data = load_train_data(data_dir);
  if (!data.has_split) {
    throw std::runtime_error("evaluate: " + data_dir + " has no split.json");
  }
  const Checkpoint ck = load_checkpoint(model_dir);
  const Solver solver = solver_from_name(ck.solver);
  const ExecPolicy ex = exec.policy();

  std::filesystem::create_directories(out_dir);
  Json report;
  std::ofstream csv(out_dir + "/report.csv");
  if (!csv) throw std::runtime_error("cannot write report.csv");
  csv << kReportCsvHeader;
  for (const auto& side : splits) {
    const std::vector<int>* users = nullptr;
    if (side == "val") {
      users = &data.split.val_users;
    } else if (side == "test") {
      users = &data.split.test_users;
    } else {
      throw std::invalid_argument("--splits entries must be val or test");
    }
    const EvalReport r = evaluate_holdout(data.split, *users, ck.v, ck.hp,
                                          solver, k_list, ex);
    report[side] = report_to_json(r);
    append_report_csv(csv, ck.solver, ck.hp, side, r);
    std::cout << side << ": " << r.n_users_evaluated << " users";
    for (std::size_t ki = 0; ki < k_list.size(); ++ki) {
      std::cout << "  recall@" << k_list[ki] << " " << r.recall[ki];
    }
    std::cout << "\n";
  }
  save_json(out_dir + "/report.json", report);

  std::vector<std::string> inputs = data.inputs;
  inputs.push_back(model_dir + "/v.fmf1");
  inputs.push_back(model_dir + "/model.json");
  write_manifest(out_dir, "evaluate", inputs,
                 Json{{"k_list", k_list}, {"splits", splits}},
                 {"report.json", "report.csv"}, exec);
  return 0;
}

int run_grid(const std::string& data_dir, const std::string& out_dir,
             const std::string& solver_str, const HpFlags& hp_flags,
             const GridSpec& grid, std::vector<int> k_list, int quality_k,
             const ExecFlags& exec) {
  if (k_list.empty()) k_list = {5, 10, 20, 50, 100};
  const Solver solver = solver_from_name(solver_str);
  const HyperParams base = hp_flags.resolve();
  const TrainData data = load_train_data(data_dir);
  if (!data.has_split) {
    throw std::runtime_error("grid-search: " + data_dir +
                             " has no split.json");
  }
  const GridSearchResult r = grid_search(data.full, data.split, base, solver,
                                         grid, k_list, quality_k,
                                         exec.policy());

  std::filesystem::create_directories(out_dir);
  save_grid_csv(out_dir + "/grid.csv", solver_name(solver), r);
  save_json(out_dir + "/frontier.json", frontier_to_json(solver_name(solver),
                                                         r));
  int failed = 0;
  for (const auto& cell : r.cells) failed += cell.ok ? 0 : 1;
  std::cout << "grid: " << r.cells.size() << " cells, " << failed
            << " failed, " << r.frontier.size() << " frontier points\n";

  std::vector<std::string> inputs = data.inputs;
  if (!hp_flags.config_path.empty()) inputs.push_back(hp_flags.config_path);
  write_manifest(out_dir, "grid-search", inputs,
                 Json{{"solver", solver_name(solver)},
                      {"base", hyperparams_to_json(base)},
                      {"lambda2", grid.lambda2},
                      {"alpha0", grid.alpha0},
                      {"lambda_f", grid.lambda_f},
                      {"rho", grid.rho},
                      {"gamma", grid.gamma},
                      {"k_list", k_list},
                      {"quality_k", quality_k}},
                 {"grid.csv", "frontier.json"}, exec);
  return 0;
}

int run_diagnose(const std::string& data_dir, const std::string& out_dir,
                 const HpFlags& hp_flags, int smoothness_samples,
                 int fd_coords, const ExecFlags& exec) {
  const HyperParams hp = hp_flags.resolve();
  const TrainData data = load_train_data(data_dir);
  const DiagnosticsReport rep = run_diagnostics(
      data.train, hp, exec.policy(), smoothness_samples, fd_coords);

  std::filesystem::create_directories(out_dir);
  save_json(out_dir + "/diagnostics.json", diagnostics_to_json(rep));
  save_trace_csv(out_dir + "/trace.csv", rep.trace);
  std::cout << "diagnose: " << rep.n_epochs << " recorded epochs";
  if (rep.aborted) {
    std::cout << ", diverged in '" << rep.abort_variable << "' at epoch "
              << rep.abort_epoch;
  }
  std::cout << "; rho_ok=" << (rep.constants.rho_ok ? "yes" : "no")
            << " gamma_ok=" << (rep.constants.gamma_ok ? "yes" : "no")
            << " monotonicity_violations=" << rep.monotonicity_violations
            << " lemma_violations=" << rep.lemma_violations
            << " smoothness_violations=" << rep.smoothness.violations << "\n";

  std::vector<std::string> inputs = data.inputs;
  if (!hp_flags.config_path.empty()) inputs.push_back(hp_flags.config_path);
  write_manifest(out_dir, "diagnose", inputs,
                 Json{{"hyperparams", hyperparams_to_json(hp)},
                      {"smoothness_samples", smoothness_samples},
                      {"fd_coords", fd_coords}},
                 {"diagnostics.json", "trace.csv"}, exec);
  return 0;
}

}  // namespace
}  // namespace fairmf::cli

int main(int argc, char** argv) {
  using namespace fairmf;
  using namespace fairmf::cli;

  CLI::App app{"fairness-aware implicit-feedback matrix factorization"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fairmf 0.1.0");
  int rc = 0;

  // prepare-data
  auto* prep = app.add_subcommand("prepare-data",
                                  "binarize a rating log and split users");
  std::string prep_input, prep_out, prep_delim = "tab";
  bool prep_header = false;
  Real prep_threshold = 4.0, prep_val = 0.1, prep_test = 0.1, prep_fold = 0.8;
  int prep_min_user = 5, prep_min_item = 1;
  std::uint64_t prep_seed = 0;
  ExecFlags prep_exec;
  prep->add_option("--input", prep_input, "ratings file")->required();
  prep->add_option("--out", prep_out, "output directory")->required();
  prep->add_option("--delimiter", prep_delim, "tab, comma, or one character");
  prep->add_flag("--header", prep_header, "skip the first line");
  prep->add_option("--rating-threshold", prep_threshold,
                   "keep ratings >= this (unrated rows always kept)");
  prep->add_option("--min-user-count", prep_min_user,
                   "drop users below this interaction count");
  prep->add_option("--min-item-count", prep_min_item,
                   "drop items below this interaction count");
  prep->add_option("--val-frac", prep_val, "validation user fraction");
  prep->add_option("--test-frac", prep_test, "test user fraction");
  prep->add_option("--fold-in-frac", prep_fold,
                   "holdout items kept for fold-in");
  prep->add_option("--seed", prep_seed, "split seed");
  prep_exec.attach(prep);
  prep->callback([&] {
    rc = run_prepare(prep_input, prep_out, prep_delim, prep_header,
                     prep_threshold, prep_min_user, prep_min_item, prep_val,
                     prep_test, prep_fold, prep_seed, prep_exec);
  });

  // train
  auto* train = app.add_subcommand("train", "fit factors on the train users");
  std::string train_data, train_out, train_solver = "fiadmm";
  HpFlags train_hp;
  ExecFlags train_exec;
  train->add_option("--data", train_data, "prepare-data output directory")
      ->required();
  train->add_option("--out", train_out, "checkpoint directory")->required();
  train->add_option("--solver", train_solver, "ials or fiadmm");
  train_hp.attach(train);
  train_exec.attach(train);
  train->callback([&] {
    rc = run_train(train_data, train_out, train_solver, train_hp, train_exec);
  });

  // evaluate
  auto* eval = app.add_subcommand("evaluate",
                                  "fold in holdout users and score targets");
  std::string eval_data, eval_model, eval_out;
  std::vector<int> eval_k;
  std::vector<std::string> eval_splits = {"val", "test"};
  ExecFlags eval_exec;
  eval->add_option("--data", eval_data, "prepare-data output directory")
      ->required();
  eval->add_option("--model", eval_model, "train output directory")
      ->required();
  eval->add_option("--out", eval_out, "report directory")->required();
  eval->add_option("--k", eval_k, "ranking depths")->delimiter(',');
  eval->add_option("--splits", eval_splits, "val, test, or both")
      ->delimiter(',');
  eval_exec.attach(eval);
  eval->callback([&] {
    rc = run_evaluate(eval_data, eval_model, eval_out, eval_k, eval_splits,
                      eval_exec);
  });

  // grid-search
  auto* grid_cmd = app.add_subcommand("grid-search",
                                      "sweep hyperparameters on the "
                                      "validation split");
  std::string grid_data, grid_out, grid_solver = "fiadmm";
  HpFlags grid_hp;
  ExecFlags grid_exec;
  GridSpec grid;
  std::vector<int> grid_k;
  int grid_quality_k = 100;
  grid_cmd->add_option("--data", grid_data, "prepare-data output directory")
      ->required();
  grid_cmd->add_option("--out", grid_out, "output directory")->required();
  grid_cmd->add_option("--solver", grid_solver, "ials or fiadmm");
  grid_hp.attach(grid_cmd);
  grid_cmd->add_option("--grid-lambda2", grid.lambda2, "lambda2 axis")
      ->delimiter(',');
  grid_cmd->add_option("--grid-alpha0", grid.alpha0, "alpha0 axis")
      ->delimiter(',');
  grid_cmd->add_option("--grid-lambda-f", grid.lambda_f, "lambda_f axis")
      ->delimiter(',');
  grid_cmd->add_option("--grid-rho", grid.rho, "rho axis")->delimiter(',');
  grid_cmd->add_option("--grid-gamma", grid.gamma, "gamma axis")
      ->delimiter(',');
  grid_cmd->add_option("--k", grid_k, "ranking depths")->delimiter(',');
  grid_cmd->add_option("--quality-k", grid_quality_k,
                       "depth for the frontier metrics");
  grid_exec.attach(grid_cmd);
  grid_cmd->callback([&] {
    rc = run_grid(grid_data, grid_out, grid_solver, grid_hp, grid, grid_k,
                  grid_quality_k, grid_exec);
  });

  // diagnose
  auto* diag = app.add_subcommand("diagnose",
                                  "train and check the convergence theory");
  std::string diag_data, diag_out;
  HpFlags diag_hp;
  ExecFlags diag_exec;
  int diag_smooth = 200, diag_fd = 120;
  diag->add_option("--data", diag_data, "prepare-data output directory")
      ->required();
  diag->add_option("--out", diag_out, "report directory")->required();
  diag_hp.attach(diag);
  diag->add_option("--smoothness-samples", diag_smooth,
                   "random draws for the smoothness check");
  diag->add_option("--fd-coords", diag_fd,
                   "coordinates for the finite-difference check");
  diag_exec.attach(diag);
  diag->callback([&] {
    rc = run_diagnose(diag_data, diag_out, diag_hp, diag_smooth, diag_fd,
                      diag_exec);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
