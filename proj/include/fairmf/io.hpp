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
#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairmf/diagnostics.hpp"
#include "fairmf/eval_harness.hpp"
#include "fairmf/factor_model.hpp"
#include "fairmf/fiadmm.hpp"
#include "fairmf/interactions.hpp"
#include "fairmf/types.hpp"

namespace fairmf {

using Json = nlohmann::json;

// FNV-1a content hash, used to stamp inputs into run manifests.
inline std::string fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash missing file: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(h));
  return hex;
}

// Binary matrix dump: magic "SBM1", little-endian u32 users, u32 items,
// u64 nnz, then the row pointers and row item ids.
inline void save_matrix(const std::string& path, const SparseBinaryMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write matrix file: " + path);
  out.write("SBM1", 4);
  const std::uint32_t nu = static_cast<std::uint32_t>(m.n_users);
  const std::uint32_t ni = static_cast<std::uint32_t>(m.n_items);
  const std::uint64_t nnz = static_cast<std::uint64_t>(m.nnz());
  out.write(reinterpret_cast<const char*>(&nu), 4);
  out.write(reinterpret_cast<const char*>(&ni), 4);
  out.write(reinterpret_cast<const char*>(&nnz), 8);
  out.write(reinterpret_cast<const char*>(m.row_ptr.data()),
            static_cast<std::streamsize>(m.row_ptr.size() * 8));
  out.write(reinterpret_cast<const char*>(m.row_items.data()),
            static_cast<std::streamsize>(m.row_items.size() * 4));
  if (!out) throw std::runtime_error("short write on matrix file: " + path);
}

inline SparseBinaryMatrix load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open matrix file: " + path);
  char magic[4] = {};
  std::uint32_t nu = 0, ni = 0;
  std::uint64_t nnz = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&nu), 4);
  in.read(reinterpret_cast<char*>(&ni), 4);
  in.read(reinterpret_cast<char*>(&nnz), 8);
  if (!in || std::string(magic, 4) != "SBM1") {
    throw std::runtime_error("not a matrix file: " + path);
  }
  std::vector<std::int64_t> row_ptr(nu + 1);
  std::vector<std::int32_t> items(nnz);
  in.read(reinterpret_cast<char*>(row_ptr.data()),
          static_cast<std::streamsize>(row_ptr.size() * 8));
  in.read(reinterpret_cast<char*>(items.data()),
          static_cast<std::streamsize>(items.size() * 4));
  if (!in) throw std::runtime_error("truncated matrix file: " + path);
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  pairs.reserve(nnz);
  for (std::uint32_t u = 0; u < nu; ++u) {
    for (std::int64_t p = row_ptr[u]; p < row_ptr[u + 1]; ++p) {
      pairs.emplace_back(static_cast<std::int32_t>(u), items[static_cast<std::size_t>(p)]);
    }
  }
  SparseBinaryMatrix m = SparseBinaryMatrix::from_pairs(
      static_cast<int>(nu), static_cast<int>(ni), std::move(pairs));
  m.check();
  return m;
}

inline Json split_to_json(const SplitSpec& split) {
  Json j;
  j["train_users"] = split.train_users;
  j["val_users"] = split.val_users;
  j["test_users"] = split.test_users;
  Json holdout = Json::object();
  for (const auto& [u, part] : split.holdout) {
    holdout[std::to_string(u)] = {{"fold_in", part.fold_in},
                                  {"target", part.target}};
  }
  j["holdout"] = std::move(holdout);
  return j;
}

inline SplitSpec split_from_json(const Json& j) {
  SplitSpec split;
  split.train_users = j.at("train_users").get<std::vector<int>>();
  split.val_users = j.at("val_users").get<std::vector<int>>();
  split.test_users = j.at("test_users").get<std::vector<int>>();
  for (const auto& [key, part] : j.at("holdout").items()) {
    SplitSpec::Holdout h;
    h.fold_in = part.at("fold_in").get<std::vector<int>>();
    h.target = part.at("target").get<std::vector<int>>();
    split.holdout[std::stoi(key)] = std::move(h);
  }
  return split;
}

inline void save_split(const std::string& path, const SplitSpec& split) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split file: " + path);
  out << split_to_json(split).dump(2) << "\n";
}

inline SplitSpec load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split file: " + path);
  Json j;
  in >> j;
  return split_from_json(j);
}

inline Json hyperparams_to_json(const HyperParams& hp) {
  return Json{{"d", hp.d},           {"lambda2", hp.lambda2},
              {"eta", hp.eta},       {"alpha0", hp.alpha0},
              {"lambda_f", hp.lambda_f}, {"rho", hp.rho},
              {"gamma", hp.gamma},   {"sigma", hp.sigma},
              {"t_train", hp.t_train}, {"t_fold", hp.t_fold},
              {"seed", hp.seed}};
}

inline HyperParams hyperparams_from_json(const Json& j) {
  HyperParams hp;
  if (j.contains("d")) hp.d = j.at("d").get<int>();
  if (j.contains("lambda2")) hp.lambda2 = j.at("lambda2").get<Real>();
  if (j.contains("eta")) hp.eta = j.at("eta").get<Real>();
  if (j.contains("alpha0")) hp.alpha0 = j.at("alpha0").get<Real>();
  if (j.contains("lambda_f")) hp.lambda_f = j.at("lambda_f").get<Real>();
  if (j.contains("rho")) hp.rho = j.at("rho").get<Real>();
  if (j.contains("gamma")) hp.gamma = j.at("gamma").get<Real>();
  if (j.contains("sigma")) hp.sigma = j.at("sigma").get<Real>();
  if (j.contains("t_train")) hp.t_train = j.at("t_train").get<int>();
  if (j.contains("t_fold")) hp.t_fold = j.at("t_fold").get<int>();
  if (j.contains("seed")) hp.seed = j.at("seed").get<std::uint64_t>();
  return hp;
}

namespace detail {

inline std::string fmt_real(Real x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace detail

inline void save_trace_csv(const std::string& path, const EpochTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  out << "epoch,l_rho,dv,du,ds,dw,violation,loss,r_f\n";
  for (const auto& r : trace) {
    out << r.epoch << ',' << detail::fmt_real(r.l_rho) << ','
        << detail::fmt_real(r.dv) << ',' << detail::fmt_real(r.du) << ','
        << detail::fmt_real(r.ds) << ',' << detail::fmt_real(r.dw) << ','
        << detail::fmt_real(r.violation) << ',' << detail::fmt_real(r.loss)
        << ',' << detail::fmt_real(r.r_f) << '\n';
  }
}

inline void save_loss_csv(const std::string& path,
                          const std::vector<Real>& loss) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < loss.size(); ++e) {
    out << e << ',' << detail::fmt_real(loss[e]) << '\n';
  }
}

inline Json trace_to_json(const EpochTrace& trace) {
  Json rows = Json::array();
  for (const auto& r : trace) {
    rows.push_back({{"epoch", r.epoch},
                    {"l_rho", r.l_rho},
                    {"dv", r.dv},
                    {"du", r.du},
                    {"ds", r.ds},
                    {"dw", r.dw},
                    {"violation", r.violation},
                    {"loss", r.loss},
                    {"r_f", r.r_f}});
  }
  return rows;
}

inline EpochTrace trace_from_json(const Json& rows) {
  EpochTrace trace;
  for (const auto& r : rows) {
    EpochRow row;
    row.epoch = r.at("epoch").get<int>();
    row.l_rho = r.at("l_rho").get<Real>();
    row.dv = r.at("dv").get<Real>();
    row.du = r.at("du").get<Real>();
    row.ds = r.at("ds").get<Real>();
    row.dw = r.at("dw").get<Real>();
    row.violation = r.at("violation").get<Real>();
    row.loss = r.at("loss").get<Real>();
    row.r_f = r.at("r_f").get<Real>();
    trace.push_back(row);
  }
  return trace;
}

// A trained model on disk: two factor dumps plus a JSON sidecar with the
// hyperparameters, the solver name, the training trace, and for the ADMM
// solver the final consensus and dual vectors.
struct Checkpoint {
  std::string solver;
  HyperParams hp;
  FactorMatrix u;
  FactorMatrix v;
  Vector s;                      // fiadmm only
  Vector w;                      // fiadmm only
  EpochTrace trace;              // fiadmm only
  std::vector<Real> loss_trace;  // ials only
};

inline void save_checkpoint(const std::string& dir, const Checkpoint& c) {
  std::filesystem::create_directories(dir);
  save_factors(dir + "/u.fmf1", c.u);
  save_factors(dir + "/v.fmf1", c.v);
  Json j;
  j["solver"] = c.solver;
  j["hyperparams"] = hyperparams_to_json(c.hp);
  if (c.solver == "fiadmm") {
    j["s"] = std::vector<Real>(c.s.data(), c.s.data() + c.s.size());
    j["w"] = std::vector<Real>(c.w.data(), c.w.data() + c.w.size());
    j["trace"] = trace_to_json(c.trace);
  } else {
    j["loss_trace"] = c.loss_trace;
  }
  std::ofstream out(dir + "/model.json");
  if (!out) throw std::runtime_error("cannot write checkpoint sidecar");
  out << j.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& dir) {
  Checkpoint c;
  c.u = load_factors(dir + "/u.fmf1");
  c.v = load_factors(dir + "/v.fmf1");
  std::ifstream in(dir + "/model.json");
  if (!in) throw std::runtime_error("cannot open checkpoint sidecar in " + dir);
  Json j;
  in >> j;
  c.solver = j.at("solver").get<std::string>();
  c.hp = hyperparams_from_json(j.at("hyperparams"));
  if (c.solver == "fiadmm") {
    const auto s = j.at("s").get<std::vector<Real>>();
    const auto w = j.at("w").get<std::vector<Real>>();
    c.s = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
    c.w = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
    if (j.contains("trace")) c.trace = trace_from_json(j.at("trace"));
  } else if (j.contains("loss_trace")) {
    c.loss_trace = j.at("loss_trace").get<std::vector<Real>>();
  }
  return c;
}

inline Json report_to_json(const EvalReport& r) {
  Json j;
  j["k_list"] = r.k_list;
  j["effective_k"] = r.effective_k;
  j["recall"] = r.recall;
  j["ndcg"] = r.ndcg;
  j["gini"] = r.gini;
  j["coverage"] = r.coverage;
  j["n_users_evaluated"] = r.n_users_evaluated;
  Json exp = Json::array();
  for (const auto& o : r.exposure) {
    exp.push_back(std::vector<Real>(o.data(), o.data() + o.size()));
  }
  j["exposure"] = std::move(exp);
  return j;
}

// Long-format metric rows shared by evaluate and grid-search outputs.
inline void append_report_csv(std::ofstream& out, const std::string& solver,
                              const HyperParams& hp, const std::string& split,
                              const EvalReport& r) {
  const auto row = [&](const std::string& metric, int k, Real value) {
    out << solver << ',' << detail::fmt_real(hp.lambda2) << ','
        << detail::fmt_real(hp.alpha0) << ',' << detail::fmt_real(hp.lambda_f)
        << ',' << detail::fmt_real(hp.rho) << ',' << detail::fmt_real(hp.gamma)
        << ',' << split << ',' << metric << ',' << k << ','
        << detail::fmt_real(value) << '\n';
  };
  for (std::size_t ki = 0; ki < r.k_list.size(); ++ki) {
    row("recall", r.k_list[ki], r.recall[ki]);
    row("ndcg", r.k_list[ki], r.ndcg[ki]);
    row("gini", r.k_list[ki], r.gini[ki]);
    row("coverage", r.k_list[ki], r.coverage[ki]);
  }
}

inline constexpr const char* kReportCsvHeader =
    "solver,lambda2,alpha0,lambda_f,rho,gamma,split,metric,K,value\n";

inline void save_grid_csv(const std::string& path, const std::string& solver,
                          const GridSearchResult& grid) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write grid table: " + path);
  out << kReportCsvHeader;
  for (const auto& cell : grid.cells) {
    if (!cell.ok) continue;
    append_report_csv(out, solver, cell.hp, "val", cell.val);
    append_report_csv(out, solver, cell.hp, "test", cell.test);
  }
}

inline Json frontier_to_json(const std::string& solver,
                             const GridSearchResult& grid) {
  Json j;
  j["solver"] = solver;
  j["quality_metric"] = "ndcg";
  j["unfairness_metric"] = "gini";
  j["quality_k"] = grid.quality_k;
  Json pts = Json::array();
  for (const int i : grid.frontier) {
    const auto& cell = grid.cells[static_cast<std::size_t>(i)];
    pts.push_back({{"cell", i},
                   {"hyperparams", hyperparams_to_json(cell.hp)},
                   {"quality", cell.quality},
                   {"unfairness", cell.unfairness}});
  }
  j["points"] = std::move(pts);
  Json failed = Json::array();
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    if (!grid.cells[i].ok) {
      failed.push_back({{"cell", i},
                        {"hyperparams", hyperparams_to_json(grid.cells[i].hp)},
                        {"error", grid.cells[i].error}});
    }
  }
  j["failed_cells"] = std::move(failed);
  return j;
}

inline Json diagnostics_to_json(const DiagnosticsReport& r) {
  Json j;
  j["n_epochs"] = r.n_epochs;
  j["aborted"] = r.aborted;
  if (r.aborted) {
    j["abort_epoch"] = r.abort_epoch;
    j["abort_variable"] = r.abort_variable;
  }
  j["constants"] = {{"c_u", r.constants.c_u},
                    {"c_v", r.constants.c_v},
                    {"c_s", r.constants.c_s},
                    {"lambda_u_max", r.constants.lambda_u_max},
                    {"lambda_v_min", r.constants.lambda_v_min},
                    {"rho_bound", r.constants.rho_bound},
                    {"gamma_bound", r.constants.gamma_bound},
                    {"rho_ok", r.constants.rho_ok},
                    {"gamma_ok", r.constants.gamma_ok}};
  j["monotonicity_violations"] = r.monotonicity_violations;
  j["max_l_rho_increase"] = r.max_l_rho_increase;
  j["lemma_violations"] = r.lemma_violations;
  Json worst = Json::array();
  for (const auto& c : r.worst_by_name) {
    worst.push_back({{"name", c.name},
                     {"lhs", c.lhs},
                     {"rhs", c.rhs},
                     {"margin", c.margin},
                     {"ok", c.ok}});
  }
  j["worst_lemma_margins"] = std::move(worst);
  j["smoothness"] = {{"samples", r.smoothness.samples},
                     {"violations", r.smoothness.violations},
                     {"worst_margin", r.smoothness.worst_margin}};
  j["finite_diff"] = {{"coords", r.finite_diff.coords},
                      {"max_rel_err_g", r.finite_diff.max_rel_err_g},
                      {"max_rel_err_lrho", r.finite_diff.max_rel_err_lrho}};
  j["trace"] = trace_to_json(r.trace);
  return j;
}

inline void save_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Json j;
  in >> j;
  return j;
}

}  // namespace fairmf
