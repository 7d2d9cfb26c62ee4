#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "stablerelu/certificates.hpp"
#include "stablerelu/errors.hpp"
#include "stablerelu/landscape.hpp"
#include "stablerelu/relu_net.hpp"
#include "stablerelu/trainer.hpp"

namespace stablerelu::io {

using Json = nlohmann::ordered_json;

template <typename T>
Json opt(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const NetParams& p) {
  const Eigen::VectorXd theta = p.flatten();
  return Json{{"k", p.k()},
              {"theta", std::vector<double>(theta.data(), theta.data() + theta.size())}};
}

inline NetParams params_from_json(const Json& j) {
  if (!j.contains("k") || !j.contains("theta")) {
    throw Error(ErrorKind::kInvalidValue, "params: needs fields k and theta");
  }
  const auto k = j.at("k").get<long>();
  const auto theta = j.at("theta").get<std::vector<double>>();
  if (k < 1 || theta.size() != static_cast<std::size_t>(3 * k + 1)) {
    throw Error(ErrorKind::kInvalidValue, "params: theta must have 3k+1 entries");
  }
  NetParams p = NetParams::unflatten(Eigen::Map<const Eigen::VectorXd>(
      theta.data(), static_cast<Eigen::Index>(theta.size())));
  p.validate();
  return p;
}

inline const char* init_name(const InitScheme& s) {
  return s.kind == InitScheme::Kind::kUniformFanin ? "uniform_fanin" : "uniform_custom";
}

inline Json to_json(const TrainConfig& c) {
  Json init{{"scheme", init_name(c.init)}};
  if (c.init.kind == InitScheme::Kind::kUniformCustom) {
    init["a_w1"] = c.init.a_w1;
    init["a_b1"] = c.init.a_b1;
    init["a_w2"] = c.init.a_w2;
  }
  return Json{{"k", c.k},
              {"eta", c.eta},
              {"max_steps", c.max_steps},
              {"log_every", c.log_every},
              {"spectrum_every", c.spectrum_every},
              {"seed", c.seed},
              {"init", init},
              {"stop_grad_norm", c.stop_grad_norm},
              {"steady_window", c.steady_window},
              {"steady_rel_tol", c.steady_rel_tol},
              {"beos_eps", c.beos_eps},
              {"diff_tol", c.diff_tol},
              {"delta", c.delta}};
}

inline Json to_json(const TrainRecord& r) {
  return Json{{"step", r.step},
              {"loss", r.loss},
              {"mse", opt(r.mse)},
              {"grad_norm", r.grad_norm},
              {"lambda_max_full", opt(r.lambda_max_full)},
              {"lambda_max_gn", r.lambda_max_gn},
              {"weighted_tv", r.weighted_tv},
              {"tv_plain", r.tv_plain},
              {"knot_count", r.knot_count},
              {"diff_margin", finite_or_null(r.diff_margin)}};
}

inline Json to_json(const Certificate& c) {
  return Json{{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs},
              {"slack", c.slack}, {"pass", c.pass}, {"hard", c.hard}};
}

inline Json to_json(const CertificateReport& r) {
  Json checks = Json::array();
  for (const auto& c : r.checks) checks.push_back(to_json(c));
  return Json{{"eta", r.eta},
              {"delta", r.delta},
              {"hard_pass", r.hard_pass()},
              {"stable", r.stable},
              {"beos_index", opt(r.beos_index)},
              {"optimized_vs_ground_truth", opt(r.optimized_vs_ground_truth)},
              {"optimized_vs_sigma", opt(r.optimized_vs_sigma)},
              {"optimized_on_interval", opt(r.optimized_on_interval)},
              {"checks", checks}};
}

inline Json to_json(const SpectrumReport& s) {
  return Json{{"lambda_max_full", s.lambda_max_full},
              {"lambda_max_gn", s.lambda_max_gn},
              {"residual_quadform", s.residual_quadform},
              {"method", eigen_method_name(s.method)}};
}

inline Json to_json(const RunSummary& s) {
  return Json{{"config", to_json(s.config)},
              {"final_record", to_json(s.final_record)},
              {"param_inf_norm", s.param_inf_norm},
              {"stable", opt(s.stable)},
              {"two_over_eta", 2.0 / s.config.eta},
              {"beos_step", opt(s.beos_step)},
              {"steady_step", opt(s.steady_step)},
              {"optimized", s.optimized},
              {"optimized_vs_ground_truth", opt(s.optimized_vs_ground_truth)},
              {"optimized_vs_sigma", opt(s.optimized_vs_sigma)},
              {"certificates", s.certificates ? to_json(*s.certificates) : Json(nullptr)},
              {"final_params", to_json(s.final_params)}};
}

inline void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kMissingFile, "cannot write " + path);
  out << j.dump(2) << '\n';
}

inline Json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingFile, "cannot read " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::kInvalidValue, path + ": " + ex.what());
  }
}

}  // namespace stablerelu::io
