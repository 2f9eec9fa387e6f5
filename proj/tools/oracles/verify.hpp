#pragma once

// Oracle checks shared by `pann verify` and the acceptance suite. Each check
// compares the library against an independent computation and reports the
// worst error it measured.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pann/primal_dual.hpp"

namespace pann::verify {

enum class Level { kFast, kFull };

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;   // worst error (or witness value) observed
  double tolerance = 0.0;  // threshold the measurement was held to
  std::string detail;
  double seconds = 0.0;
};

using DualGradFn = std::function<DualGrads(std::span<const double>, std::span<const double>,
                                           const DualState&)>;

struct Options {
  Level level = Level::kFast;
  std::uint64_t seed = 20240607;
  // Gradient used for dual ascent inside the dynamics checks. Tests swap in
  // a broken version to make sure the checks can fail.
  DualGradFn dual_grads = [](std::span<const double> pbar, std::span<const double> q,
                             const DualState& d) { return pann::dual_grads(pbar, q, d); };
};

CheckResult check_neglog_closed_form(const Options& opts);
CheckResult check_neglog_numeric(const Options& opts);
CheckResult check_saddle_value(const Options& opts);
CheckResult check_saddle_gradient(const Options& opts);
CheckResult check_dual_grads_fd(const Options& opts);
CheckResult check_dual_stationarity(const Options& opts);
CheckResult check_prior_chain_fd(const Options& opts);
CheckResult check_softmax_precision(const Options& opts);
CheckResult check_forward_reference(const Options& opts);
/// Central differences of the full objective on a small mixed batch with the
/// reference network (or a 2x22 network of ~4.7k parameters when `wide`).
CheckResult check_objective_gradient(const Options& opts, bool wide = false);
CheckResult check_unbiasedness(const Options& opts);
CheckResult check_bias_witness(const Options& opts);
CheckResult check_kl_properties(const Options& opts);
CheckResult check_dual_dynamics(const Options& opts);
CheckResult check_metrics(const Options& opts);

/// All checks of the level, in a fixed order.
std::vector<CheckResult> run_all(const Options& opts);

nlohmann::json to_json(const std::vector<CheckResult>& results, Level level);
std::string format_line(const CheckResult& r);

}  // namespace pann::verify
