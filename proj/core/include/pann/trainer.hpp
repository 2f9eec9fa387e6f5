#pragma once

// Two-stage training:
//   stage one  M1 SGD iterations on the fully-labeled split only;
//   stage two  M2 iterations on mixed batches. Pseudo labels are refreshed
//              every `pseudo_refresh` iterations, the duals take one ascent
//              step (pann mode) and the network one descent step on
//              J_L + lambda1 J_P + lambda2 J_C(saddle).
// Baseline modes reuse the same loop with terms switched off.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pann/losses.hpp"
#include "pann/metrics.hpp"
#include "pann/phantom.hpp"
#include "pann/primal_dual.hpp"
#include "pann/segnet.hpp"

namespace pann {

enum class TrainMode : std::uint8_t {
  kFull,     // fully-labeled data only
  kSemi,     // partial data treated as unlabeled, unrestricted pseudo labels
  kPartial,  // partial labels + restricted pseudo labels, no prior term
  kPann,     // partial labels + pseudo labels + prior term
};

std::string_view to_string(TrainMode mode) noexcept;
std::optional<TrainMode> parse_mode(std::string_view name) noexcept;

struct TrainConfig {
  TrainMode mode = TrainMode::kPann;
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  std::int64_t m1 = 2000;
  std::int64_t m2 = 3000;
  double lr_min = 1e-2;  // network (minimization) step
  double lr_max = 2e-2;  // dual (maximization) step
  std::size_t batch_full = 3;
  std::size_t batch_partial = 1;
  std::int64_t pseudo_refresh = 200;
  std::uint64_t seed = 0;
  double poly_power = 0.0;  // 0 keeps learning rates constant
  std::uint32_t hidden_layers = 2;
  std::uint32_t channels = 8;

  void validate() const;
  /// Copy with the mode's implied constraints applied: full zeroes both
  /// lambdas and the partial batch, semi and partial zero lambda2.
  TrainConfig effective() const;
};

struct IterationRow {
  std::int64_t iter = 0;
  double j_full = 0.0;
  double j_partial = 0.0;
  double jc_direct = 0.0;
  double jc_saddle = 0.0;
  double nu_norm = 0.0;
  double mu_norm = 0.0;
  double lr = 0.0;
};

struct EvaluationRow {
  std::int64_t iter = 0;
  std::vector<double> dice;  // per class
  double mean_organ_dice = 0.0;
};

class MetricsLog {
 public:
  /// Rows must arrive with strictly increasing iteration numbers.
  void append(const IterationRow& row);
  void append(EvaluationRow row);

  const std::vector<IterationRow>& iterations() const noexcept { return rows_; }
  const std::vector<EvaluationRow>& evaluations() const noexcept { return evals_; }

  /// header: iter,j_full,j_partial,jc_direct,jc_saddle,nu_norm,mu_norm
  std::string to_csv() const;

 private:
  std::vector<IterationRow> rows_;
  std::vector<EvaluationRow> evals_;
};

struct PseudoLabelStore {
  std::vector<std::vector<LabelMap>> grids;  // [t-1][i]
  std::int64_t stamp = -1;                   // iteration of the last refresh
};

struct TrainerState {
  ModelParams params;
  DualState duals;
  PriorDistribution prior;
  PseudoLabelStore pseudo;
  std::int64_t iteration = 0;
  std::mt19937_64 rng;
  MetricsLog log;
  std::vector<double> pbar_sum;  // running sum of stage-two batch marginals
  std::size_t pbar_count = 0;

  std::vector<double> running_pbar() const;
};

struct BatchIndices {
  std::vector<std::size_t> full;
  std::vector<std::pair<std::size_t, std::size_t>> partial;  // (t-1, i)
};

/// Uniform draws with replacement: `n_full` fully-labeled samples, then
/// `n_partial` partial samples, each from a split chosen uniformly.
BatchIndices sample_batch(const Suite& suite, std::mt19937_64& rng, std::size_t n_full,
                          std::size_t n_partial);

class Trainer {
 public:
  /// Fresh state: initialized network, prior from the fully-labeled split,
  /// duals at their closed form for the prior, no pseudo labels.
  Trainer(const Suite& suite, const TrainConfig& config);
  Trainer(const Suite& suite, const TrainConfig& config, TrainerState state);

  void run_stage1();
  void run_stage2();

  const TrainerState& state() const noexcept { return state_; }
  TrainerState take_state() noexcept { return std::move(state_); }
  const TrainConfig& config() const noexcept { return config_; }

  /// Recomputes pseudo labels for every partial sample with the current
  /// network.
  void refresh_pseudo_labels();

 private:
  double scheduled(double lr, std::int64_t k, std::int64_t total) const;
  void record(const ObjectiveEvaluation& ev, double lr);

  const Suite& suite_;
  TrainConfig config_;
  TrainerState state_;
  // Labels the trainer may see for partial samples ([t-1][i]); all zero in
  // semi mode.
  std::vector<std::vector<LabelMap>> given_;
};

TrainerState stage1_train(const Suite& suite, const TrainConfig& config);
TrainerState stage2_train(TrainerState state, const Suite& suite,
                          const TrainConfig& config);

struct ExperimentResult {
  ModelParams params;
  DualState duals;
  MetricsLog log;
  EvaluationReport report;
};

/// Stage one, stage two and test-set evaluation. With an output directory,
/// writes metrics.csv, report.json, model.ckpt and duals.bin; on divergence
/// the metrics so far are flushed next to a `.failed` marker and the error
/// is rethrown.
ExperimentResult run_experiment(const Suite& suite, const TrainConfig& config,
                                const std::optional<std::filesystem::path>& out_dir = {});

inline constexpr std::uint32_t kDualsVersion = 1;
inline constexpr Magic kDualsMagic{'P', 'A', 'N', 'D'};

Bytes encode_duals(const DualState& duals);
DualState decode_duals(std::span<const std::uint8_t> bytes, const std::string& source);
void save_duals(const DualState& duals, const std::filesystem::path& path);
DualState load_duals(const std::filesystem::path& path);

}  // namespace pann
