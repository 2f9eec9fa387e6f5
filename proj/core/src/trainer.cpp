#include "pann/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "pann/error.hpp"

namespace pann {

std::string_view to_string(TrainMode mode) noexcept {
  switch (mode) {
    case TrainMode::kFull: return "full";
    case TrainMode::kSemi: return "semi";
    case TrainMode::kPartial: return "partial";
    case TrainMode::kPann: return "pann";
  }
  return "unknown";
}

std::optional<TrainMode> parse_mode(std::string_view name) noexcept {
  for (auto m : {TrainMode::kFull, TrainMode::kSemi, TrainMode::kPartial, TrainMode::kPann}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& key, const std::string& why) {
    fail(ErrorCode::kInvalidConfig, key + ": " + why);
  };
  if (!(lambda1 >= 0.0) || !std::isfinite(lambda1)) bad("lambda1", "must be >= 0");
  if (!(lambda2 >= 0.0) || !std::isfinite(lambda2)) bad("lambda2", "must be >= 0");
  if (m1 < 0) bad("m1", "must be >= 0");
  if (m2 < 0) bad("m2", "must be >= 0");
  if (!(lr_min >= 0.0) || !std::isfinite(lr_min)) bad("lr_min", "must be >= 0");
  if (!(lr_max >= 0.0) || !std::isfinite(lr_max)) bad("lr_max", "must be >= 0");
  if (batch_full == 0 && batch_partial == 0) {
    bad("batch_full", "batch ratio needs at least one positive component");
  }
  if (batch_full == 0 && m1 > 0) bad("batch_full", "stage one needs fully-labeled samples");
  if (pseudo_refresh < 1) bad("pseudo_refresh", "must be >= 1");
  if (!(poly_power >= 0.0)) bad("poly_power", "must be >= 0");
  if (channels == 0 && hidden_layers > 0) bad("channels", "must be >= 1");
}

TrainConfig TrainConfig::effective() const {
  TrainConfig c = *this;
  switch (mode) {
    case TrainMode::kFull:
      c.lambda1 = 0.0;
      c.lambda2 = 0.0;
      c.batch_partial = 0;
      break;
    case TrainMode::kSemi:
    case TrainMode::kPartial:
      c.lambda2 = 0.0;
      break;
    case TrainMode::kPann:
      break;
  }
  return c;
}

void MetricsLog::append(const IterationRow& row) {
  if (!rows_.empty() && row.iter <= rows_.back().iter) {
    fail(ErrorCode::kInvalidConfig, "metrics rows must have increasing iterations");
  }
  rows_.push_back(row);
}

void MetricsLog::append(EvaluationRow row) {
  if (!evals_.empty() && row.iter <= evals_.back().iter) {
    fail(ErrorCode::kInvalidConfig, "evaluation rows must have increasing iterations");
  }
  evals_.push_back(std::move(row));
}

std::string MetricsLog::to_csv() const {
  std::string out = "iter,j_full,j_partial,jc_direct,jc_saddle,nu_norm,mu_norm\n";
  char buf[512];
  for (const auto& r : rows_) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(r.iter), r.j_full, r.j_partial, r.jc_direct,
                  r.jc_saddle, r.nu_norm, r.mu_norm);
    out += buf;
  }
  return out;
}

std::vector<double> TrainerState::running_pbar() const {
  std::vector<double> out = pbar_sum;
  if (pbar_count > 0) {
    for (auto& v : out) v /= static_cast<double>(pbar_count);
  }
  return out;
}

BatchIndices sample_batch(const Suite& suite, std::mt19937_64& rng, std::size_t n_full,
                          std::size_t n_partial) {
  BatchIndices b;
  if (n_full > 0) {
    if (suite.full.empty()) {
      fail(ErrorCode::kInvalidConfig, "batch_full > 0 but the suite has no fully-labeled samples");
    }
    std::uniform_int_distribution<std::size_t> pick(0, suite.full.size() - 1);
    for (std::size_t i = 0; i < n_full; ++i) b.full.push_back(pick(rng));
  }
  if (n_partial > 0) {
    if (suite.partial.empty()) {
      fail(ErrorCode::kInvalidConfig, "batch_partial > 0 but the suite has T = 0");
    }
    std::uniform_int_distribution<std::size_t> pick_t(0, suite.partial.size() - 1);
    for (std::size_t i = 0; i < n_partial; ++i) {
      const std::size_t t = pick_t(rng);
      std::uniform_int_distribution<std::size_t> pick(0, suite.partial[t].samples.size() - 1);
      b.partial.emplace_back(t, pick(rng));
    }
  }
  return b;
}

namespace {

TrainerState fresh_state(const Suite& suite, const TrainConfig& config) {
  if (suite.full.empty()) {
    fail(ErrorCode::kInvalidConfig, "suite has no fully-labeled samples");
  }
  TrainerState s;
  const Architecture arch{config.hidden_layers, config.channels,
                          static_cast<std::uint32_t>(suite.label_space.num_classes())};
  s.params = init_params(arch, derive_seed(config.seed, "init", 0));
  s.prior = compute_prior(suite.full, suite.label_space);
  s.duals = init_duals(s.prior.p);
  s.rng.seed(derive_seed(config.seed, "batches", 0));
  return s;
}

double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

Trainer::Trainer(const Suite& suite, const TrainConfig& config)
    : Trainer(suite, config, fresh_state(suite, config.effective())) {}

Trainer::Trainer(const Suite& suite, const TrainConfig& config, TrainerState state)
    : suite_(suite), config_(config.effective()), state_(std::move(state)) {
  config.validate();
  config_.validate();
  for (const auto& split : suite_.partial) {
    std::vector<LabelMap> labels;
    for (const auto& s : split.samples) {
      labels.push_back(config_.mode == TrainMode::kSemi
                           ? LabelMap(s.height(), s.width(), kBackground)
                           : s.labels());
    }
    given_.push_back(std::move(labels));
  }
}

double Trainer::scheduled(double lr, std::int64_t k, std::int64_t total) const {
  if (config_.poly_power == 0.0 || total <= 0) return lr;
  const double frac = static_cast<double>(k) / static_cast<double>(total);
  return lr * std::pow(1.0 - frac, config_.poly_power);
}

void Trainer::record(const ObjectiveEvaluation& ev, double lr) {
  IterationRow row;
  row.iter = state_.iteration;
  row.j_full = ev.terms.j_full;
  row.j_partial = ev.terms.j_partial;
  row.jc_direct = ev.terms.jc_direct;
  row.jc_saddle = ev.terms.jc_saddle;
  row.nu_norm = l2(state_.duals.nu);
  row.mu_norm = l2(state_.duals.mu);
  row.lr = lr;
  state_.log.append(row);
}

void Trainer::refresh_pseudo_labels() {
  PseudoLabelStore& store = state_.pseudo;
  store.grids.assign(suite_.partial.size(), {});
  for (std::size_t t = 0; t < suite_.partial.size(); ++t) {
    const auto& split = suite_.partial[t];
    for (std::size_t i = 0; i < split.samples.size(); ++i) {
      const ClassMap probs = predict(state_.params, split.samples[i].image());
      store.grids[t].push_back(
          config_.mode == TrainMode::kSemi
              ? estimate_pseudo_labels_unrestricted(probs, given_[t][i])
              : estimate_pseudo_labels(probs, given_[t][i], split.visible));
    }
  }
  store.stamp = state_.iteration;
}

namespace {

template <typename Step>
void guarded(std::int64_t iteration, Step&& step) {
  try {
    step();
  } catch (const DivergedTrainingError&) {
    throw;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kDivergedTraining || e.code() == ErrorCode::kNumericInput) {
      throw DivergedTrainingError(iteration, e.what());
    }
    throw;
  }
}

void check_finite(const ObjectiveEvaluation& ev, std::int64_t iteration) {
  const auto& t = ev.terms;
  if (!std::isfinite(t.j_full) || !std::isfinite(t.j_partial) ||
      !std::isfinite(t.jc_saddle)) {
    throw DivergedTrainingError(iteration, "non-finite loss");
  }
}

}  // namespace

void Trainer::run_stage1() {
  for (std::int64_t k = 0; k < config_.m1; ++k) {
    guarded(state_.iteration, [&] {
      const BatchIndices idx = sample_batch(suite_, state_.rng, config_.batch_full, 0);
      Batch batch;
      for (std::size_t i : idx.full) {
        batch.full.push_back({&suite_.full[i].image(), &suite_.full[i].labels()});
      }
      const ObjectiveEvaluation ev = evaluate_objective(
          batch, state_.params, state_.duals, state_.prior.p, 0.0, 0.0, true);
      check_finite(ev, state_.iteration);
      const double lr = scheduled(config_.lr_min, k, config_.m1);
      state_.params = sgd_step(state_.params, ev.grads, lr);
      record(ev, lr);
    });
    ++state_.iteration;
  }
}

void Trainer::run_stage2() {
  const bool uses_partial = config_.mode != TrainMode::kFull;
  if (uses_partial && config_.m2 > 0 && suite_.partial.empty()) {
    fail(ErrorCode::kInvalidConfig,
         std::string("mode ") + std::string(to_string(config_.mode)) +
             " needs at least one partially-labeled split");
  }
  const std::size_t n_partial = uses_partial ? config_.batch_partial : 0;
  for (std::int64_t k = 0; k < config_.m2; ++k) {
    guarded(state_.iteration, [&] {
      if (uses_partial && k % config_.pseudo_refresh == 0) refresh_pseudo_labels();

      const BatchIndices idx =
          sample_batch(suite_, state_.rng, config_.batch_full, n_partial);
      Batch batch;
      for (std::size_t i : idx.full) {
        batch.full.push_back({&suite_.full[i].image(), &suite_.full[i].labels()});
      }
      for (const auto& [t, i] : idx.partial) {
        batch.partial.push_back({&suite_.partial[t].samples[i].image(), &given_[t][i],
                                 &state_.pseudo.grids[t][i]});
      }
      const ObjectiveEvaluation ev =
          evaluate_objective(batch, state_.params, state_.duals, state_.prior.p,
                             config_.lambda1, config_.lambda2, true);
      check_finite(ev, state_.iteration);

      if (!ev.marginal.pbar.empty()) {
        if (state_.pbar_sum.empty()) state_.pbar_sum.assign(ev.marginal.pbar.size(), 0.0);
        for (std::size_t l = 0; l < ev.marginal.pbar.size(); ++l) {
          state_.pbar_sum[l] += ev.marginal.pbar[l];
        }
        ++state_.pbar_count;
        if (config_.mode == TrainMode::kPann) {
          const DualGrads g = dual_grads(ev.marginal.pbar, state_.prior.p, state_.duals);
          state_.duals = dual_ascent_step(state_.duals, g,
                                          scheduled(config_.lr_max, k, config_.m2));
        }
      }
      const double lr = scheduled(config_.lr_min, k, config_.m2);
      state_.params = sgd_step(state_.params, ev.grads, lr);
      record(ev, lr);
    });
    ++state_.iteration;
  }
}

TrainerState stage1_train(const Suite& suite, const TrainConfig& config) {
  Trainer t(suite, config);
  t.run_stage1();
  return t.take_state();
}

TrainerState stage2_train(TrainerState state, const Suite& suite,
                          const TrainConfig& config) {
  Trainer t(suite, config, std::move(state));
  t.run_stage2();
  return t.take_state();
}

ExperimentResult run_experiment(const Suite& suite, const TrainConfig& config,
                                const std::optional<std::filesystem::path>& out_dir) {
  namespace fs = std::filesystem;
  if (out_dir) {
    std::error_code ec;
    fs::create_directories(*out_dir, ec);
    if (ec) fail(ErrorCode::kIo, "cannot create " + out_dir->string());
    fs::remove(*out_dir / ".failed", ec);
  }
  Trainer trainer(suite, config);
  try {
    trainer.run_stage1();
    trainer.run_stage2();
  } catch (const Error& e) {
    if (out_dir) {
      write_text_file(*out_dir / "metrics.csv", trainer.state().log.to_csv());
      write_text_file(*out_dir / ".failed", std::string(e.what()) + "\n");
    }
    throw;
  }
  TrainerState state = trainer.take_state();

  ExperimentResult result;
  result.report = evaluate(state.params, suite.test, suite.label_space);
  EvaluationRow eval_row;
  eval_row.iter = state.iteration;
  for (const auto& c : result.report.per_class) eval_row.dice.push_back(c.dice);
  eval_row.mean_organ_dice = result.report.mean_organ_dice;
  state.log.append(std::move(eval_row));

  result.params = std::move(state.params);
  result.duals = std::move(state.duals);
  result.log = std::move(state.log);

  if (out_dir) {
    write_text_file(*out_dir / "metrics.csv", result.log.to_csv());
    write_text_file(*out_dir / "report.json", report_to_string(result.report));
    save_checkpoint(result.params, *out_dir / "model.ckpt");
    save_duals(result.duals, *out_dir / "duals.bin");
  }
  return result;
}

Bytes encode_duals(const DualState& duals) {
  if (duals.nu.size() != duals.mu.size()) {
    fail(ErrorCode::kIllegalDual, "nu and mu differ in length");
  }
  ByteWriter w;
  w.magic(kDualsMagic);
  w.u32(kDualsVersion);
  w.u32(static_cast<std::uint32_t>(duals.nu.size()));
  for (double v : duals.nu) w.f64(v);
  for (double v : duals.mu) w.f64(v);
  return w.take();
}

DualState decode_duals(std::span<const std::uint8_t> bytes, const std::string& source) {
  ByteReader r(bytes, source);
  r.expect_magic(kDualsMagic);
  r.expect_version(kDualsVersion);
  const std::uint32_t n = r.u32();
  if (r.remaining() != std::size_t{n} * 16) {
    fail(ErrorCode::kLengthMismatch, source + ": dual payload length does not match header");
  }
  DualState d;
  d.nu.resize(n);
  d.mu.resize(n);
  for (auto& v : d.nu) v = r.f64();
  for (auto& v : d.mu) v = r.f64();
  return d;
}

void save_duals(const DualState& duals, const std::filesystem::path& path) {
  write_file(path, encode_duals(duals));
}

DualState load_duals(const std::filesystem::path& path) {
  return decode_duals(read_file(path), path.filename().string());
}

}  // namespace pann
