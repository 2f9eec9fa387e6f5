// pann: generate phantom suites, train, evaluate and run the oracle checks.
//
// Exit codes: 0 ok, 1 verification failed, 2 bad configuration,
// 3 training diverged, 4 incompatible or corrupt artifact.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pann/config_io.hpp"
#include "pann/error.hpp"
#include "pann/metrics.hpp"
#include "pann/phantom.hpp"
#include "pann/segnet.hpp"
#include "pann/suite_io.hpp"
#include "pann/trainer.hpp"
#include "verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kVerifyFailed = 1, kConfig = 2, kDiverged = 3, kArtifact = 4 };

int exit_for(const pann::Error& e) {
  using pann::ErrorCode;
  if (e.is_format_error()) return kArtifact;
  switch (e.code()) {
    case ErrorCode::kDivergedTraining:
    case ErrorCode::kDivergedDuals:
    case ErrorCode::kNumericInput:
      return kDiverged;
    default:
      return kConfig;
  }
}

int cmd_generate(const std::optional<fs::path>& config, const fs::path& out,
                 std::uint64_t seed) {
  const pann::SuiteConfig cfg = config ? pann::parse_suite_config(pann::load_json_file(*config))
                                       : pann::default_suite_config();
  const pann::Suite suite = pann::build_suite(cfg, seed);
  pann::save_suite(suite, out);
  const auto q = pann::compute_prior(suite.full, suite.label_space);

  json partial = json::array();
  for (std::size_t t = 0; t < suite.partial.size(); ++t) {
    json visible = json::array();
    for (auto id : suite.partial[t].visible.visible()) visible.push_back(id);
    partial.push_back({{"t", t + 1},
                       {"visible", std::move(visible)},
                       {"count", suite.partial[t].samples.size()}});
  }
  const json summary{{"out", out.string()},
                     {"seed", seed},
                     {"full", suite.full.size()},
                     {"test", suite.test.size()},
                     {"partial", std::move(partial)},
                     {"q", q.p}};
  std::cout << summary.dump(2) << "\n";
  std::cerr << "suite written to " << out.string() << ": " << suite.full.size() << " full, "
            << suite.partial.size() << " partial splits, " << suite.test.size() << " test\n";
  return kOk;
}

void print_report_table(const pann::EvaluationReport& r) {
  std::fprintf(stderr, "%-12s %8s %8s %8s\n", "class", "dice", "msd", "hd");
  for (std::size_t c = 0; c < r.class_names.size(); ++c) {
    const auto& a = r.per_class[c];
    std::fprintf(stderr, "%-12s %8.4f %8.3f %8.3f\n", r.class_names[c].c_str(), a.dice,
                 a.msd.value_or(NAN), a.hausdorff.value_or(NAN));
  }
  std::fprintf(stderr, "mean organ dice %.4f\n", r.mean_organ_dice);
}

int cmd_train(const fs::path& config) {
  const pann::TrainJob job = pann::parse_train_job(pann::load_json_file(config));
  const pann::Suite suite = pann::load_suite(job.suite_dir);
  const auto result = pann::run_experiment(suite, job.train, job.out_dir);
  print_report_table(result.report);
  json per_class = json::object();
  for (std::size_t c = 0; c < result.report.class_names.size(); ++c) {
    per_class[result.report.class_names[c]] = result.report.per_class[c].dice;
  }
  const json summary{{"mode", std::string(pann::to_string(job.train.mode))},
                     {"seed", job.train.seed},
                     {"out", job.out_dir.string()},
                     {"mean_organ_dice", result.report.mean_organ_dice},
                     {"dice", std::move(per_class)}};
  std::cout << summary.dump(2) << "\n";
  return kOk;
}

int cmd_eval(const fs::path& ckpt, const fs::path& suite_dir,
             const std::optional<fs::path>& duals_path) {
  const pann::Suite suite = pann::load_suite(suite_dir);
  const pann::ModelParams params = pann::load_checkpoint(ckpt);
  if (params.arch.classes != suite.label_space.num_classes()) {
    pann::fail(pann::ErrorCode::kArchMismatch,
               ckpt.string() + ": checkpoint predicts " + std::to_string(params.arch.classes) +
                   " classes, suite has " + std::to_string(suite.label_space.num_classes()));
  }
  if (duals_path) {
    const pann::DualState duals = pann::load_duals(*duals_path);
    if (duals.size() != suite.label_space.num_classes()) {
      pann::fail(pann::ErrorCode::kArchMismatch,
                 duals_path->string() + ": dual length does not match the label space");
    }
  }
  const auto report = pann::evaluate(params, suite.test, suite.label_space);
  print_report_table(report);
  std::cout << pann::report_to_string(report);
  return kOk;
}

int cmd_verify(const std::string& level) {
  pann::verify::Options opts;
  opts.level = level == "full" ? pann::verify::Level::kFull : pann::verify::Level::kFast;
  const auto results = pann::verify::run_all(opts);
  bool ok = true;
  for (const auto& r : results) {
    std::cerr << pann::verify::format_line(r) << "\n";
    ok = ok && r.passed;
  }
  std::cout << pann::verify::to_json(results, opts.level).dump(2) << "\n";
  return ok ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partial-label organ segmentation on synthetic phantoms"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "Build a phantom suite and write it to disk");
  std::string gen_config, gen_out;
  std::uint64_t gen_seed = 0;
  gen->add_option("--config", gen_config, "Suite config JSON (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Master seed")->required();

  auto* train = app.add_subcommand("train", "Run one training experiment");
  std::string train_config;
  train->add_option("--config", train_config, "Training job JSON")
      ->required()
      ->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Recompute the test report from a checkpoint");
  std::string eval_ckpt, eval_suite, eval_duals;
  eval->add_option("--ckpt", eval_ckpt, "Model checkpoint")->required();
  eval->add_option("--suite", eval_suite, "Suite directory")->required();
  eval->add_option("--duals", eval_duals, "Dual variables saved by train");

  auto* ver = app.add_subcommand("verify", "Run the oracle checks");
  std::string level = "fast";
  ver->add_option("--level", level, "fast or full")
      ->check(CLI::IsMember({"fast", "full"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) {
      return cmd_generate(gen_config.empty() ? std::nullopt
                                             : std::optional<fs::path>(gen_config),
                          gen_out, gen_seed);
    }
    if (*train) return cmd_train(train_config);
    if (*eval) {
      return cmd_eval(eval_ckpt, eval_suite,
                      eval_duals.empty() ? std::nullopt : std::optional<fs::path>(eval_duals));
    }
    return cmd_verify(level);
  } catch (const pann::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_for(e);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }
}
