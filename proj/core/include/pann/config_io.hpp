#pragma once

// JSON configuration files. Unknown keys are rejected; every error is a
// kInvalidConfig whose message starts with the offending key.

#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "pann/phantom.hpp"
#include "pann/trainer.hpp"

namespace pann {

/// Training job: keys mode, lambda1, lambda2, m1, m2, lr_min, lr_max,
/// batch_full, batch_partial, pseudo_refresh, seed, suite_dir, out_dir, and
/// optionally poly_power, hidden_layers, channels.
struct TrainJob {
  TrainConfig train;
  std::filesystem::path suite_dir;
  std::filesystem::path out_dir;
};

TrainJob parse_train_job(const nlohmann::json& j);
nlohmann::json train_job_to_json(const TrainJob& job);

/// Suite configuration: optional keys height, width, n_full, n_test,
/// background_mean, background_std, organs (list of {name, center_y,
/// center_x, semi_axis_y, semi_axis_x, center_jitter_std, axis_jitter_std,
/// intensity_mean, intensity_std}) and partial (list of {visible, count}).
/// Missing keys keep the desk defaults.
SuiteConfig parse_suite_config(const nlohmann::json& j);

nlohmann::json load_json_file(const std::filesystem::path& path);

}  // namespace pann
