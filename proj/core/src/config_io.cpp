#include "pann/config_io.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "pann/error.hpp"

namespace pann {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  fail(ErrorCode::kInvalidConfig, key + ": " + why);
}

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  if (!j.is_object()) bad(where.empty() ? "config" : where, "expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) bad(where + key, "unknown key");
  }
}

template <typename T>
void read(const json& j, const std::string& key, T& out, const std::string& prefix = "") {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    bad(prefix + key, "wrong type");
  }
}

}  // namespace

TrainJob parse_train_job(const json& j) {
  reject_unknown(j,
                 {"mode", "lambda1", "lambda2", "m1", "m2", "lr_min", "lr_max",
                  "batch_full", "batch_partial", "pseudo_refresh", "seed", "suite_dir",
                  "out_dir", "poly_power", "hidden_layers", "channels"},
                 "");
  TrainJob job;
  TrainConfig& c = job.train;
  if (j.contains("mode")) {
    std::string name;
    read(j, "mode", name);
    const auto mode = parse_mode(name);
    if (!mode) bad("mode", "expected one of full, semi, partial, pann");
    c.mode = *mode;
  }
  read(j, "lambda1", c.lambda1);
  read(j, "lambda2", c.lambda2);
  read(j, "m1", c.m1);
  read(j, "m2", c.m2);
  read(j, "lr_min", c.lr_min);
  read(j, "lr_max", c.lr_max);
  read(j, "batch_full", c.batch_full);
  read(j, "batch_partial", c.batch_partial);
  read(j, "pseudo_refresh", c.pseudo_refresh);
  read(j, "seed", c.seed);
  read(j, "poly_power", c.poly_power);
  read(j, "hidden_layers", c.hidden_layers);
  read(j, "channels", c.channels);
  std::string suite_dir, out_dir;
  if (!j.contains("suite_dir")) bad("suite_dir", "required");
  if (!j.contains("out_dir")) bad("out_dir", "required");
  read(j, "suite_dir", suite_dir);
  read(j, "out_dir", out_dir);
  job.suite_dir = suite_dir;
  job.out_dir = out_dir;
  c.validate();
  return job;
}

json train_job_to_json(const TrainJob& job) {
  const TrainConfig& c = job.train;
  return {{"mode", std::string(to_string(c.mode))},
          {"lambda1", c.lambda1},
          {"lambda2", c.lambda2},
          {"m1", c.m1},
          {"m2", c.m2},
          {"lr_min", c.lr_min},
          {"lr_max", c.lr_max},
          {"batch_full", c.batch_full},
          {"batch_partial", c.batch_partial},
          {"pseudo_refresh", c.pseudo_refresh},
          {"seed", c.seed},
          {"poly_power", c.poly_power},
          {"hidden_layers", c.hidden_layers},
          {"channels", c.channels},
          {"suite_dir", job.suite_dir.string()},
          {"out_dir", job.out_dir.string()}};
}

SuiteConfig parse_suite_config(const json& j) {
  reject_unknown(j,
                 {"height", "width", "n_full", "n_test", "background_mean",
                  "background_std", "organs", "partial"},
                 "");
  SuiteConfig c = default_suite_config();
  read(j, "height", c.phantom.height);
  read(j, "width", c.phantom.width);
  read(j, "n_full", c.n_full);
  read(j, "n_test", c.n_test);
  read(j, "background_mean", c.phantom.background_mean);
  read(j, "background_std", c.phantom.background_std);

  if (j.contains("organs")) {
    const json& organs = j.at("organs");
    if (!organs.is_array()) bad("organs", "expected a list");
    std::vector<std::string> names;
    c.phantom.organs.clear();
    for (std::size_t i = 0; i < organs.size(); ++i) {
      const std::string p = "organs[" + std::to_string(i) + "].";
      const json& o = organs[i];
      reject_unknown(o,
                     {"name", "center_y", "center_x", "semi_axis_y", "semi_axis_x",
                      "center_jitter_std", "axis_jitter_std", "intensity_mean",
                      "intensity_std"},
                     p);
      if (!o.contains("name")) bad(p + "name", "required");
      std::string name;
      read(o, "name", name, p);
      names.push_back(name);
      OrganEllipse e;
      read(o, "center_y", e.center_y, p);
      read(o, "center_x", e.center_x, p);
      read(o, "semi_axis_y", e.semi_axis_y, p);
      read(o, "semi_axis_x", e.semi_axis_x, p);
      read(o, "center_jitter_std", e.center_jitter_std, p);
      read(o, "axis_jitter_std", e.axis_jitter_std, p);
      read(o, "intensity_mean", e.intensity_mean, p);
      read(o, "intensity_std", e.intensity_std, p);
      c.phantom.organs.push_back(e);
    }
    try {
      c.label_space = LabelSpace(names);
    } catch (const Error& e) {
      bad("organs", e.what());
    }
  }

  if (j.contains("partial")) {
    const json& partial = j.at("partial");
    if (!partial.is_array()) bad("partial", "expected a list");
    c.partial.clear();
    for (std::size_t t = 0; t < partial.size(); ++t) {
      const std::string p = "partial[" + std::to_string(t) + "].";
      reject_unknown(partial[t], {"visible", "count"}, p);
      std::vector<int> visible;
      PartialSplitConfig split;
      read(partial[t], "visible", visible, p);
      read(partial[t], "count", split.count, p);
      std::vector<ClassId> ids;
      for (int v : visible) {
        if (v < 0 || v > 254) bad(p + "visible", "class id out of range");
        ids.push_back(static_cast<ClassId>(v));
      }
      try {
        split.visible = PartialLabelSet(ids);
        split.visible.validate_against(c.label_space);
      } catch (const Error& e) {
        bad(p + "visible", e.what());
      }
      c.partial.push_back(std::move(split));
    }
  }

  try {
    c.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidConfig) throw;
    bad("phantom", e.what());
  }
  return c;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) bad(path.string(), "cannot open config file");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    bad(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace pann
