#include "pann/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "pann/error.hpp"

namespace pann {

LabelSpace::LabelSpace(std::vector<std::string> organ_names)
    : names_(std::move(organ_names)) {
  if (names_.size() > 254) {
    fail(ErrorCode::kInvalidSpec, "label space supports at most 254 organs");
  }
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty() || !seen.insert(n).second) {
      fail(ErrorCode::kInvalidSpec, "organ names must be non-empty and unique");
    }
  }
}

std::string_view LabelSpace::name(ClassId id) const {
  if (id == kBackground) return "background";
  if (id > names_.size()) {
    fail(ErrorCode::kLabelRange, "class id " + std::to_string(id) +
                                     " outside label space");
  }
  return names_[id - 1];
}

PartialLabelSet::PartialLabelSet(std::vector<ClassId> visible)
    : visible_(std::move(visible)) {
  std::sort(visible_.begin(), visible_.end());
  visible_.erase(std::unique(visible_.begin(), visible_.end()), visible_.end());
  if (visible_.empty()) {
    fail(ErrorCode::kInvalidPartialSet, "visible set must not be empty");
  }
  if (visible_.front() == kBackground) {
    fail(ErrorCode::kInvalidPartialSet,
         "visible set must not contain background id 0");
  }
}

bool PartialLabelSet::contains(ClassId id) const noexcept {
  return std::binary_search(visible_.begin(), visible_.end(), id);
}

void PartialLabelSet::validate_against(const LabelSpace& space) const {
  if (visible_.empty()) {
    fail(ErrorCode::kInvalidPartialSet, "visible set must not be empty");
  }
  if (visible_.back() > space.num_organs()) {
    fail(ErrorCode::kInvalidPartialSet,
         "visible id " + std::to_string(visible_.back()) +
             " exceeds organ count " + std::to_string(space.num_organs()));
  }
}

Sample Sample::full(Image image, LabelMap labels) {
  if (!image.same_shape(labels)) {
    fail(ErrorCode::kShape, "image and labels differ in shape");
  }
  Sample s;
  s.image_ = std::move(image);
  s.labels_ = std::move(labels);
  return s;
}

Sample Sample::partial(Image image, LabelMap masked, std::uint32_t t,
                       LabelMap ground_truth) {
  if (!image.same_shape(masked) || !image.same_shape(ground_truth)) {
    fail(ErrorCode::kShape, "image and labels differ in shape");
  }
  if (t == 0) {
    fail(ErrorCode::kInvalidPartialSet, "partial split index starts at 1");
  }
  Sample s;
  s.image_ = std::move(image);
  s.labels_ = std::move(masked);
  s.supervision_ = Supervision::partial(t);
  s.hidden_ = std::move(ground_truth);
  return s;
}

void PhantomSpec::validate(const LabelSpace& space) const {
  if (height == 0 || width == 0) {
    fail(ErrorCode::kInvalidSpec, "phantom dimensions must be positive");
  }
  if (organs.size() != space.num_organs()) {
    fail(ErrorCode::kInvalidSpec,
         "phantom has " + std::to_string(organs.size()) +
             " ellipses for " + std::to_string(space.num_organs()) + " organs");
  }
  if (background_std < 0.0 || background_mean < 0.0 || background_mean > 1.0) {
    fail(ErrorCode::kInvalidSpec, "background intensity out of range");
  }
  for (const auto& o : organs) {
    if (!(o.semi_axis_y > 0.0) || !(o.semi_axis_x > 0.0)) {
      fail(ErrorCode::kInvalidSpec, "semi-axes must be positive");
    }
    if (o.center_jitter_std < 0.0 || o.axis_jitter_std < 0.0 ||
        o.intensity_std < 0.0) {
      fail(ErrorCode::kInvalidSpec, "standard deviations must be >= 0");
    }
    if (o.intensity_mean < 0.0 || o.intensity_mean > 1.0) {
      fail(ErrorCode::kInvalidSpec, "intensity mean must lie in [0,1]");
    }
  }
}

LabelSpace default_label_space() {
  return LabelSpace({"liver", "spleen", "kidney", "pancreas"});
}

PhantomSpec default_phantom_spec() {
  PhantomSpec spec;
  spec.height = 32;
  spec.width = 32;
  spec.background_mean = 0.2;
  spec.background_std = 0.05;
  //             cy    cx    ay   ax   cjit ajit mean std
  spec.organs = {{0.42, 0.32, 8.0, 7.0, 1.0, 0.5, 0.3, 0.05},
                 {0.40, 0.76, 5.0, 4.0, 1.0, 0.5, 0.4, 0.05},
                 {0.72, 0.64, 4.0, 3.0, 1.0, 0.4, 0.5, 0.05},
                 {0.62, 0.46, 2.5, 6.0, 1.0, 0.4, 0.6, 0.05}};
  return spec;
}

namespace {

struct PlacedEllipse {
  double cy, cx, ay, ax;
};

bool inside(const PlacedEllipse& e, double y, double x) {
  const double dy = (y - e.cy) / e.ay;
  const double dx = (x - e.cx) / e.ax;
  return dy * dy + dx * dx <= 1.0;
}

}  // namespace

Sample generate_phantom(const PhantomSpec& spec, const LabelSpace& space,
                        std::uint64_t seed) {
  spec.validate(space);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  // Geometry first so the labelmap depends only on the jitter draws.
  std::vector<PlacedEllipse> placed;
  placed.reserve(spec.organs.size());
  for (const auto& o : spec.organs) {
    PlacedEllipse e{};
    e.cy = o.center_y * static_cast<double>(spec.height) +
           o.center_jitter_std * unit(rng);
    e.cx = o.center_x * static_cast<double>(spec.width) +
           o.center_jitter_std * unit(rng);
    e.ay = std::max(0.5, o.semi_axis_y + o.axis_jitter_std * unit(rng));
    e.ax = std::max(0.5, o.semi_axis_x + o.axis_jitter_std * unit(rng));
    placed.push_back(e);
  }

  LabelMap labels(spec.height, spec.width, kBackground);
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      for (std::size_t k = 0; k < placed.size(); ++k) {
        if (inside(placed[k], static_cast<double>(y), static_cast<double>(x))) {
          labels(y, x) = static_cast<ClassId>(k + 1);
        }
      }
    }
  }

  Image image(spec.height, spec.width);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const ClassId c = labels[i];
    double mean = spec.background_mean;
    double sd = spec.background_std;
    if (c != kBackground) {
      mean = spec.organs[c - 1].intensity_mean;
      sd = spec.organs[c - 1].intensity_std;
    }
    image[i] = static_cast<float>(std::clamp(mean + sd * unit(rng), 0.0, 1.0));
  }
  return Sample::full(std::move(image), std::move(labels));
}

Sample make_partial(const Sample& sample, const PartialLabelSet& visible,
                    std::uint32_t t) {
  if (sample.is_partial()) {
    fail(ErrorCode::kInvalidPartialSet,
         "make_partial requires a fully-labeled sample");
  }
  if (visible.visible().empty() || visible.contains(kBackground)) {
    fail(ErrorCode::kInvalidPartialSet, "visible set is empty or contains 0");
  }
  LabelMap masked = sample.labels();
  for (auto& v : masked.values()) {
    if (!visible.contains(v)) v = kBackground;
  }
  return Sample::partial(sample.image(), std::move(masked), t, sample.labels());
}

void SuiteConfig::validate() const {
  phantom.validate(label_space);
  if (n_full == 0) fail(ErrorCode::kInvalidConfig, "n_full must be positive");
  if (n_test == 0) fail(ErrorCode::kInvalidConfig, "n_test must be positive");
  for (const auto& p : partial) {
    p.visible.validate_against(label_space);
    if (p.count == 0) {
      fail(ErrorCode::kInvalidConfig, "partial split count must be positive");
    }
  }
}

SuiteConfig default_suite_config() {
  SuiteConfig c;
  c.n_full = 24;
  c.n_test = 12;
  c.partial = {{PartialLabelSet({1}), 12},
               {PartialLabelSet({2}), 12},
               {PartialLabelSet({3}), 12}};
  return c;
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view split_name,
                          std::uint64_t index) {
  // FNV-1a over the split name, then two splitmix64 finalizer rounds.
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : split_name) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(master_seed ^ h) + index);
}

Suite build_suite(const SuiteConfig& config, std::uint64_t seed) {
  config.validate();
  Suite suite;
  suite.label_space = config.label_space;
  suite.master_seed = seed;

  auto generate = [&](std::string_view split, std::size_t i) {
    return generate_phantom(config.phantom, config.label_space,
                            derive_seed(seed, split, i));
  };

  for (std::size_t i = 0; i < config.n_full; ++i) {
    suite.full.push_back(generate("full", i));
  }
  for (std::size_t t = 0; t < config.partial.size(); ++t) {
    const auto split_t = static_cast<std::uint32_t>(t + 1);
    const std::string name = "partial" + std::to_string(split_t);
    PartialSplit split{config.partial[t].visible, {}};
    for (std::size_t i = 0; i < config.partial[t].count; ++i) {
      split.samples.push_back(
          make_partial(generate(name, i), split.visible, split_t));
    }
    suite.partial.push_back(std::move(split));
  }
  for (std::size_t i = 0; i < config.n_test; ++i) {
    suite.test.push_back(generate("test", i));
  }
  return suite;
}

PriorDistribution compute_prior(std::span<const Sample> samples,
                                const LabelSpace& space, double smoothing) {
  if (samples.empty()) {
    fail(ErrorCode::kEmptyInput, "compute_prior needs at least one sample");
  }
  if (smoothing < 0.0) {
    fail(ErrorCode::kInvalidConfig, "prior smoothing must be >= 0");
  }
  const std::size_t k = space.num_classes();
  std::vector<std::uint64_t> counts(k, 0);
  std::uint64_t total = 0;
  for (const auto& s : samples) {
    if (s.is_partial()) {
      fail(ErrorCode::kInvalidConfig,
           "compute_prior accepts fully-labeled samples only");
    }
    for (ClassId c : s.labels().values()) {
      if (c >= k) {
        fail(ErrorCode::kLabelRange, "label " + std::to_string(c) +
                                         " outside label space");
      }
      ++counts[c];
    }
    total += s.labels().size();
  }
  const double denom =
      static_cast<double>(total) + static_cast<double>(k) * smoothing;
  PriorDistribution q;
  q.p.resize(k);
  for (std::size_t l = 0; l < k; ++l) {
    q.p[l] = (static_cast<double>(counts[l]) + smoothing) / denom;
  }
  return q;
}

}  // namespace pann
