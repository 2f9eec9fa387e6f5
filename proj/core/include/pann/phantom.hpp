#pragma once

// Synthetic multi-organ phantoms with a fully-labeled split, T partially
// labeled splits and a held-out test split.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pann/grid.hpp"

namespace pann {

using ClassId = std::uint8_t;
inline constexpr ClassId kBackground = 0;

using Image = Grid<float>;
using LabelMap = Grid<ClassId>;

/// Organ classes 1..num_organs() plus background 0.
class LabelSpace {
 public:
  LabelSpace() = default;
  explicit LabelSpace(std::vector<std::string> organ_names);

  std::size_t num_organs() const noexcept { return names_.size(); }
  std::size_t num_classes() const noexcept { return names_.size() + 1; }
  const std::vector<std::string>& organ_names() const noexcept { return names_; }
  std::string_view name(ClassId id) const;

  bool operator==(const LabelSpace&) const = default;

 private:
  std::vector<std::string> names_;
};

/// The organ ids annotated in one partially-labeled split.
class PartialLabelSet {
 public:
  PartialLabelSet() = default;
  /// Sorts and deduplicates; throws kInvalidPartialSet when empty or when
  /// background is listed.
  explicit PartialLabelSet(std::vector<ClassId> visible);

  const std::vector<ClassId>& visible() const noexcept { return visible_; }
  bool contains(ClassId id) const noexcept;
  void validate_against(const LabelSpace& space) const;

  bool operator==(const PartialLabelSet&) const = default;

 private:
  std::vector<ClassId> visible_;
};

struct Supervision {
  enum class Kind : std::uint8_t { kFull, kPartial };
  Kind kind = Kind::kFull;
  std::uint32_t split = 0;  // t in 1..T for partial samples

  static Supervision full() { return {}; }
  static Supervision partial(std::uint32_t t) { return {Kind::kPartial, t}; }
  bool is_partial() const noexcept { return kind == Kind::kPartial; }
  bool operator==(const Supervision&) const = default;
};

class Sample {
 public:
  Sample() = default;

  static Sample full(Image image, LabelMap labels);
  static Sample partial(Image image, LabelMap masked, std::uint32_t t,
                        LabelMap ground_truth);

  const Image& image() const noexcept { return image_; }
  /// Labels visible to training: masked for partial samples.
  const LabelMap& labels() const noexcept { return labels_; }
  const Supervision& supervision() const noexcept { return supervision_; }
  bool is_partial() const noexcept { return supervision_.is_partial(); }
  std::size_t height() const noexcept { return image_.height(); }
  std::size_t width() const noexcept { return image_.width(); }

  /// Complete labelmap. Evaluation and serialization only; training code
  /// must go through labels().
  const LabelMap& evaluation_truth() const noexcept {
    return hidden_ ? *hidden_ : labels_;
  }

  bool operator==(const Sample&) const = default;

 private:
  Image image_;
  LabelMap labels_;
  Supervision supervision_;
  std::optional<LabelMap> hidden_;
};

struct OrganEllipse {
  double center_y = 0.5;  // fraction of height
  double center_x = 0.5;  // fraction of width
  double semi_axis_y = 4.0;  // pixels
  double semi_axis_x = 4.0;
  double center_jitter_std = 0.0;  // pixels
  double axis_jitter_std = 0.0;
  double intensity_mean = 0.5;
  double intensity_std = 0.05;
};

struct PhantomSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  double background_mean = 0.2;
  double background_std = 0.05;
  // Draw order: later entries occlude earlier ones.
  std::vector<OrganEllipse> organs;

  void validate(const LabelSpace& space) const;
};

LabelSpace default_label_space();
PhantomSpec default_phantom_spec();

Sample generate_phantom(const PhantomSpec& spec, const LabelSpace& space,
                        std::uint64_t seed);

/// Hides every organ not in `visible`. Requires a fully-labeled sample.
Sample make_partial(const Sample& sample, const PartialLabelSet& visible,
                    std::uint32_t t);

struct PartialSplitConfig {
  PartialLabelSet visible;
  std::size_t count = 0;
};

struct SuiteConfig {
  LabelSpace label_space = default_label_space();
  PhantomSpec phantom = default_phantom_spec();
  std::size_t n_full = 24;
  std::size_t n_test = 12;
  std::vector<PartialSplitConfig> partial;

  void validate() const;
};

/// 24 fully-labeled, 12 test, and three partial splits of 12 samples with
/// visible sets {1}, {2}, {3}.
SuiteConfig default_suite_config();

struct PartialSplit {
  PartialLabelSet visible;
  std::vector<Sample> samples;
  bool operator==(const PartialSplit&) const = default;
};

struct Suite {
  LabelSpace label_space;
  std::uint64_t master_seed = 0;
  std::vector<Sample> full;
  std::vector<PartialSplit> partial;  // partial[t-1] is split t
  std::vector<Sample> test;

  std::size_t num_partial_splits() const noexcept { return partial.size(); }
  bool operator==(const Suite&) const = default;
};

/// Seed of sample `index` in split `split_name`, mixed from the master seed.
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view split_name,
                          std::uint64_t index);

Suite build_suite(const SuiteConfig& config, std::uint64_t seed);

inline constexpr double kPriorSmoothing = 1e-6;

struct PriorDistribution {
  std::vector<double> p;
  bool operator==(const PriorDistribution&) const = default;
};

/// Smoothed per-class pixel proportions over fully-labeled samples:
/// q_l = (count_l + eps) / (total + K * eps).
PriorDistribution compute_prior(std::span<const Sample> samples,
                                const LabelSpace& space,
                                double smoothing = kPriorSmoothing);

}  // namespace pann
