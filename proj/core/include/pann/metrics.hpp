#pragma once

// Overlap and boundary-distance metrics on 2-D binary masks.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pann/grid.hpp"
#include "pann/phantom.hpp"
#include "pann/segnet.hpp"

namespace pann {

using BinaryMask = Grid<std::uint8_t>;

BinaryMask class_mask(const LabelMap& labels, ClassId id);

/// 2|Z n Y| / (|Z| + |Y|); 1 when both masks are empty.
double dice(const BinaryMask& pred, const BinaryMask& gt);

/// Mask pixels with at least one 4-neighbour outside the mask (the grid
/// border counts as outside).
std::vector<std::pair<std::size_t, std::size_t>> boundary_pixels(const BinaryMask& mask);

struct SurfaceDistances {
  double mean = 0.0;       // average of the two directed mean distances
  double hausdorff = 0.0;  // max of the two directed max distances
};

/// Euclidean boundary distances with unit pixel spacing. Either mask empty
/// raises kUndefinedDistance.
SurfaceDistances surface_distances(const BinaryMask& pred, const BinaryMask& gt);

/// Per-pixel argmax, ties to the smallest class id.
LabelMap argmax_labels(const ClassMap& probs);

struct ClassScore {
  double dice = 0.0;
  std::optional<double> msd;
  std::optional<double> hausdorff;
};

struct SampleReport {
  std::size_t index = 0;
  std::vector<ClassScore> classes;  // indexed by class id, background first
};

struct ClassAggregate {
  double dice = 0.0;
  std::optional<double> msd;  // mean over samples where defined
  std::optional<double> hausdorff;
  std::size_t distance_count = 0;
};

struct EvaluationReport {
  std::vector<std::string> class_names;
  std::vector<SampleReport> samples;
  std::vector<ClassAggregate> per_class;
  double mean_organ_dice = 0.0;  // background excluded
};

EvaluationReport evaluate_predictions(std::span<const LabelMap> predictions,
                                      std::span<const Sample> samples,
                                      const LabelSpace& space);

EvaluationReport evaluate(const ModelParams& params, std::span<const Sample> samples,
                          const LabelSpace& space);

nlohmann::json report_to_json(const EvaluationReport& report);
/// Pretty-printed JSON text exactly as written to report.json.
std::string report_to_string(const EvaluationReport& report);

}  // namespace pann
