#pragma once

// A small fully-convolutional per-pixel classifier: `hidden_layers` 3x3
// convolutions (zero same-padding, ReLU) followed by a 1x1 convolution to
// one logit per class. All arithmetic is double precision.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pann/binary_io.hpp"
#include "pann/grid.hpp"
#include "pann/phantom.hpp"

namespace pann {

struct Architecture {
  std::uint32_t hidden_layers = 2;
  std::uint32_t channels = 8;
  std::uint32_t classes = 5;

  void validate() const;
  bool operator==(const Architecture&) const = default;
};

/// The reference network: two 3x3 layers of 8 channels.
Architecture reference_architecture(std::size_t num_classes);

/// Location of one convolution inside the flat parameter vector. Weights are
/// laid out [out][in][ky][kx], followed by `out` biases.
struct LayerView {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t kernel;  // 3 for hidden layers, 1 for the head
  std::size_t weight_offset;
  std::size_t bias_offset;

  std::size_t weight_count() const noexcept {
    return in_channels * out_channels * kernel * kernel;
  }
  std::size_t fan_in() const noexcept { return in_channels * kernel * kernel; }
};

std::vector<LayerView> layer_views(const Architecture& arch);
std::size_t parameter_count(const Architecture& arch);

struct ModelParams {
  Architecture arch;
  std::vector<double> values;

  bool operator==(const ModelParams&) const = default;
};

struct ParamGrads {
  std::vector<double> values;

  ParamGrads& operator+=(const ParamGrads& o);
};

/// Activations kept for the backward pass; channel-major [c][pixel].
struct ForwardCache {
  Architecture arch;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> input;
  std::vector<std::vector<double>> pre;   // per hidden layer
  std::vector<std::vector<double>> post;  // ReLU(pre)
};

struct ForwardResult {
  ClassMap logits;
  ClassMap probs;
  ForwardCache cache;
};

ModelParams init_params(const Architecture& arch, std::uint64_t seed);

ForwardResult forward(const ModelParams& params, const Image& image);

/// Probabilities only; skips retaining the cache.
ClassMap predict(const ModelParams& params, const Image& image);

std::vector<double> softmax_stable(std::span<const double> logits);
void softmax_stable_inplace(std::span<double> values);

ParamGrads backward(const ModelParams& params, const ForwardCache& cache,
                    const ClassMap& dloss_dlogits);

ModelParams sgd_step(const ModelParams& params, const ParamGrads& grads, double lr);

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr Magic kCheckpointMagic{'P', 'A', 'N', 'C'};

Bytes encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes,
                              const std::string& source,
                              const std::optional<Architecture>& expected = {});
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path,
                            const std::optional<Architecture>& expected = {});

}  // namespace pann
