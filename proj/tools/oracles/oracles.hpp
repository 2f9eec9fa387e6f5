#pragma once

// Independent reference computations used to check the library: brute
// force, high-precision arithmetic, numeric maximization and finite
// differences. Nothing here calls the code path it is meant to check.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "pann/grid.hpp"
#include "pann/phantom.hpp"
#include "pann/segnet.hpp"

namespace pann::oracle {

/// Golden-section maximization of a unimodal function on [lo, hi].
double golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                          double tol = 1e-12, int max_iter = 500);

/// max over beta < 0 of alpha*beta + 1 + log(-beta), found numerically.
double neglog_numeric(double alpha);

/// e^x / sum e^x at 50 significant digits, rounded to double.
std::vector<double> softmax_hp(std::span<const double> logits);

/// Mean of rows at 50 significant digits.
std::vector<double> mean_rows_hp(const std::vector<std::vector<double>>& rows);

/// -sum q log p + (1-q) log(1-p) at 50 digits.
double prior_loss_hp(std::span<const double> pbar, std::span<const double> q);

/// sum of binary KLs at 50 digits.
double kl_marginal_hp(std::span<const double> q, std::span<const double> pbar);

/// Number of pixel centres (y, x) with ((y-cy)/ay)^2 + ((x-cx)/ax)^2 <= 1.
std::size_t ellipse_area(std::size_t h, std::size_t w, double cy, double cx, double ay,
                         double ax);

/// Single pass class histogram normalized with additive smoothing.
std::vector<double> histogram_prior(std::span<const Sample> samples, std::size_t classes,
                                    double smoothing);

/// Per-layer parameter count computed from first principles.
std::size_t parameter_count(std::size_t hidden_layers, std::size_t channels,
                            std::size_t classes);

/// Straightforward forward pass: explicit loops and bounds checks, probs as
/// [pixel][class]. Reads parameters through its own offset arithmetic.
std::vector<std::vector<double>> reference_forward(const ModelParams& params,
                                                   const Image& image);

/// Central differences of f at x in every coordinate listed in `coords`
/// (all coordinates when empty).
std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                        std::vector<double> x, double step,
                                        const std::vector<std::size_t>& coords = {});

/// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-8);

/// Exhaustive all-pairs boundary distances: (mean surface, Hausdorff).
std::pair<double, double> surface_distances_brute(const Grid<std::uint8_t>& a,
                                                  const Grid<std::uint8_t>& b);

/// Dice from explicit set counts.
double dice_sets(const Grid<std::uint8_t>& a, const Grid<std::uint8_t>& b);

/// Argmax over an explicit candidate list; ties keep the first listed.
std::size_t argmax_over(std::span<const double> probs, const std::vector<std::size_t>& candidates);

/// Naive per-pixel NLL average: targets[p] is the class used at pixel p.
double mean_nll(const std::vector<std::vector<double>>& probs,
                const std::vector<std::size_t>& targets);

}  // namespace pann::oracle
