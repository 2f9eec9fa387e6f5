#pragma once

// Loss terms of the partially-supervised objective
//   J = J_L + lambda1 * J_P + lambda2 * J_C
// and their gradients with respect to logits.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pann/grid.hpp"
#include "pann/phantom.hpp"
#include "pann/primal_dual.hpp"
#include "pann/segnet.hpp"

namespace pann {

/// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] before logs.
inline constexpr double kProbFloor = 1e-12;

struct MarginalEstimate {
  std::vector<double> pbar;
  std::size_t n_pixels = 0;
};

/// Average of the included per-pixel probability vectors.
MarginalEstimate marginal_average(std::span<const MaskedProbs> maps);

struct LossValueAndGrad {
  double value = 0.0;
  ClassMap grad;  // d loss / d logits
};

/// Mean negative log-likelihood of `labels`. The mean is taken over
/// `normalizer` pixels (0 = this map's pixel count), so per-sample calls can
/// be summed into a batch mean.
LossValueAndGrad loss_full(const ClassMap& probs, const LabelMap& labels,
                           std::size_t normalizer = 0);

/// Marks pixels that carry a given label in a pseudo-label grid.
inline constexpr ClassId kNoPseudo = 255;

/// For every pixel whose given label is 0, the argmax over the candidate
/// classes {0} u (organs - visible); ties go to the smallest id. Labeled
/// pixels are set to kNoPseudo.
LabelMap estimate_pseudo_labels(const ClassMap& probs, const LabelMap& given,
                                const PartialLabelSet& visible);

/// Same, with every class a candidate. Used when partial data is treated as
/// unlabeled.
LabelMap estimate_pseudo_labels_unrestricted(const ClassMap& probs,
                                             const LabelMap& given);

/// Cross-entropy against given labels where present and pseudo labels on the
/// remaining (given label 0) pixels.
LossValueAndGrad loss_partial(const ClassMap& probs, const LabelMap& given,
                              const LabelMap& pseudo, std::size_t normalizer = 0);

/// -sum_l q_l log pbar_l + (1 - q_l) log(1 - pbar_l), without the constant.
double prior_loss_direct(std::span<const double> pbar, std::span<const double> q);

/// Gradient of prior_loss_direct with respect to pbar.
std::vector<double> prior_loss_direct_grad(std::span<const double> pbar,
                                           std::span<const double> q);

/// sum_l KL(Bernoulli(q_l) || Bernoulli(pbar_l)).
double kl_marginal(std::span<const double> q, std::span<const double> pbar);

/// Number of degenerate-marginal clamps performed so far (process wide).
std::uint64_t degenerate_marginal_count() noexcept;

struct FullMember {
  const Image* image;
  const LabelMap* labels;
};

struct PartialMember {
  const Image* image;
  const LabelMap* given;
  const LabelMap* pseudo;
};

struct Batch {
  std::vector<FullMember> full;
  std::vector<PartialMember> partial;
};

struct ObjectiveTerms {
  double j_full = 0.0;
  double j_partial = 0.0;
  double jc_direct = 0.0;
  double jc_saddle = 0.0;
  double total = 0.0;  // j_full + lambda1 j_partial + lambda2 jc_saddle
};

struct ObjectiveEvaluation {
  ObjectiveTerms terms;
  MarginalEstimate marginal;  // over all partial pixels; empty if none
  ParamGrads grads;           // filled when requested
};

/// Forward pass over a mixed batch. J_L and J_P are means over their own
/// pixel counts; J_C is the saddle form at `duals` over the partial pixels.
/// An empty partial side contributes zero to J_P and J_C.
ObjectiveEvaluation evaluate_objective(const Batch& batch, const ModelParams& params,
                                       const DualState& duals,
                                       std::span<const double> q, double lambda1,
                                       double lambda2, bool with_grads);

double total_objective(const Batch& batch, const ModelParams& params,
                       const DualState& duals, std::span<const double> q,
                       double lambda1, double lambda2);

}  // namespace pann
