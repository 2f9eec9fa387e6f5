#pragma once

// Min-max form of the marginal prior penalty. For each class l the two
// log terms are rewritten with the identity
//
//   -log a = max_{b<0} ( a*b + 1 + log(-b) ),   argmax b* = -1/a,
//
// once for pbar_l (dual nu_l) and once for 1 - pbar_l (dual mu_l). The
// resulting objective is linear in pbar, so per-pixel gradients of
// mini-batch estimates are unbiased.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pann/grid.hpp"

namespace pann {

/// Duals are kept inside [-1/kDualEpsilon, -kDualEpsilon].
inline constexpr double kDualEpsilon = 1e-6;

struct DualState {
  std::vector<double> nu;
  std::vector<double> mu;

  std::size_t size() const noexcept { return nu.size(); }
  /// Throws kIllegalDual unless every entry is strictly negative and the
  /// vectors agree in length.
  void validate() const;
  bool operator==(const DualState&) const = default;
};

struct NeglogMax {
  double value;
  double beta_star;
};

/// Maximizer of alpha*beta + 1 + log(-beta); alpha in (0, 1].
NeglogMax neglog_identity_max(double alpha);

/// Projects each entry into the legal box.
DualState project_duals(DualState duals);

/// nu* = -1/pbar, mu* = -1/(1 - pbar), projected.
DualState closed_form_duals(std::span<const double> pbar);

/// Initial duals: the closed form evaluated at the prior.
DualState init_duals(std::span<const double> q);

/// sum_l q_l (pbar_l nu_l + 1 + log(-nu_l))
///     + (1 - q_l) ((1 - pbar_l) mu_l + 1 + log(-mu_l)).
/// At the closed-form duals this equals prior_loss_direct(pbar, q).
double saddle_objective(std::span<const double> pbar, std::span<const double> q,
                        const DualState& duals);

struct DualGrads {
  std::vector<double> dnu;
  std::vector<double> dmu;

  double norm() const;
};

/// d saddle / d nu_l = q_l (pbar_l + 1/nu_l),
/// d saddle / d mu_l = (1 - q_l)(1 - pbar_l + 1/mu_l).
DualGrads dual_grads(std::span<const double> pbar, std::span<const double> q,
                     const DualState& duals);

/// d saddle / d pbar_l = q_l nu_l - (1 - q_l) mu_l; independent of pbar.
std::vector<double> primal_grad_wrt_pbar(std::span<const double> q,
                                         const DualState& duals);

/// Gradient ascent followed by projection. Non-finite gradients raise
/// kDivergedDuals.
DualState dual_ascent_step(const DualState& duals, const DualGrads& grads,
                           double lr);

/// A probability map plus an optional inclusion mask (empty mask = every
/// pixel included; otherwise nonzero entries are included).
struct MaskedProbs {
  const ClassMap* probs = nullptr;
  std::span<const std::uint8_t> mask;

  bool included(std::size_t p) const noexcept { return mask.empty() || mask[p] != 0; }
};

std::size_t included_pixel_count(std::span<const MaskedProbs> maps);

/// Back-propagates a gradient g with respect to pbar through the average
/// and the per-pixel softmax: each included pixel receives
/// scale / N * J_softmax(p)^T g. Excluded pixels get zeros.
std::vector<ClassMap> chain_pbar_grad_to_logits(std::span<const MaskedProbs> maps,
                                                std::span<const double> g,
                                                double scale);

/// Per-pixel logit gradient of lambda2 * saddle_objective at fixed duals.
std::vector<ClassMap> chain_prior_grad_to_logits(std::span<const MaskedProbs> maps,
                                                 std::span<const double> q,
                                                 const DualState& duals,
                                                 double lambda2);

}  // namespace pann
