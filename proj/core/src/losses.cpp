#include "pann/losses.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <string>

#include "pann/error.hpp"

namespace pann {

namespace {

std::atomic<std::uint64_t> g_degenerate{0};

double clamp_marginal(double p) {
  if (p < kProbFloor || p > 1.0 - kProbFloor) {
    if (g_degenerate.fetch_add(1) == 0) {
      std::fprintf(stderr, "warning: degenerate marginal entry %.3g clamped\n", p);
    }
    return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
  }
  return p;
}

double safe_log(double p) { return std::log(std::max(p, kProbFloor)); }

void check_shape(const ClassMap& probs, const LabelMap& labels) {
  if (probs.height() != labels.height() || probs.width() != labels.width()) {
    fail(ErrorCode::kShape, "probability map and labels differ in shape");
  }
}

std::size_t resolve_normalizer(std::size_t normalizer, const ClassMap& probs) {
  return normalizer == 0 ? probs.pixels() : normalizer;
}

// Adds the NLL of `target` at pixel p to value and writes (p - onehot) * w.
void accumulate_nll(const ClassMap& probs, std::size_t p, ClassId target, double w,
                    double& value, ClassMap& grad) {
  const std::size_t k = probs.classes();
  if (target >= k) {
    fail(ErrorCode::kLabelRange, "label " + std::to_string(target) +
                                     " outside class range " + std::to_string(k));
  }
  const auto pr = probs.pixel(p);
  value -= safe_log(pr[target]);
  auto g = grad.pixel(p);
  for (std::size_t c = 0; c < k; ++c) g[c] = w * pr[c];
  g[target] -= w;
}

LabelMap restricted_argmax(const ClassMap& probs, const LabelMap& given,
                           const std::vector<bool>& candidate) {
  check_shape(probs, given);
  LabelMap pseudo(given.height(), given.width(), kNoPseudo);
  for (std::size_t p = 0; p < probs.pixels(); ++p) {
    if (given[p] != kBackground) continue;
    const auto pr = probs.pixel(p);
    std::size_t best = probs.classes();
    for (std::size_t c = 0; c < probs.classes(); ++c) {
      if (!candidate[c]) continue;
      if (best == probs.classes() || pr[c] > pr[best]) best = c;
    }
    if (best == probs.classes()) {
      fail(ErrorCode::kInvalidPartialSet, "empty pseudo-label candidate set");
    }
    pseudo[p] = static_cast<ClassId>(best);
  }
  return pseudo;
}

}  // namespace

std::uint64_t degenerate_marginal_count() noexcept { return g_degenerate.load(); }

MarginalEstimate marginal_average(std::span<const MaskedProbs> maps) {
  MarginalEstimate m;
  m.n_pixels = included_pixel_count(maps);
  if (m.n_pixels == 0) fail(ErrorCode::kEmptyMarginal, "no included pixels");
  const std::size_t k = maps.front().probs->classes();
  m.pbar.assign(k, 0.0);
  for (const auto& mp : maps) {
    if (mp.probs->classes() != k) {
      fail(ErrorCode::kShape, "probability maps disagree in class count");
    }
    for (std::size_t p = 0; p < mp.probs->pixels(); ++p) {
      if (!mp.included(p)) continue;
      const auto pr = mp.probs->pixel(p);
      for (std::size_t c = 0; c < k; ++c) m.pbar[c] += pr[c];
    }
  }
  const double inv = 1.0 / static_cast<double>(m.n_pixels);
  for (auto& v : m.pbar) v *= inv;
  return m;
}

LossValueAndGrad loss_full(const ClassMap& probs, const LabelMap& labels,
                           std::size_t normalizer) {
  check_shape(probs, labels);
  const double w = 1.0 / static_cast<double>(resolve_normalizer(normalizer, probs));
  LossValueAndGrad r{0.0, ClassMap(probs.height(), probs.width(), probs.classes())};
  for (std::size_t p = 0; p < probs.pixels(); ++p) {
    accumulate_nll(probs, p, labels[p], w, r.value, r.grad);
  }
  r.value *= w;
  return r;
}

LabelMap estimate_pseudo_labels(const ClassMap& probs, const LabelMap& given,
                                const PartialLabelSet& visible) {
  std::vector<bool> candidate(probs.classes(), true);
  for (ClassId v : visible.visible()) {
    if (v < candidate.size()) candidate[v] = false;
  }
  candidate[kBackground] = true;
  return restricted_argmax(probs, given, candidate);
}

LabelMap estimate_pseudo_labels_unrestricted(const ClassMap& probs,
                                             const LabelMap& given) {
  return restricted_argmax(probs, given, std::vector<bool>(probs.classes(), true));
}

LossValueAndGrad loss_partial(const ClassMap& probs, const LabelMap& given,
                              const LabelMap& pseudo, std::size_t normalizer) {
  check_shape(probs, given);
  if (!given.same_shape(pseudo)) {
    fail(ErrorCode::kPseudoCoverage, "pseudo-label grid shape differs from labels");
  }
  const double w = 1.0 / static_cast<double>(resolve_normalizer(normalizer, probs));
  LossValueAndGrad r{0.0, ClassMap(probs.height(), probs.width(), probs.classes())};
  for (std::size_t p = 0; p < probs.pixels(); ++p) {
    const bool labeled = given[p] != kBackground;
    const bool covered = pseudo[p] != kNoPseudo;
    if (labeled == covered) {
      fail(ErrorCode::kPseudoCoverage,
           "pseudo labels must cover exactly the unlabeled pixels (pixel " +
               std::to_string(p) + ")");
    }
    accumulate_nll(probs, p, labeled ? given[p] : pseudo[p], w, r.value, r.grad);
  }
  r.value *= w;
  return r;
}

double prior_loss_direct(std::span<const double> pbar, std::span<const double> q) {
  if (pbar.size() != q.size()) fail(ErrorCode::kShape, "pbar and q differ in length");
  double v = 0.0;
  for (std::size_t l = 0; l < q.size(); ++l) {
    const double p = clamp_marginal(pbar[l]);
    v -= q[l] * std::log(p) + (1.0 - q[l]) * std::log1p(-p);
  }
  return v;
}

std::vector<double> prior_loss_direct_grad(std::span<const double> pbar,
                                           std::span<const double> q) {
  if (pbar.size() != q.size()) fail(ErrorCode::kShape, "pbar and q differ in length");
  std::vector<double> g(q.size());
  for (std::size_t l = 0; l < q.size(); ++l) {
    const double p = clamp_marginal(pbar[l]);
    g[l] = -q[l] / p + (1.0 - q[l]) / (1.0 - p);
  }
  return g;
}

double kl_marginal(std::span<const double> q, std::span<const double> pbar) {
  if (pbar.size() != q.size()) fail(ErrorCode::kShape, "pbar and q differ in length");
  auto term = [](double a, double b) { return a > 0.0 ? a * std::log(a / b) : 0.0; };
  double v = 0.0;
  for (std::size_t l = 0; l < q.size(); ++l) {
    const double p = clamp_marginal(pbar[l]);
    v += term(q[l], p) + term(1.0 - q[l], 1.0 - p);
  }
  return v;
}

ObjectiveEvaluation evaluate_objective(const Batch& batch, const ModelParams& params,
                                       const DualState& duals,
                                       std::span<const double> q, double lambda1,
                                       double lambda2, bool with_grads) {
  ObjectiveEvaluation ev;
  if (with_grads) ev.grads.values.assign(params.values.size(), 0.0);

  std::size_t n_full = 0;
  for (const auto& m : batch.full) n_full += m.labels->size();
  for (const auto& m : batch.full) {
    ForwardResult fr = forward(params, *m.image);
    LossValueAndGrad l = loss_full(fr.probs, *m.labels, n_full);
    ev.terms.j_full += l.value;
    if (with_grads) ev.grads += backward(params, fr.cache, l.grad);
  }

  if (!batch.partial.empty()) {
    std::vector<ForwardResult> fwd;
    fwd.reserve(batch.partial.size());
    std::size_t n_partial = 0;
    for (const auto& m : batch.partial) {
      fwd.push_back(forward(params, *m.image));
      n_partial += m.given->size();
    }
    std::vector<MaskedProbs> maps;
    for (const auto& f : fwd) maps.push_back({&f.probs, {}});
    ev.marginal = marginal_average(maps);
    ev.terms.jc_direct = prior_loss_direct(ev.marginal.pbar, q);
    ev.terms.jc_saddle = saddle_objective(ev.marginal.pbar, q, duals);

    std::vector<ClassMap> prior_grads;
    if (with_grads && lambda2 != 0.0) {
      prior_grads = chain_prior_grad_to_logits(maps, q, duals, lambda2);
    }
    for (std::size_t i = 0; i < batch.partial.size(); ++i) {
      const auto& m = batch.partial[i];
      LossValueAndGrad l = loss_partial(fwd[i].probs, *m.given, *m.pseudo, n_partial);
      ev.terms.j_partial += l.value;
      if (!with_grads) continue;
      ClassMap dlogits(l.grad.height(), l.grad.width(), l.grad.classes());
      if (lambda1 != 0.0) {
        for (std::size_t j = 0; j < dlogits.values().size(); ++j) {
          dlogits.values()[j] = lambda1 * l.grad.values()[j];
        }
      }
      if (!prior_grads.empty()) dlogits += prior_grads[i];
      if (lambda1 != 0.0 || !prior_grads.empty()) {
        ev.grads += backward(params, fwd[i].cache, dlogits);
      }
    }
  }
  ev.terms.total =
      ev.terms.j_full + lambda1 * ev.terms.j_partial + lambda2 * ev.terms.jc_saddle;
  return ev;
}

double total_objective(const Batch& batch, const ModelParams& params,
                       const DualState& duals, std::span<const double> q,
                       double lambda1, double lambda2) {
  return evaluate_objective(batch, params, duals, q, lambda1, lambda2, false)
      .terms.total;
}

}  // namespace pann
