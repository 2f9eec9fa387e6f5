#include "pann/primal_dual.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pann/error.hpp"

namespace pann {

namespace {

void check_lengths(std::span<const double> pbar, std::span<const double> q,
                   const DualState& duals) {
  if (pbar.size() != q.size() || duals.size() != q.size()) {
    fail(ErrorCode::kShape, "pbar, q and duals must have equal length");
  }
}

double project(double v) {
  return std::clamp(v, -1.0 / kDualEpsilon, -kDualEpsilon);
}

}  // namespace

void DualState::validate() const {
  if (nu.size() != mu.size()) {
    fail(ErrorCode::kIllegalDual, "nu and mu differ in length");
  }
  for (std::size_t l = 0; l < nu.size(); ++l) {
    if (!(nu[l] < 0.0) || !(mu[l] < 0.0)) {
      fail(ErrorCode::kIllegalDual,
           "dual entries must be strictly negative (class " + std::to_string(l) + ")");
    }
  }
}

NeglogMax neglog_identity_max(double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0) {
    fail(ErrorCode::kDomain, "neglog identity requires alpha in (0, 1]");
  }
  const double beta = -1.0 / alpha;
  return {alpha * beta + 1.0 + std::log(-beta), beta};
}

DualState project_duals(DualState duals) {
  for (auto& v : duals.nu) v = project(v);
  for (auto& v : duals.mu) v = project(v);
  return duals;
}

DualState closed_form_duals(std::span<const double> pbar) {
  DualState d;
  d.nu.reserve(pbar.size());
  d.mu.reserve(pbar.size());
  for (double p : pbar) {
    d.nu.push_back(project(-1.0 / p));
    d.mu.push_back(project(-1.0 / (1.0 - p)));
  }
  return d;
}

DualState init_duals(std::span<const double> q) {
  for (double v : q) {
    if (!(v > 0.0) || !(v < 1.0)) {
      fail(ErrorCode::kDomain, "init_duals needs a smoothed prior with entries in (0,1)");
    }
  }
  return closed_form_duals(q);
}

double saddle_objective(std::span<const double> pbar, std::span<const double> q,
                        const DualState& duals) {
  check_lengths(pbar, q, duals);
  duals.validate();
  double value = 0.0;
  for (std::size_t l = 0; l < q.size(); ++l) {
    const double nu = duals.nu[l];
    const double mu = duals.mu[l];
    value += q[l] * (pbar[l] * nu + 1.0 + std::log(-nu)) +
             (1.0 - q[l]) * ((1.0 - pbar[l]) * mu + 1.0 + std::log(-mu));
  }
  return value;
}

double DualGrads::norm() const {
  double s = 0.0;
  for (double v : dnu) s += v * v;
  for (double v : dmu) s += v * v;
  return std::sqrt(s);
}

DualGrads dual_grads(std::span<const double> pbar, std::span<const double> q,
                     const DualState& duals) {
  check_lengths(pbar, q, duals);
  duals.validate();
  DualGrads g;
  g.dnu.resize(q.size());
  g.dmu.resize(q.size());
  for (std::size_t l = 0; l < q.size(); ++l) {
    g.dnu[l] = q[l] * (pbar[l] + 1.0 / duals.nu[l]);
    g.dmu[l] = (1.0 - q[l]) * (1.0 - pbar[l] + 1.0 / duals.mu[l]);
  }
  return g;
}

std::vector<double> primal_grad_wrt_pbar(std::span<const double> q,
                                         const DualState& duals) {
  if (duals.size() != q.size()) fail(ErrorCode::kShape, "q and duals differ in length");
  duals.validate();
  std::vector<double> g(q.size());
  for (std::size_t l = 0; l < q.size(); ++l) {
    g[l] = q[l] * duals.nu[l] - (1.0 - q[l]) * duals.mu[l];
  }
  return g;
}

DualState dual_ascent_step(const DualState& duals, const DualGrads& grads, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    fail(ErrorCode::kInvalidConfig, "dual learning rate must be finite and >= 0");
  }
  if (grads.dnu.size() != duals.size() || grads.dmu.size() != duals.size()) {
    fail(ErrorCode::kShape, "dual gradient length mismatch");
  }
  DualState next = duals;
  for (std::size_t l = 0; l < duals.size(); ++l) {
    if (!std::isfinite(grads.dnu[l]) || !std::isfinite(grads.dmu[l])) {
      fail(ErrorCode::kDivergedDuals, "non-finite dual gradient at class " +
                                          std::to_string(l));
    }
    next.nu[l] += lr * grads.dnu[l];
    next.mu[l] += lr * grads.dmu[l];
  }
  return project_duals(std::move(next));
}

std::size_t included_pixel_count(std::span<const MaskedProbs> maps) {
  std::size_t n = 0;
  for (const auto& m : maps) {
    const std::size_t pixels = m.probs->pixels();
    if (!m.mask.empty() && m.mask.size() != pixels) {
      fail(ErrorCode::kShape, "inclusion mask does not match probability map");
    }
    if (m.mask.empty()) {
      n += pixels;
    } else {
      n += static_cast<std::size_t>(std::count_if(
          m.mask.begin(), m.mask.end(), [](std::uint8_t v) { return v != 0; }));
    }
  }
  return n;
}

std::vector<ClassMap> chain_pbar_grad_to_logits(std::span<const MaskedProbs> maps,
                                                std::span<const double> g,
                                                double scale) {
  const std::size_t n = included_pixel_count(maps);
  if (n == 0) fail(ErrorCode::kEmptyMarginal, "no included pixels");
  const double w = scale / static_cast<double>(n);
  std::vector<ClassMap> out;
  out.reserve(maps.size());
  for (const auto& m : maps) {
    const ClassMap& probs = *m.probs;
    if (probs.classes() != g.size()) {
      fail(ErrorCode::kShape, "gradient length does not match class count");
    }
    ClassMap d(probs.height(), probs.width(), probs.classes());
    if (w != 0.0) {
      for (std::size_t p = 0; p < probs.pixels(); ++p) {
        if (!m.included(p)) continue;
        const auto pr = probs.pixel(p);
        double dot = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) dot += g[k] * pr[k];
        auto dst = d.pixel(p);
        for (std::size_t k = 0; k < g.size(); ++k) dst[k] = w * pr[k] * (g[k] - dot);
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<ClassMap> chain_prior_grad_to_logits(std::span<const MaskedProbs> maps,
                                                 std::span<const double> q,
                                                 const DualState& duals,
                                                 double lambda2) {
  const auto g = primal_grad_wrt_pbar(q, duals);
  return chain_pbar_grad_to_logits(maps, g, lambda2);
}

}  // namespace pann
