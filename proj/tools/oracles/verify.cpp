#include "verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <utility>

#include "oracles.hpp"
#include "pann/losses.hpp"
#include "pann/metrics.hpp"
#include "pann/phantom.hpp"
#include "pann/segnet.hpp"
#include "pann/trainer.hpp"

namespace pann::verify {

namespace {

using Rng = std::mt19937_64;

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

CheckResult finish(std::string name, double measured, double tol, bool passed,
                   std::string detail, const Timer& t) {
  return {std::move(name), passed, measured, tol, std::move(detail), t.seconds()};
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Random point in the open simplex; `spread` scales the logits.
std::vector<double> random_simplex(Rng& rng, std::size_t k, double spread = 1.5) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> z(k);
  for (auto& v : z) v = spread * n(rng);
  return softmax_stable(z);
}

DualState random_duals(Rng& rng, std::size_t k, double lo = -20.0, double hi = -0.5) {
  DualState d;
  for (std::size_t l = 0; l < k; ++l) {
    d.nu.push_back(uniform(rng, lo, hi));
    d.mu.push_back(uniform(rng, lo, hi));
  }
  return d;
}

ClassMap random_probs(Rng& rng, std::size_t h, std::size_t w, std::size_t k,
                      double spread = 1.5) {
  ClassMap m(h, w, k);
  for (std::size_t p = 0; p < m.pixels(); ++p) {
    const auto s = random_simplex(rng, k, spread);
    std::copy(s.begin(), s.end(), m.pixel(p).begin());
  }
  return m;
}

std::vector<double> to_vector(const ClassMap& m) {
  return {m.values().begin(), m.values().end()};
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

}  // namespace

CheckResult check_neglog_closed_form(const Options&) {
  Timer t;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double alpha = 0.01 + 0.99 * i / 99.0;
    const auto r = neglog_identity_max(alpha);
    worst = std::max(worst, std::abs(r.value + std::log(alpha)));
    worst = std::max(worst, std::abs(r.beta_star + 1.0 / alpha));
  }
  return finish("neglog_closed_form", worst, 1e-9, worst <= 1e-9, "100 alphas in [0.01, 1]", t);
}

CheckResult check_neglog_numeric(const Options&) {
  Timer t;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double alpha = 0.01 + 0.99 * i / 99.0;
    const double numeric = oracle::neglog_numeric(alpha);
    worst = std::max(worst, std::abs(numeric - neglog_identity_max(alpha).value));
  }
  return finish("neglog_numeric", worst, 1e-6, worst <= 1e-6,
                "golden-section max over beta vs closed form", t);
}

CheckResult check_saddle_value(const Options& opts) {
  Timer t;
  Rng rng(opts.seed);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = pick(rng, 2, 8);
    const auto q = random_simplex(rng, k);
    const auto pbar = random_simplex(rng, k);
    const double saddle = saddle_objective(pbar, q, closed_form_duals(pbar));
    worst = std::max(worst, std::abs(saddle - prior_loss_direct(pbar, q)));
    worst = std::max(worst, std::abs(saddle - oracle::prior_loss_hp(pbar, q)));
  }
  return finish("saddle_equivalence", worst, 1e-9, worst <= 1e-9,
                "1000 random (q, pbar), 2-8 classes", t);
}

CheckResult check_saddle_gradient(const Options& opts) {
  Timer t;
  Rng rng(opts.seed + 1);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = pick(rng, 2, 8);
    const auto q = random_simplex(rng, k);
    const auto pbar = random_simplex(rng, k);
    const auto g = primal_grad_wrt_pbar(q, closed_form_duals(pbar));
    for (std::size_t l = 0; l < k; ++l) {
      const double analytic = -q[l] / pbar[l] + (1.0 - q[l]) / (1.0 - pbar[l]);
      worst = std::max(worst, std::abs(g[l] - analytic));
    }
  }
  return finish("saddle_gradient", worst, 1e-10, worst <= 1e-10,
                "primal gradient at closed-form duals vs direct-loss gradient", t);
}

CheckResult check_dual_grads_fd(const Options& opts) {
  Timer t;
  Rng rng(opts.seed + 2);
  double worst = 0.0;
  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const std::size_t k = pick(rng, 2, 6);
    const auto q = random_simplex(rng, k);
    const auto pbar = random_simplex(rng, k);
    const DualState d = random_duals(rng, k, -5.0, -0.5);
    const DualGrads g = dual_grads(pbar, q, d);
    for (std::size_t l = 0; l < k; ++l) {
      for (int which = 0; which < 2; ++which) {
        DualState up = d, down = d;
        auto& u = which == 0 ? up.nu[l] : up.mu[l];
        auto& w = which == 0 ? down.nu[l] : down.mu[l];
        u += h;
        w -= h;
        const double fd =
            (saddle_objective(pbar, q, up) - saddle_objective(pbar, q, down)) / (2.0 * h);
        const double an = which == 0 ? g.dnu[l] : g.dmu[l];
        worst = std::max(worst, std::abs(fd - an));
      }
    }
  }
  return finish("dual_grads_fd", worst, 1e-6, worst <= 1e-6,
                "dual gradients vs central differences of the saddle objective", t);
}

CheckResult check_dual_stationarity(const Options& opts) {
  Timer t;
  Rng rng(opts.seed + 3);
  double zero_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = pick(rng, 2, 8);
    const auto q = random_simplex(rng, k);
    const auto pbar = random_simplex(rng, k);
    const DualGrads g = opts.dual_grads(pbar, q, closed_form_duals(pbar));
    for (std::size_t l = 0; l < k; ++l) {
      zero_err = std::max({zero_err, std::abs(g.dnu[l]), std::abs(g.dmu[l])});
    }
  }

  // The closed form must also attract plain ascent from the prior's duals.
  double fixed_err = 0.0;
  for (int i = 0; i < 20; ++i) {
    const std::size_t k = 5;
    auto q = random_simplex(rng, k);
    auto pbar = random_simplex(rng, k);
    for (std::size_t l = 0; l < k; ++l) {
      q[l] = 0.5 * q[l] + 0.5 / k;
      pbar[l] = 0.5 * pbar[l] + 0.5 / k;
    }
    double curvature = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
      curvature = std::max({curvature, q[l] * pbar[l] * pbar[l],
                            (1.0 - q[l]) * (1.0 - pbar[l]) * (1.0 - pbar[l])});
    }
    const double lr = 1.0 / curvature;
    DualState d = init_duals(q);
    for (int s = 0; s < 20000; ++s) {
      d = dual_ascent_step(d, opts.dual_grads(pbar, q, d), lr);
    }
    const DualState target = closed_form_duals(pbar);
    for (std::size_t l = 0; l < k; ++l) {
      fixed_err = std::max(fixed_err, std::abs(d.nu[l] - target.nu[l]) / std::abs(target.nu[l]));
      fixed_err = std::max(fixed_err, std::abs(d.mu[l] - target.mu[l]) / std::abs(target.mu[l]));
    }
  }
  const bool ok = zero_err <= 1e-12 && fixed_err <= 1e-6;
  return finish("dual_stationarity", std::max(zero_err, fixed_err), 1e-6, ok,
                fmt("gradient at closed form %.3g (tol 1e-12), ascent fixed point rel err %.3g",
                    zero_err, fixed_err),
                t);
}

CheckResult check_prior_chain_fd(const Options& opts) {
  Timer t;
  Rng rng(opts.seed + 4);
  double worst = 0.0;
  const double h = 1e-6;
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t k = pick(rng, 2, 5);
    const auto q = random_simplex(rng, k);
    const DualState d = random_duals(rng, k, -6.0, -0.5);
    const double lambda2 = uniform(rng, 0.1, 2.0);
    std::vector<ClassMap> logits;
    std::vector<std::vector<std::uint8_t>> masks;
    std::normal_distribution<double> n(0.0, 1.0);
    for (int m = 0; m < 2; ++m) {
      ClassMap z(3, 3, k);
      for (auto& v : z.values()) v = n(rng);
      logits.push_back(std::move(z));
      std::vector<std::uint8_t> mask(9);
      for (auto& v : mask) v = static_cast<std::uint8_t>(pick(rng, 0, 3) != 0);
      mask[0] = 1;
      masks.push_back(std::move(mask));
    }
    auto probs_of = [&](const std::vector<ClassMap>& zs) {
      std::vector<ClassMap> out;
      for (const auto& z : zs) {
        ClassMap p(z.height(), z.width(), k);
        for (std::size_t px = 0; px < z.pixels(); ++px) {
          const auto s = oracle::softmax_hp(z.pixel(px));
          std::copy(s.begin(), s.end(), p.pixel(px).begin());
        }
        out.push_back(std::move(p));
      }
      return out;
    };
    auto objective = [&](const std::vector<ClassMap>& zs) {
      const auto ps = probs_of(zs);
      std::vector<std::vector<double>> rows;
      for (std::size_t m = 0; m < ps.size(); ++m) {
        for (std::size_t px = 0; px < ps[m].pixels(); ++px) {
          if (masks[m][px]) rows.emplace_back(ps[m].pixel(px).begin(), ps[m].pixel(px).end());
        }
      }
      return lambda2 * saddle_objective(oracle::mean_rows_hp(rows), q, d);
    };

    const auto probs = probs_of(logits);
    std::vector<MaskedProbs> maps;
    for (std::size_t m = 0; m < probs.size(); ++m) maps.push_back({&probs[m], masks[m]});
    const auto grads = chain_prior_grad_to_logits(maps, q, d, lambda2);
    for (std::size_t m = 0; m < logits.size(); ++m) {
      for (std::size_t i = 0; i < logits[m].values().size(); ++i) {
        auto up = logits, down = logits;
        up[m].values()[i] += h;
        down[m].values()[i] -= h;
        const double fd = (objective(up) - objective(down)) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - grads[m].values()[i]));
      }
    }
  }
  return finish("prior_chain_fd", worst, 1e-6, worst <= 1e-6,
                "prior-term logit gradient vs central differences", t);
}

CheckResult check_softmax_precision(const Options& opts) {
  Timer t;
  Rng rng(opts.seed + 5);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const std::size_t k = pick(rng, 2, 8);
    const double offset = uniform(rng, -700.0, 700.0);
    std::vector<double> z(k);
    for (auto& v : z) v = offset + uniform(rng, -20.0, 20.0);
    const auto fast = softmax_stable(z);
    std::vector<double> shifted(z);
    for (auto& v : shifted) v -= offset;
    const auto hp = oracle::softmax_hp(shifted);
    for (std::size_t l = 0; l < k; ++l) worst = std::max(worst, std::abs(fast[l] - hp[l]));
  }
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 4096; ++i) rows.push_back(random_simplex(rng, 5));
  ClassMap m(64, 64, 5);
  for (std::size_t p = 0; p < rows.size(); ++p) {
    std::copy(rows[p].begin(), rows[p].end(), m.pixel(p).begin());
  }
  const MaskedProbs mp{&m, {}};
  const auto est = marginal_average(std::span(&mp, 1));
  const auto hp = oracle::mean_rows_hp(rows);
  for (std::size_t l = 0; l < 5; ++l) worst = std::max(worst, std::abs(est.pbar[l] - hp[l]));
  return finish("softmax_marginal_precision", worst, 1e-14, worst <= 1e-14,
                "softmax at large offsets and 4096-pixel marginal vs 50-digit arithmetic", t);
}

CheckResult check_forward_reference(const Options& opts) {
  Timer t;
  Rng rng(opts.seed + 6);
  double worst = 0.0;
  std::size_t count_err = 0;
  for (std::uint32_t layers = 0; layers <= 3; ++layers) {
    const Architecture arch{layers, 6, 4};
    if (parameter_count(arch) != oracle::parameter_count(layers, 6, 4)) ++count_err;
    ModelParams params = init_params(arch, opts.seed + layers);
    for (auto& v : params.values) v += uniform(rng, -0.1, 0.1);
    Image img(7, 9);
    for (auto& v : img.values()) v = static_cast<float>(uniform(rng, 0.0, 1.0));
    const ClassMap probs = predict(params, img);
    const auto ref = oracle::reference_forward(params, img);
    for (std::size_t p = 0; p < probs.pixels(); ++p) {
      for (std::size_t c = 0; c < 4; ++c) {
        worst = std::max(worst, std::abs(probs.at(p, c) - ref[p][c]));
      }
    }
  }
  const bool ok = worst <= 1e-12 && count_err == 0;
  return finish("forward_reference", worst, 1e-12, ok,
                count_err == 0 ? "0-3 hidden layers vs loop-based forward"
                               : "parameter count disagrees with per-layer count",
                t);
}

CheckResult check_objective_gradient(const Options& opts, bool wide) {
  Timer t;
  Rng rng(opts.seed + 7);
  const std::size_t classes = 5;
  const Architecture arch = wide ? Architecture{2, 22, classes} : reference_architecture(classes);
  ModelParams params = init_params(arch, opts.seed);
  // Positive biases keep every hidden unit active somewhere in the batch so
  // that no parameter block is trivially zero.
  for (const auto& lv : layer_views(arch)) {
    for (std::size_t i = 0; i < lv.out_channels; ++i) {
      params.values[lv.bias_offset + i] = uniform(rng, 0.1, 0.5);
    }
  }

  std::vector<Image> images;
  std::vector<LabelMap> labels;
  for (int i = 0; i < 4; ++i) {
    Image img(8, 8);
    for (auto& v : img.values()) v = static_cast<float>(uniform(rng, 0.0, 1.0));
    LabelMap lab(8, 8);
    for (auto& v : lab.values()) v = static_cast<ClassId>(pick(rng, 0, classes - 1));
    images.push_back(std::move(img));
    labels.push_back(std::move(lab));
  }
  // Images 2 and 3 are partial: only class 1 (resp. 2) stays visible.
  std::vector<LabelMap> given;
  std::vector<LabelMap> pseudo;
  for (int i = 2; i < 4; ++i) {
    const PartialLabelSet visible({static_cast<ClassId>(i - 1)});
    LabelMap g = labels[i];
    for (auto& v : g.values()) {
      if (!visible.contains(v)) v = kBackground;
    }
    pseudo.push_back(estimate_pseudo_labels(predict(params, images[i]), g, visible));
    given.push_back(std::move(g));
  }
  Batch batch;
  batch.full = {{&images[0], &labels[0]}, {&images[1], &labels[1]}};
  batch.partial = {{&images[2], &given[0], &pseudo[0]}, {&images[3], &given[1], &pseudo[1]}};

  const auto q = random_simplex(rng, classes, 1.0);
  DualState duals = init_duals(q);
  for (auto& v : duals.nu) v *= uniform(rng, 0.7, 1.3);
  for (auto& v : duals.mu) v *= uniform(rng, 0.7, 1.3);
  const double lambda1 = 1.0, lambda2 = 1.0;

  const auto ev = evaluate_objective(batch, params, duals, q, lambda1, lambda2, true);
  auto f = [&](std::span<const double> theta) {
    ModelParams p{arch, {theta.begin(), theta.end()}};
    return total_objective(batch, p, duals, q, lambda1, lambda2);
  };
  const auto fd = oracle::central_differences(f, params.values, 1e-5);
  double worst = 0.0;
  std::size_t tiny = 0;
  const double floor = 1e-6;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    worst = std::max(worst, oracle::relative_error(ev.grads.values[i], fd[i], floor));
    if (std::max(std::abs(fd[i]), std::abs(ev.grads.values[i])) < floor) ++tiny;
  }
  char detail[200];
  std::snprintf(detail, sizeof detail,
                "%zu parameters, 8x8 batch of 2 full + 2 partial, step 1e-5, %zu below %.0e",
                fd.size(), tiny, floor);
  return finish(wide ? "objective_gradient_wide" : "objective_gradient", worst, 1e-4,
                worst < 1e-4, detail, t);
}

CheckResult check_unbiasedness(const Options& opts) {
  Timer t;
  Rng rng(opts.seed + 8);
  const std::size_t k = 5;
  std::vector<ClassMap> probs;
  for (int m = 0; m < 4; ++m) probs.push_back(random_probs(rng, 8, 8, k));
  const auto q = random_simplex(rng, k);
  const DualState d = random_duals(rng, k);

  std::vector<MaskedProbs> all;
  for (const auto& p : probs) all.push_back({&p, {}});
  const auto full = chain_prior_grad_to_logits(all, q, d, 1.0);
  const double n_total = static_cast<double>(included_pixel_count(all));

  std::vector<std::vector<std::vector<std::uint8_t>>> masks(
      4, std::vector<std::vector<std::uint8_t>>(probs.size(), std::vector<std::uint8_t>(64, 0)));
  for (std::size_t m = 0; m < probs.size(); ++m) {
    for (std::size_t p = 0; p < 64; ++p) masks[pick(rng, 0, 3)][m][p] = 1;
  }
  std::vector<ClassMap> avg;
  for (const auto& p : probs) avg.emplace_back(p.height(), p.width(), k);
  for (int b = 0; b < 4; ++b) {
    std::vector<MaskedProbs> part;
    for (std::size_t m = 0; m < probs.size(); ++m) part.push_back({&probs[m], masks[b][m]});
    const double weight = static_cast<double>(included_pixel_count(part)) / n_total;
    const auto g = chain_prior_grad_to_logits(part, q, d, 1.0);
    for (std::size_t m = 0; m < probs.size(); ++m) {
      for (std::size_t i = 0; i < g[m].values().size(); ++i) {
        avg[m].values()[i] += weight * g[m].values()[i];
      }
    }
  }
  double worst = 0.0;
  for (std::size_t m = 0; m < probs.size(); ++m) {
    for (std::size_t i = 0; i < avg[m].values().size(); ++i) {
      worst = std::max(worst, std::abs(avg[m].values()[i] - full[m].values()[i]));
    }
  }
  return finish("unbiasedness", worst, 1e-12, worst <= 1e-12,
                "4-way random pixel partition, pixel-weighted batch average vs full set", t);
}

CheckResult check_bias_witness(const Options&) {
  Timer t;
  // Two batches with opposite class balance: the log of a batch average is
  // not the average of per-batch logs.
  const std::size_t k = 3;
  const std::vector<double> q{0.6, 0.3, 0.1};
  ClassMap a(4, 4, k), b(4, 4, k);
  for (std::size_t p = 0; p < 16; ++p) {
    const double ra[3]{0.1, 0.85, 0.05};
    const double rb[3]{0.9, 0.02, 0.08};
    std::copy(ra, ra + 3, a.pixel(p).begin());
    std::copy(rb, rb + 3, b.pixel(p).begin());
  }
  const std::vector<MaskedProbs> both{{&a, {}}, {&b, {}}};
  const auto pbar = marginal_average(both).pbar;
  const auto full = chain_pbar_grad_to_logits(both, prior_loss_direct_grad(pbar, q), 1.0);

  std::vector<std::vector<double>> avg;
  for (std::size_t m = 0; m < 2; ++m) {
    const std::vector<MaskedProbs> one{both[m]};
    const auto pb = marginal_average(one).pbar;
    const auto g = chain_pbar_grad_to_logits(one, prior_loss_direct_grad(pb, q), 1.0);
    std::vector<double> v = to_vector(g[0]);
    for (auto& x : v) x *= 0.5;
    avg.push_back(std::move(v));
  }
  double sq = 0.0;
  for (std::size_t m = 0; m < 2; ++m) {
    const auto f = to_vector(full[m]);
    for (std::size_t i = 0; i < f.size(); ++i) sq += (avg[m][i] - f[i]) * (avg[m][i] - f[i]);
  }
  const double dev = std::sqrt(sq);
  return finish("bias_witness", dev, 1e-3, dev > 1e-3,
                "direct-loss batch gradients averaged vs full-set gradient (must exceed)", t);
}

CheckResult check_kl_properties(const Options& opts) {
  Timer t;
  Rng rng(opts.seed + 9);
  double min_kl = INFINITY;
  double min_gap = INFINITY;
  double self_err = 0.0;
  double oracle_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = pick(rng, 2, 8);
    const auto q = random_simplex(rng, k);
    const auto pbar = random_simplex(rng, k);
    const double kl = kl_marginal(q, pbar);
    const double gap = prior_loss_direct(pbar, q) - prior_loss_direct(q, q);
    min_kl = std::min(min_kl, kl);
    min_gap = std::min(min_gap, gap);
    self_err = std::max({self_err, std::abs(kl_marginal(q, q)),
                         std::abs(prior_loss_direct(q, q) - prior_loss_direct(q, q))});
    const double hp = oracle::kl_marginal_hp(q, pbar);
    oracle_err = std::max({oracle_err, std::abs(kl - hp), std::abs(gap - hp)});
  }
  // p != q must give a strictly positive divergence.
  const bool ok = min_kl > 0.0 && min_gap > 0.0 && self_err <= 1e-12 && oracle_err <= 1e-12;
  char detail[200];
  std::snprintf(detail, sizeof detail,
                "min KL %.3g, min direct-loss gap %.3g, KL(q,q) %.3g, vs 50-digit %.3g", min_kl,
                min_gap, self_err, oracle_err);
  return finish("kl_properties", std::max(self_err, oracle_err), 1e-12, ok, detail, t);
}

CheckResult check_dual_dynamics(const Options& opts) {
  Timer t;
  SuiteConfig cfg = default_suite_config();
  const Suite suite = build_suite(cfg, opts.seed);
  // The frozen network is what stage one hands to stage two by default.
  TrainConfig tc;
  tc.m2 = 0;
  tc.seed = opts.seed;
  const TrainerState state = stage1_train(suite, tc);
  const auto& q = state.prior.p;

  std::vector<std::vector<double>> sample_pbar;
  std::vector<double> sample_pixels;
  for (const auto& split : suite.partial) {
    for (const auto& s : split.samples) {
      const ClassMap probs = predict(state.params, s.image());
      const MaskedProbs mp{&probs, {}};
      const auto est = marginal_average(std::span(&mp, 1));
      sample_pbar.push_back(est.pbar);
      sample_pixels.push_back(static_cast<double>(est.n_pixels));
    }
  }

  Rng rng(opts.seed + 10);
  DualState d = state.duals;
  std::vector<double> sum(q.size(), 0.0);
  double pixels = 0.0;
  double lr = 0.0;
  double initial = 0.0;
  std::vector<double> running(q.size());
  for (int step = 0; step < 2000; ++step) {
    const std::size_t i = pick(rng, 0, sample_pbar.size() - 1);
    for (std::size_t l = 0; l < q.size(); ++l) sum[l] += sample_pixels[i] * sample_pbar[i][l];
    pixels += sample_pixels[i];
    for (std::size_t l = 0; l < q.size(); ++l) running[l] = sum[l] / pixels;
    if (step == 0) {
      // Just below the stability limit 2 / (largest curvature): the small
      // classes' nu coordinates are thousands of times flatter.
      double curvature = 0.0;
      for (std::size_t l = 0; l < q.size(); ++l) {
        const double p = running[l];
        curvature = std::max({curvature, q[l] * p * p, (1.0 - q[l]) * (1.0 - p) * (1.0 - p)});
      }
      lr = 1.9 / curvature;
      initial = dual_grads(running, q, d).norm();
    }
    d = dual_ascent_step(d, opts.dual_grads(running, q, d), lr);
  }
  const double final_norm = dual_grads(running, q, d).norm();
  const DualState target = closed_form_duals(running);
  double rel = 0.0;
  for (std::size_t l = 0; l < q.size(); ++l) {
    rel = std::max(rel, std::abs(d.nu[l] - target.nu[l]) / std::abs(target.nu[l]));
    rel = std::max(rel, std::abs(d.mu[l] - target.mu[l]) / std::abs(target.mu[l]));
  }
  char detail[200];
  std::snprintf(detail, sizeof detail,
                "frozen stage-one network, 2000 ascent steps on the running marginal; grad norm %.3g at "
                "start, duals within %.3g (relative) of closed form",
                initial, rel);
  return finish("dual_dynamics", final_norm, 1e-3, final_norm < 1e-3, detail, t);
}

CheckResult check_metrics(const Options& opts) {
  Timer t;
  Rng rng(opts.seed + 11);
  double dist_err = 0.0;
  std::size_t dice_mismatch = 0;
  auto random_mask = [&](std::size_t h, std::size_t w) {
    BinaryMask m(h, w);
    const double cy = uniform(rng, 0.0, h), cx = uniform(rng, 0.0, w);
    const double ry = uniform(rng, 1.0, h / 2.0), rx = uniform(rng, 1.0, w / 2.0);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double u = (y - cy) / ry, v = (x - cx) / rx;
        const bool in = u * u + v * v <= 1.0;
        const bool flip = pick(rng, 0, 9) == 0;
        m(y, x) = static_cast<std::uint8_t>(in != flip);
      }
    }
    return m;
  };
  for (int i = 0; i < 200; ++i) {
    const std::size_t h = pick(rng, 1, 14), w = pick(rng, 1, 14);
    const BinaryMask a = random_mask(h, w), b = random_mask(h, w);
    if (dice(a, b) != oracle::dice_sets(a, b)) ++dice_mismatch;
    const bool ea = std::none_of(a.values().begin(), a.values().end(), [](auto v) { return v; });
    const bool eb = std::none_of(b.values().begin(), b.values().end(), [](auto v) { return v; });
    if (ea || eb) continue;
    const auto lib = surface_distances(a, b);
    const auto [msd, hd] = oracle::surface_distances_brute(a, b);
    dist_err = std::max({dist_err, std::abs(lib.mean - msd), std::abs(lib.hausdorff - hd)});
  }

  // Hand fixtures: |Z| = |Y| = 4 with two shared pixels; two single pixels
  // a 3-4-5 triangle apart.
  BinaryMask z(4, 4), y(4, 4);
  z(0, 0) = z(0, 1) = z(0, 2) = z(0, 3) = 1;
  y(0, 2) = y(0, 3) = y(1, 2) = y(1, 3) = 1;
  if (dice(z, y) != 0.5) ++dice_mismatch;
  BinaryMask p1(6, 6), p2(6, 6);
  p1(0, 0) = 1;
  p2(3, 4) = 1;
  const auto sd = surface_distances(p1, p2);
  dist_err = std::max({dist_err, std::abs(sd.mean - 5.0), std::abs(sd.hausdorff - 5.0)});
  BinaryMask empty(3, 3);
  if (dice(empty, empty) != 1.0) ++dice_mismatch;

  const bool ok = dice_mismatch == 0 && dist_err <= 1e-12;
  return finish("metrics", dist_err, 1e-12, ok,
                dice_mismatch == 0 ? "dice exact, distances vs all-pairs brute force"
                                   : "dice differs from set-count oracle",
                t);
}

std::vector<CheckResult> run_all(const Options& opts) {
  std::vector<CheckResult> out;
  out.push_back(check_neglog_closed_form(opts));
  out.push_back(check_neglog_numeric(opts));
  out.push_back(check_saddle_value(opts));
  out.push_back(check_saddle_gradient(opts));
  out.push_back(check_dual_grads_fd(opts));
  out.push_back(check_dual_stationarity(opts));
  out.push_back(check_prior_chain_fd(opts));
  out.push_back(check_softmax_precision(opts));
  out.push_back(check_forward_reference(opts));
  out.push_back(check_objective_gradient(opts, false));
  out.push_back(check_unbiasedness(opts));
  out.push_back(check_bias_witness(opts));
  out.push_back(check_kl_properties(opts));
  out.push_back(check_dual_dynamics(opts));
  out.push_back(check_metrics(opts));
  if (opts.level == Level::kFull) out.push_back(check_objective_gradient(opts, true));
  return out;
}

nlohmann::json to_json(const std::vector<CheckResult>& results, Level level) {
  nlohmann::json checks = nlohmann::json::array();
  bool all = true;
  for (const auto& r : results) {
    all = all && r.passed;
    checks.push_back({{"name", r.name},
                      {"passed", r.passed},
                      {"measured", r.measured},
                      {"tolerance", r.tolerance},
                      {"detail", r.detail},
                      {"seconds", r.seconds}});
  }
  return {{"level", level == Level::kFast ? "fast" : "full"},
          {"passed", all},
          {"checks", std::move(checks)}};
}

std::string format_line(const CheckResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-4s %-28s measured %-10.3g tol %-8.1g %6.2fs  %s",
                r.passed ? "PASS" : "FAIL", r.name.c_str(), r.measured, r.tolerance, r.seconds,
                r.detail.c_str());
  return buf;
}

}  // namespace pann::verify
