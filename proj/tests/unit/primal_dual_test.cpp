#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "oracles.hpp"
#include "pann/error.hpp"
#include "pann/losses.hpp"
#include "pann/primal_dual.hpp"

namespace pann {
namespace {

using testing::Rng;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kIo;
}

TEST(NeglogIdentity, ClosedFormAndNumericAgree) {
  for (double alpha : {0.01, 0.1, 0.37, 0.5, 0.9, 1.0}) {
    const auto r = neglog_identity_max(alpha);
    EXPECT_NEAR(r.value, -std::log(alpha), 1e-12);
    EXPECT_NEAR(r.beta_star, -1.0 / alpha, 1e-12);
    EXPECT_NEAR(oracle::neglog_numeric(alpha), r.value, 1e-6);
  }
}

TEST(NeglogIdentity, IsAnUpperEnvelope) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double alpha = testing::uniform(rng, 0.01, 1.0);
    const double beta = -testing::uniform(rng, 1e-3, 200.0);
    EXPECT_LE(alpha * beta + 1.0 + std::log(-beta), -std::log(alpha) + 1e-12);
  }
}

TEST(Duals, ClosedFormAndInit) {
  const std::vector<double> q{0.5, 0.25, 0.25};
  const auto d = init_duals(q);
  EXPECT_EQ(d.size(), 3u);
  EXPECT_DOUBLE_EQ(d.nu[0], -2.0);
  EXPECT_DOUBLE_EQ(d.nu[1], -4.0);
  EXPECT_DOUBLE_EQ(d.mu[0], -2.0);
  EXPECT_NEAR(d.mu[1], -4.0 / 3.0, 1e-15);
  EXPECT_EQ(d, closed_form_duals(q));
}

TEST(Duals, ProjectionKeepsEntriesInsideTheBox) {
  DualState d{{0.5, -1e-9, -1e9, -3.0}, {-0.0, -2.0, 1e3, -1e7}};
  const auto p = project_duals(d);
  for (std::size_t l = 0; l < p.size(); ++l) {
    for (double v : {p.nu[l], p.mu[l]}) {
      EXPECT_LE(v, -kDualEpsilon);
      EXPECT_GE(v, -1.0 / kDualEpsilon);
    }
  }
  EXPECT_EQ(p.nu[3], -3.0);
  EXPECT_EQ(p.mu[1], -2.0);
  // a marginal of exactly zero still yields legal duals
  const std::vector<double> degenerate{1.0, 0.0};
  EXPECT_NO_THROW(closed_form_duals(degenerate).validate());
}

TEST(Duals, ValidateRejectsIllegalStates) {
  EXPECT_EQ(code_of([] { DualState{{-1.0, 0.0}, {-1.0, -1.0}}.validate(); }),
            ErrorCode::kIllegalDual);
  EXPECT_EQ(code_of([] { DualState{{-1.0}, {-1.0, -1.0}}.validate(); }),
            ErrorCode::kIllegalDual);
  EXPECT_EQ(code_of([] { DualState{{-1.0, NAN}, {-1.0, -1.0}}.validate(); }),
            ErrorCode::kIllegalDual);
}

TEST(Saddle, EqualsDirectLossAtClosedForm) {
  Rng rng(2);
  for (int i = 0; i < 300; ++i) {
    const std::size_t k = testing::pick(rng, 2, 8);
    const auto q = testing::simplex(rng, k);
    const auto p = testing::simplex(rng, k);
    EXPECT_NEAR(saddle_objective(p, q, closed_form_duals(p)), oracle::prior_loss_hp(p, q), 1e-9);
  }
}

TEST(Saddle, ClosedFormIsTheMaximumOverDuals) {
  Rng rng(3);
  const auto q = testing::simplex(rng, 4);
  const auto p = testing::simplex(rng, 4);
  const double best = saddle_objective(p, q, closed_form_duals(p));
  for (int i = 0; i < 200; ++i) {
    auto d = closed_form_duals(p);
    for (auto& v : d.nu) v *= testing::uniform(rng, 0.2, 5.0);
    for (auto& v : d.mu) v *= testing::uniform(rng, 0.2, 5.0);
    EXPECT_LE(saddle_objective(p, q, d), best + 1e-12);
  }
}

TEST(Saddle, LinearInMarginal) {
  Rng rng(4);
  const auto q = testing::simplex(rng, 5);
  const auto a = testing::simplex(rng, 5);
  const auto b = testing::simplex(rng, 5);
  const auto d = init_duals(testing::simplex(rng, 5));
  std::vector<double> mid(5);
  for (std::size_t l = 0; l < 5; ++l) mid[l] = 0.3 * a[l] + 0.7 * b[l];
  EXPECT_NEAR(saddle_objective(mid, q, d),
              0.3 * saddle_objective(a, q, d) + 0.7 * saddle_objective(b, q, d), 1e-12);
}

TEST(DualGrads, Examples) {
  const std::vector<double> q{0.5, 0.5};
  const std::vector<double> p{0.25, 0.75};
  const DualState d{{-2.0, -2.0}, {-2.0, -2.0}};
  const auto g = dual_grads(p, q, d);
  EXPECT_DOUBLE_EQ(g.dnu[0], 0.5 * (0.25 - 0.5));
  EXPECT_DOUBLE_EQ(g.dmu[0], 0.5 * (0.75 - 0.5));
  EXPECT_DOUBLE_EQ(g.norm(), std::sqrt(4 * 0.125 * 0.125));
  const auto zero = dual_grads(p, q, closed_form_duals(p));
  EXPECT_LT(zero.norm(), 1e-15);
}

TEST(DualGrads, MatchFiniteDifferences) {
  Rng rng(5);
  const auto q = testing::simplex(rng, 4);
  const auto p = testing::simplex(rng, 4);
  auto d = init_duals(testing::simplex(rng, 4));
  const auto g = dual_grads(p, q, d);
  std::vector<double> x(d.nu);
  x.insert(x.end(), d.mu.begin(), d.mu.end());
  auto f = [&](std::span<const double> v) {
    DualState s{{v.begin(), v.begin() + 4}, {v.begin() + 4, v.end()}};
    return saddle_objective(p, q, s);
  };
  const auto fd = oracle::central_differences(f, x, 1e-6);
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_LT(oracle::relative_error(g.dnu[l], fd[l], 1e-6), 1e-6);
    EXPECT_LT(oracle::relative_error(g.dmu[l], fd[4 + l], 1e-6), 1e-6);
  }
}

TEST(PrimalGrad, MatchesDirectGradientAtClosedForm) {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const auto q = testing::simplex(rng, 5);
    const auto p = testing::simplex(rng, 5);
    const auto g = primal_grad_wrt_pbar(q, closed_form_duals(p));
    for (std::size_t l = 0; l < 5; ++l) {
      const double direct = -q[l] / p[l] + (1 - q[l]) / (1 - p[l]);
      EXPECT_LT(oracle::relative_error(g[l], direct, 1e-10), 1e-10);
    }
  }
}

TEST(PrimalGrad, VanishesAtTheInitialDuals) {
  const std::vector<double> q{0.7, 0.2, 0.1};
  for (double v : primal_grad_wrt_pbar(q, init_duals(q))) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(DualAscent, StepMovesAlongGradientAndProjects) {
  const DualState d{{-2.0}, {-3.0}};
  const DualGrads g{{0.5}, {-1.0}};
  const auto s = dual_ascent_step(d, g, 0.1);
  EXPECT_DOUBLE_EQ(s.nu[0], -1.95);
  EXPECT_DOUBLE_EQ(s.mu[0], -3.1);
  const auto clipped = dual_ascent_step(d, DualGrads{{100.0}, {0.0}}, 1.0);
  EXPECT_EQ(clipped.nu[0], -kDualEpsilon);
  EXPECT_EQ(code_of([&] { dual_ascent_step(d, DualGrads{{NAN}, {0.0}}, 1.0); }),
            ErrorCode::kDivergedDuals);
}

TEST(DualAscent, ConvergesToClosedFormForFixedMarginal) {
  const std::vector<double> q{0.6, 0.3, 0.1};
  const std::vector<double> p{0.5, 0.35, 0.15};
  auto d = init_duals(q);
  // curvature of the nu block is q p^2; keep the step inside 2/curvature
  for (int i = 0; i < 5000; ++i) d = dual_ascent_step(d, dual_grads(p, q, d), 3.0);
  const auto target = closed_form_duals(p);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_NEAR(d.nu[l], target.nu[l], 1e-6 * std::abs(target.nu[l]));
    EXPECT_NEAR(d.mu[l], target.mu[l], 1e-6 * std::abs(target.mu[l]));
  }
}

TEST(Chain, MatchesExplicitSoftmaxJacobian) {
  Rng rng(7);
  const ClassMap probs = testing::prob_map(rng, 3, 3, 4);
  const auto mask = testing::mask(rng, 3, 3, 0.6);
  std::vector<std::uint8_t> m(mask.values().begin(), mask.values().end());
  m[0] = 1;
  const MaskedProbs mp{&probs, m};
  const std::vector<double> g{0.3, -1.0, 0.25, 2.0};
  const auto out = chain_pbar_grad_to_logits(std::span(&mp, 1), g, 2.0);
  const double n = static_cast<double>(included_pixel_count(std::span(&mp, 1)));
  for (std::size_t p = 0; p < 9; ++p) {
    for (std::size_t j = 0; j < 4; ++j) {
      double expect = 0.0;
      if (m[p]) {
        for (std::size_t k = 0; k < 4; ++k) {
          const double jac = probs.at(p, k) * ((k == j ? 1.0 : 0.0) - probs.at(p, j));
          expect += jac * g[k];
        }
        expect *= 2.0 / n;
      }
      EXPECT_NEAR(out[0].at(p, j), expect, 1e-15);
    }
  }
}

TEST(Chain, PriorGradientSpreadsOverMaps) {
  Rng rng(8);
  const ClassMap a = testing::prob_map(rng, 2, 2, 3);
  const ClassMap b = testing::prob_map(rng, 2, 3, 3);
  const std::vector<MaskedProbs> maps{{&a, {}}, {&b, {}}};
  const auto q = testing::simplex(rng, 3);
  DualState d = init_duals(q);
  d.nu[1] *= 1.5;
  const auto out = chain_prior_grad_to_logits(maps, q, d, 0.5);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[1].pixels(), 6u);
  const auto direct = chain_pbar_grad_to_logits(maps, primal_grad_wrt_pbar(q, d), 0.5);
  EXPECT_EQ(out, direct);
  for (std::size_t p = 0; p < 4; ++p) {
    const auto gp = out[0].pixel(p);
    EXPECT_NEAR(gp[0] + gp[1] + gp[2], 0.0, 1e-15);
  }
}

}  // namespace
}  // namespace pann
