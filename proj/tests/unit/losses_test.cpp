#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "generators.hpp"
#include "oracles.hpp"
#include "pann/error.hpp"
#include "pann/losses.hpp"
#include "pann/primal_dual.hpp"

namespace pann {
namespace {

using testing::Rng;

ClassMap from_rows(std::size_t h, std::size_t w, const std::vector<std::vector<double>>& rows) {
  ClassMap m(h, w, rows.front().size());
  for (std::size_t p = 0; p < rows.size(); ++p) {
    std::copy(rows[p].begin(), rows[p].end(), m.pixel(p).begin());
  }
  return m;
}

std::vector<std::vector<double>> rows_of(const ClassMap& m) {
  std::vector<std::vector<double>> out;
  for (std::size_t p = 0; p < m.pixels(); ++p) out.emplace_back(m.pixel(p).begin(), m.pixel(p).end());
  return out;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kIo;
}

TEST(MarginalAverage, Examples) {
  const ClassMap one = from_rows(1, 1, {{0.2, 0.8}});
  const MaskedProbs a{&one, {}};
  const auto m = marginal_average(std::span(&a, 1));
  EXPECT_EQ(m.pbar, (std::vector<double>{0.2, 0.8}));
  EXPECT_EQ(m.n_pixels, 1u);

  const ClassMap two = from_rows(1, 2, {{1.0, 0.0}, {0.0, 1.0}});
  const MaskedProbs b{&two, {}};
  EXPECT_EQ(marginal_average(std::span(&b, 1)).pbar, (std::vector<double>{0.5, 0.5}));
}

TEST(MarginalAverage, MaskedPixelsAreExcluded) {
  const ClassMap m = from_rows(1, 3, {{1.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}});
  const std::vector<std::uint8_t> mask{1, 0, 1};
  const MaskedProbs mp{&m, mask};
  const auto est = marginal_average(std::span(&mp, 1));
  EXPECT_EQ(est.n_pixels, 2u);
  EXPECT_EQ(est.pbar, (std::vector<double>{0.5, 0.5}));
}

TEST(MarginalAverage, MatchesHighPrecisionMean) {
  Rng rng(1);
  const ClassMap m = testing::prob_map(rng, 10, 10, 5);
  const MaskedProbs mp{&m, {}};
  const auto est = marginal_average(std::span(&mp, 1));
  const auto ref = oracle::mean_rows_hp(rows_of(m));
  double sum = 0.0;
  for (std::size_t l = 0; l < 5; ++l) {
    EXPECT_NEAR(est.pbar[l], ref[l], 1e-14);
    sum += est.pbar[l];
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(MarginalAverage, EmptyIsAnError) {
  const ClassMap m = from_rows(1, 1, {{0.5, 0.5}});
  const std::vector<std::uint8_t> none{0};
  const MaskedProbs mp{&m, none};
  EXPECT_EQ(code_of([&] { marginal_average(std::span(&mp, 1)); }), ErrorCode::kEmptyMarginal);
}

TEST(LossFull, Examples) {
  const ClassMap perfect = from_rows(1, 2, {{1.0, 0.0}, {0.0, 1.0}});
  LabelMap lab(1, 2);
  lab[1] = 1;
  EXPECT_EQ(loss_full(perfect, lab).value, 0.0);
  const ClassMap half = from_rows(1, 1, {{0.5, 0.5}});
  EXPECT_NEAR(loss_full(half, LabelMap(1, 1)).value, std::numbers::ln2, 1e-15);
}

TEST(LossFull, MatchesNaiveReferenceAndGradientSumsToZero) {
  Rng rng(2);
  const ClassMap probs = testing::prob_map(rng, 8, 8, 5);
  const LabelMap lab = testing::labels(rng, 8, 8, 5);
  const auto r = loss_full(probs, lab);
  std::vector<std::size_t> targets(lab.values().begin(), lab.values().end());
  EXPECT_NEAR(r.value, oracle::mean_nll(rows_of(probs), targets), 1e-12);
  for (std::size_t p = 0; p < probs.pixels(); ++p) {
    const auto g = r.grad.pixel(p);
    EXPECT_NEAR(std::accumulate(g.begin(), g.end(), 0.0), 0.0, 1e-15);
    for (std::size_t c = 0; c < 5; ++c) {
      const double expect = (probs.at(p, c) - (lab[p] == c ? 1.0 : 0.0)) / 64.0;
      EXPECT_NEAR(g[c], expect, 1e-16);
    }
  }
}

TEST(LossFull, GradientMatchesFiniteDifferencesInLogits) {
  Rng rng(3);
  ClassMap logits(3, 3, 4);
  for (auto& v : logits.values()) v = testing::uniform(rng, -2, 2);
  const LabelMap lab = testing::labels(rng, 3, 3, 4);
  auto probs_of = [](const ClassMap& z) {
    ClassMap p = z;
    for (std::size_t px = 0; px < p.pixels(); ++px) softmax_stable_inplace(p.pixel(px));
    return p;
  };
  const auto r = loss_full(probs_of(logits), lab);
  auto f = [&](std::span<const double> x) {
    ClassMap z(3, 3, 4);
    std::copy(x.begin(), x.end(), z.values().begin());
    return loss_full(probs_of(z), lab).value;
  };
  const std::vector<double> x(logits.values().begin(), logits.values().end());
  const auto fd = oracle::central_differences(f, x, 1e-5);
  for (std::size_t i = 0; i < fd.size(); ++i) {
    EXPECT_LT(oracle::relative_error(r.grad.values()[i], fd[i], 1e-8), 1e-4);
  }
}

TEST(LossFull, LabelOutOfRange) {
  const ClassMap half = from_rows(1, 1, {{0.5, 0.5}});
  LabelMap lab(1, 1);
  lab[0] = 2;
  EXPECT_EQ(code_of([&] { loss_full(half, lab); }), ErrorCode::kLabelRange);
}

TEST(PseudoLabels, RestrictedAwayFromVisible) {
  const ClassMap probs = from_rows(1, 2, {{0.1, 0.6, 0.2, 0.1}, {0.1, 0.6, 0.2, 0.1}});
  LabelMap given(1, 2);
  given[1] = 1;
  const LabelMap pseudo = estimate_pseudo_labels(probs, given, PartialLabelSet({1}));
  EXPECT_EQ(pseudo[0], 2);
  EXPECT_EQ(pseudo[1], kNoPseudo);
}

TEST(PseudoLabels, UniformTiesGoToSmallestId) {
  const ClassMap probs = from_rows(1, 1, {{0.25, 0.25, 0.25, 0.25}});
  EXPECT_EQ(estimate_pseudo_labels(probs, LabelMap(1, 1), PartialLabelSet({2}))[0], 0);
  const ClassMap no_bg = from_rows(1, 1, {{0.1, 0.3, 0.3, 0.3}});
  EXPECT_EQ(estimate_pseudo_labels(no_bg, LabelMap(1, 1), PartialLabelSet({1}))[0], 2);
}

TEST(PseudoLabels, MatchesBruteForceRestrictedArgmax) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const ClassMap probs = testing::prob_map(rng, 6, 6, 5);
    const PartialLabelSet visible({2});
    const LabelMap pseudo = estimate_pseudo_labels(probs, LabelMap(6, 6), visible);
    for (std::size_t p = 0; p < probs.pixels(); ++p) {
      EXPECT_EQ(pseudo[p], oracle::argmax_over(probs.pixel(p), {0, 1, 3, 4}));
      EXPECT_FALSE(visible.contains(pseudo[p]));
    }
  }
}

TEST(PseudoLabels, UnrestrictedUsesEveryClass) {
  const ClassMap probs = from_rows(1, 1, {{0.1, 0.6, 0.3}});
  EXPECT_EQ(estimate_pseudo_labels_unrestricted(probs, LabelMap(1, 1))[0], 1);
}

TEST(LossPartial, ReducesToLossFullWhenEverythingLabeled) {
  Rng rng(5);
  const ClassMap probs = testing::prob_map(rng, 4, 4, 3);
  LabelMap given(4, 4, 1);
  given[3] = 2;
  const LabelMap pseudo(4, 4, kNoPseudo);
  const auto a = loss_partial(probs, given, pseudo);
  const auto b = loss_full(probs, given);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(LossPartial, SelfConsistentOneHotIsZero) {
  const ClassMap probs = from_rows(1, 2, {{0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}});
  const LabelMap given(1, 2);
  const LabelMap pseudo = estimate_pseudo_labels_unrestricted(probs, given);
  EXPECT_EQ(loss_partial(probs, given, pseudo).value, 0.0);
}

TEST(LossPartial, MixedCaseMatchesHandExpansion) {
  Rng rng(6);
  const ClassMap probs = testing::prob_map(rng, 4, 4, 4);
  LabelMap given(4, 4);
  for (std::size_t p = 0; p < 16; p += 3) given[p] = 3;
  const LabelMap pseudo = estimate_pseudo_labels(probs, given, PartialLabelSet({3}));
  double labeled = 0.0, unlabeled = 0.0;
  for (std::size_t p = 0; p < 16; ++p) {
    if (given[p] != 0) {
      labeled -= std::log(probs.at(p, given[p]));
    } else {
      unlabeled -= std::log(probs.at(p, oracle::argmax_over(probs.pixel(p), {0, 1, 2})));
    }
  }
  EXPECT_NEAR(loss_partial(probs, given, pseudo).value, (labeled + unlabeled) / 16.0, 1e-12);
}

TEST(LossPartial, CoverageMismatch) {
  const ClassMap probs = from_rows(1, 2, {{0.5, 0.5}, {0.5, 0.5}});
  LabelMap given(1, 2);
  given[0] = 1;
  LabelMap pseudo(1, 2, 0);  // covers a labeled pixel
  EXPECT_EQ(code_of([&] { loss_partial(probs, given, pseudo); }), ErrorCode::kPseudoCoverage);
  EXPECT_EQ(code_of([&] { loss_partial(probs, given, LabelMap(1, 3)); }),
            ErrorCode::kPseudoCoverage);
}

TEST(PriorLoss, Examples) {
  const std::vector<double> half{0.5, 0.5};
  EXPECT_NEAR(prior_loss_direct(half, half), 2.0 * std::numbers::ln2, 1e-15);
  const std::vector<double> q{1.0, 0.0};
  double prev = INFINITY;
  for (double d : {1e-1, 1e-3, 1e-6}) {
    const std::vector<double> p{1.0 - d, d};
    const double v = prior_loss_direct(p, q);
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-5);
}

TEST(PriorLoss, MatchesHighPrecision) {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    const auto q = testing::simplex(rng, 5);
    const auto p = testing::simplex(rng, 5);
    EXPECT_NEAR(prior_loss_direct(p, q), oracle::prior_loss_hp(p, q), 1e-12);
  }
}

TEST(PriorLoss, ClampsDegenerateMarginal) {
  const auto before = degenerate_marginal_count();
  const std::vector<double> p{1.0, 0.0};
  const std::vector<double> q{0.5, 0.5};
  const double v = prior_loss_direct(p, q);
  EXPECT_TRUE(std::isfinite(v));
  // 1 - floor rounds in double; its complement is off by about 1e-4 relative
  EXPECT_NEAR(v, -std::log(kProbFloor), 1e-4);
  EXPECT_GT(degenerate_marginal_count(), before);
}

TEST(PriorLoss, DirectGradientMatchesFiniteDifferences) {
  Rng rng(8);
  const auto q = testing::simplex(rng, 4);
  const auto p = testing::simplex(rng, 4);
  const auto g = prior_loss_direct_grad(p, q);
  auto f = [&](std::span<const double> x) { return prior_loss_direct(x, q); };
  const auto fd = oracle::central_differences(f, p, 1e-7);
  for (std::size_t l = 0; l < 4; ++l) EXPECT_NEAR(g[l], fd[l], 1e-6);
}

TEST(KlMarginal, Examples) {
  const std::vector<double> q{0.5, 0.5};
  EXPECT_EQ(kl_marginal(q, q), 0.0);
  const std::vector<double> p{0.25, 0.75};
  EXPECT_NEAR(kl_marginal(q, p), oracle::kl_marginal_hp(q, p), 1e-15);
  // Two binary KLs of 0.5 vs 0.25: 2 * (0.5 ln 2 + 0.5 ln(2/3))
  EXPECT_NEAR(kl_marginal(q, p), std::log(4.0 / 3.0), 1e-15);
}

TEST(KlMarginal, NonnegativeAndEqualsLossGap) {
  Rng rng(9);
  for (int i = 0; i < 500; ++i) {
    const std::size_t k = testing::pick(rng, 2, 8);
    const auto q = testing::simplex(rng, k);
    const auto p = testing::simplex(rng, k);
    const double kl = kl_marginal(q, p);
    EXPECT_GE(kl, 0.0);
    EXPECT_NEAR(kl, prior_loss_direct(p, q) - prior_loss_direct(q, q), 1e-12);
  }
}

class ObjectiveTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(10);
    params = init_params(reference_architecture(5), 10);
    for (int i = 0; i < 2; ++i) {
      images.push_back(testing::image(rng, 6, 6));
      labels.push_back(testing::labels(rng, 6, 6, 5));
    }
    given = labels[1];
    for (auto& v : given.values()) {
      if (v != 2) v = 0;
    }
    pseudo = estimate_pseudo_labels(predict(params, images[1]), given, PartialLabelSet({2}));
    q = testing::simplex(rng, 5, 0.5);
    duals = init_duals(q);
  }
  ModelParams params;
  std::vector<Image> images;
  std::vector<LabelMap> labels;
  LabelMap given, pseudo;
  std::vector<double> q;
  DualState duals;
};

TEST_F(ObjectiveTest, StageOneReducesToLossFull) {
  Batch b;
  b.full = {{&images[0], &labels[0]}};
  b.partial = {{&images[1], &given, &pseudo}};
  const double v = total_objective(b, params, duals, q, 0.0, 0.0);
  EXPECT_EQ(v, loss_full(predict(params, images[0]), labels[0]).value);
}

TEST_F(ObjectiveTest, ClosedFormDualsReproduceDirectLoss) {
  Batch b;
  b.full = {{&images[0], &labels[0]}};
  b.partial = {{&images[1], &given, &pseudo}};
  const auto probs = predict(params, images[1]);
  const MaskedProbs mp{&probs, {}};
  const auto pbar = marginal_average(std::span(&mp, 1)).pbar;
  const auto ev = evaluate_objective(b, params, closed_form_duals(pbar), q, 1.0, 1.0, false);
  EXPECT_NEAR(ev.terms.jc_saddle, prior_loss_direct(pbar, q), 1e-9);
  EXPECT_NEAR(ev.terms.jc_direct, prior_loss_direct(pbar, q), 1e-12);
}

TEST_F(ObjectiveTest, EmptyPartialBatchContributesNothing) {
  Batch b;
  b.full = {{&images[0], &labels[0]}};
  const auto ev = evaluate_objective(b, params, duals, q, 1.0, 1.0, true);
  EXPECT_EQ(ev.terms.j_partial, 0.0);
  EXPECT_EQ(ev.terms.jc_saddle, 0.0);
  EXPECT_EQ(ev.terms.total, ev.terms.j_full);
  EXPECT_TRUE(ev.marginal.pbar.empty());
}

TEST_F(ObjectiveTest, TotalCombinesTerms) {
  Batch b;
  b.full = {{&images[0], &labels[0]}};
  b.partial = {{&images[1], &given, &pseudo}};
  const auto ev = evaluate_objective(b, params, duals, q, 0.7, 0.3, true);
  EXPECT_NEAR(ev.terms.total, ev.terms.j_full + 0.7 * ev.terms.j_partial + 0.3 * ev.terms.jc_saddle,
              1e-14);
  EXPECT_EQ(ev.grads.values.size(), params.values.size());
}

}  // namespace
}  // namespace pann
