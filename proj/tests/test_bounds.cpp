#include <gtest/gtest.h>

#include "mulann/bounds.hpp"

using namespace mulann::bounds;

namespace {

Distribution dist(std::vector<std::pair<std::vector<double>, int>> pts) {
  Distribution d;
  for (auto& [x, y] : pts) d.points.push_back({x, y, 1.0 / static_cast<double>(pts.size())});
  return d;
}

DiscreteInstance instance(std::vector<Distribution> domains, std::vector<std::size_t> m, std::vector<double> alpha,
                          double delta = 0.05) {
  DiscreteInstance inst;
  inst.domains = std::move(domains);
  inst.H = threshold_class(inst.domains);
  inst.sample_sizes = std::move(m);
  inst.alpha = std::move(alpha);
  inst.delta = delta;
  return inst;
}

const BoundReport& row(const std::vector<BoundReport>& rows, const std::string& id, int domain = -1) {
  for (const auto& r : rows)
    if (r.bound == id && r.domain == domain) return r;
  throw std::out_of_range("no row " + id);
}

// Independent enumeration oracles.
double oracle_risk(const Threshold& h, const Distribution& D) {
  double s = 0;
  for (const auto& p : D.points) s += p.w * static_cast<double>(((p.x[h.axis] > h.t) ^ h.complement) != (p.y == 1));
  return s;
}

double oracle_dH(const Distribution& a, const Distribution& b, const HypothesisClass& H) {
  double best = 0;
  for (const auto& h : H.members) {
    double pa = 0, pb = 0;
    for (const auto& p : a.points) pa += h(p.x) * p.w;
    for (const auto& p : b.points) pb += h(p.x) * p.w;
    best = std::max(best, std::abs(pa - pb));
  }
  return 2 * best;
}

double oracle_dHdH(const Distribution& a, const Distribution& b, const HypothesisClass& H) {
  double best = 0;
  for (const auto& h : H.members)
    for (const auto& g : H.members) {
      double pa = 0, pb = 0;
      for (const auto& p : a.points) pa += (h(p.x) != g(p.x)) * p.w;
      for (const auto& p : b.points) pb += (h(p.x) != g(p.x)) * p.w;
      best = std::max(best, std::abs(pa - pb));
    }
  return 2 * best;
}

FuzzSpec small_fuzz(std::size_t instances, std::uint64_t seed, std::size_t dims = 1) {
  FuzzSpec s;
  s.instances = instances;
  s.seed = seed;
  s.dims = dims;
  return s;
}

// ---- exact quantities ----

TEST(ExactRisk, TrueLabelingAndComplement) {
  const Distribution D = dist({{{0}, 0}, {{1}, 0}, {{2}, 1}, {{3}, 1}});
  const Threshold h{0, 1.5, false}, not_h{0, 1.5, true};
  EXPECT_EQ(exact_risk(h, D), 0.0);
  EXPECT_EQ(exact_risk(not_h, D), 1.0);
}

TEST(ExactRisk, MatchesWeightedCount) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto inst = random_instance(small_fuzz(1, 0, 1 + s % 3), s);
    for (const auto& D : inst.domains)
      for (const auto& h : inst.H.members) EXPECT_NEAR(exact_risk(h, D), oracle_risk(h, D), 1e-15);
  }
}

TEST(HDivergence, Examples) {
  const Distribution A = dist({{{0}, 0}, {{3}, 1}}), B = dist({{{0}, 1}, {{3}, 0}});
  EXPECT_EQ(exact_h_divergence(A, B, threshold_class({A, B})), 0.0);
  const Distribution at0 = dist({{{0}, 0}}), at1 = dist({{{1}, 0}});
  HypothesisClass H;
  H.members = {{0, 0.5, false}, {0, 0.5, true}};
  EXPECT_EQ(exact_h_divergence(at0, at1, H), 2.0);
  EXPECT_EQ(exact_h_divergence(at0, at1, threshold_class({at0, at1})), 2.0);
}

TEST(HDivergence, MatchesEnumerationAndIsSymmetric) {
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto inst = random_instance(small_fuzz(1, 0, 1 + s % 2), s);
    for (std::size_t i = 0; i < inst.n(); ++i)
      for (std::size_t j = 0; j < inst.n(); ++j) {
        const auto& a = inst.domains[i];
        const auto& b = inst.domains[j];
        const double dh = exact_h_divergence(a, b, inst.H), dhdh = exact_hdh_divergence(a, b, inst.H);
        EXPECT_NEAR(dh, oracle_dH(a, b, inst.H), 1e-15);
        EXPECT_NEAR(dhdh, oracle_dHdH(a, b, inst.H), 1e-15);
        EXPECT_EQ(dh, exact_h_divergence(b, a, inst.H));
        EXPECT_EQ(dhdh, exact_hdh_divergence(b, a, inst.H));
        for (double v : {dh, dhdh}) {
          EXPECT_GE(v, 0.0);
          EXPECT_LE(v, 2.0 + 1e-12);
        }
        // The grid includes both constant hypotheses, so H is contained in its
        // symmetric-difference class.
        EXPECT_GE(dhdh, dh - 1e-15);
      }
  }
}

TEST(HdHDivergence, IdenticalAndComplementPairClass) {
  const Distribution A = dist({{{0}, 0}, {{2}, 1}, {{5}, 1}}), B = dist({{{1}, 0}, {{7}, 0}});
  EXPECT_EQ(exact_hdh_divergence(A, A, threshold_class({A})), 0.0);
  // {h, not h}: every pair either always agrees or always disagrees, so the
  // symmetric-difference class holds only constants and cannot separate A, B.
  HypothesisClass H;
  H.members = {{0, 1.5, false}, {0, 1.5, true}};
  EXPECT_NEAR(exact_h_divergence(A, B, H), 2.0 * std::abs(2.0 / 3.0 - 0.5), 1e-15);
  EXPECT_EQ(exact_hdh_divergence(A, B, H), 0.0);
}

TEST(PairwiseTerms, IdenticalDomains) {
  const Distribution D = dist({{{0}, 0}, {{1}, 1}, {{2}, 0}, {{3}, 1}});
  const auto inst = instance({D, D, D}, {10, 10, 10}, {0.2, 0.3, 0.5});
  const auto T = pairwise_terms(inst);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_DOUBLE_EQ(T.beta[i][j], 2.0 * T.eps_star[i]);
      EXPECT_EQ(T.Delta[i][j], 0.0);
      EXPECT_EQ(T.dH[i][j], 0.0);
      EXPECT_EQ(T.dHdH[i][j], 0.0);
    }
  EXPECT_EQ(T.h_star[0], T.h_star[2]);
}

TEST(PairwiseTerms, SharedPerfectHypothesisGivesZeroBeta) {
  const Distribution A = dist({{{0}, 0}, {{4}, 1}}), B = dist({{{1}, 0}, {{6}, 1}, {{9}, 1}});
  const auto T = pairwise_terms(instance({A, B}, {5, 5}, {0.5, 0.5}));
  EXPECT_EQ(T.beta[0][1], 0.0);
  EXPECT_EQ(T.eps_star[0], 0.0);
  EXPECT_EQ(T.beta_all, 0.0);
}

TEST(PairwiseTerms, MatchesEnumeration) {
  for (std::uint64_t s = 100; s < 140; ++s) {
    const auto inst = random_instance(small_fuzz(1, 0), s);
    const auto T = pairwise_terms(inst);
    const std::size_t K = inst.H.size();
    for (std::size_t i = 0; i < inst.n(); ++i) {
      double best = 2;
      std::size_t arg = 0;
      for (std::size_t k = 0; k < K; ++k) {
        const double r = oracle_risk(inst.H.members[k], inst.domains[i]);
        if (r < best) best = r, arg = k;
      }
      EXPECT_NEAR(T.eps_star[i], best, 1e-15);
      EXPECT_EQ(T.h_star[i], arg);
      for (std::size_t j = 0; j < inst.n(); ++j) {
        double b = 2;
        for (const auto& h : inst.H.members)
          b = std::min(b, oracle_risk(h, inst.domains[i]) + oracle_risk(h, inst.domains[j]));
        EXPECT_NEAR(T.beta[i][j], b, 1e-14);
        const auto& hi = inst.H.members[T.h_star[i]];
        const auto& hj = inst.H.members[T.h_star[j]];
        const double delta =
            std::max(disagreement(hi, hj, inst.domains[i]), disagreement(hi, hj, inst.domains[j]));
        EXPECT_NEAR(T.Delta[i][j], delta, 1e-15);
        EXPECT_NEAR(T.dH[i][j], oracle_dH(inst.domains[i], inst.domains[j], inst.H), 1e-15);
      }
    }
  }
}

// ---- bound forms ----

TEST(DeviationTerm, ClosedForm) {
  const double B = deviation_term({0.5, 0.5}, {0.5, 0.5}, 100, 2, 0.05);
  EXPECT_NEAR(B, std::sqrt((4.0 * std::log(202.0) + std::log(80.0)) / 100.0), 1e-15);
  EXPECT_THROW(deviation_term({1}, {1}, 10, 2, 0.0), std::invalid_argument);
  EXPECT_THROW(deviation_term({1}, {1}, 10, 2, 1.0), std::invalid_argument);
}

TEST(MultiDomainBound, InvalidDeltaRejected) {
  const Distribution D = dist({{{0}, 0}, {{1}, 1}});
  auto inst = instance({D, D}, {10, 10}, {0.5, 0.5}, 1.5);
  EXPECT_THROW(check_all(inst), std::invalid_argument);
}

TEST(MultiDomainBound, SingleRealizableDomainLeavesOnlyDeviationTerm) {
  // With n = 1 the cross term is 2 * 2 alpha * beta_11 = 8 eps*, which vanishes
  // only for a realizable labeling; then RHS = 4 B.
  const Distribution D = dist({{{0}, 0}, {{1}, 0}, {{2}, 1}});
  auto inst = instance({D}, {200}, {1.0});
  const auto T = pairwise_terms(inst);
  const auto rows = check_theorem1(inst, T, T.h_star[0]);
  const double B = deviation_term({1.0}, {1.0}, 200, inst.H.vc_dim, 0.05);
  EXPECT_EQ(row(rows, "thm1").lhs, 0.0);
  EXPECT_NEAR(row(rows, "thm1").rhs, 4.0 * B, 1e-15);
  EXPECT_NEAR(row(rows, "thm1-per-domain-proof-form", 0).rhs, 4.0 * B, 1e-15);
}

TEST(MultiDomainBound, RhsMinimizedWhenAlphaMatchesGamma) {
  const Distribution D = dist({{{0}, 0}, {{1}, 1}, {{2}, 0}, {{3}, 1}, {{4}, 1}});
  for (const std::vector<std::size_t>& m : {std::vector<std::size_t>{300, 100}, {100, 100}, {50, 450}}) {
    auto inst = instance({D, D}, m, {0.5, 0.5});
    const auto g = inst.gamma();
    const auto T = pairwise_terms(inst);
    auto rhs_at = [&](double a0) {
      inst.alpha = {a0, 1.0 - a0};
      return row(check_theorem1(inst, T, 0), "thm1").rhs;
    };
    const double at_gamma = rhs_at(g[0]);
    for (int k = 1; k < 100; ++k) EXPECT_GE(rhs_at(k / 100.0), at_gamma - 1e-15) << "alpha0 " << k / 100.0;
  }
}

TEST(MultiDomainBound, StatementExceedsSummedPerDomainForm) {
  // Summing the per-domain bound over j differs from the statement by
  // 2 sum_i alpha_i (beta_ii + d_H(i,i)) = 4 sum_i alpha_i eps_i*.
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto inst = random_instance(small_fuzz(1, 0), s);
    const auto T = pairwise_terms(inst);
    const auto rows = check_theorem1(inst, T, 0);
    double sum = 0, gap = 0;
    for (std::size_t j = 0; j < inst.n(); ++j) {
      sum += row(rows, "thm1-per-domain-proof-form", static_cast<int>(j)).rhs;
      gap += 4.0 * inst.alpha[j] * T.eps_star[j];
    }
    EXPECT_NEAR(row(rows, "thm1").rhs - sum, gap, 1e-12);
  }
}

TEST(TargetDomainBounds, IdenticalDomainsHaveZeroImbalance) {
  const Distribution D = dist({{{0}, 1}, {{1}, 0}, {{2}, 1}});
  const auto inst = instance({D, D, D}, {5, 5, 5}, {0.4, 0.3, 0.3});
  const auto T = pairwise_terms(inst);
  for (std::size_t h = 0; h < inst.H.size(); ++h) {
    EXPECT_NEAR(check_prop1(T, h, 1).lhs, 0.0, 1e-15);
    EXPECT_TRUE(check_prop2(T, h, 1).pass);
    EXPECT_EQ(check_cor3(T, h).lhs, 0.0);
    EXPECT_TRUE(check_cor4(T, h).pass);
  }
}

TEST(TargetDomainBounds, TwoDomainsRegroupIntoPairBound) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    FuzzSpec spec = small_fuzz(1, 0);
    spec.n_max = 2;
    const auto inst = random_instance(spec, s);
    const auto T = pairwise_terms(inst);
    for (std::size_t h = 0; h < inst.H.size(); h += 3) {
      const auto p = check_prop1(T, h, 0);
      const auto c = check_cor3(T, h);
      EXPECT_NEAR(2.0 * p.lhs, c.lhs, 1e-15);
      EXPECT_NEAR(2.0 * p.rhs, c.rhs + 2.0 * T.eps_star[0], 1e-14);
    }
  }
}

TEST(TwoDomainBounds, RequireTwoDistinctDomains) {
  const Distribution D = dist({{{0}, 1}, {{1}, 0}});
  const auto T1 = pairwise_terms(instance({D}, {5}, {1.0}));
  EXPECT_THROW(check_cor3(T1, 0), std::invalid_argument);
  EXPECT_THROW(check_cor4(T1, 0), std::invalid_argument);
  const auto T2 = pairwise_terms(instance({D, D}, {5, 5}, {0.5, 0.5}));
  EXPECT_THROW(check_cor3(T2, 0, 1, 1), std::invalid_argument);
}

// ---- fuzzing ----

TEST(Fuzz, OneDimensionalInstancesNeverViolate) {
  const auto rows = fuzz(small_fuzz(200, 77));
  std::set<std::string> seen;
  for (const auto& r : rows) {
    seen.insert(r.report.bound);
    EXPECT_TRUE(r.report.pass) << r.report.bound << " seed " << r.seed << " lhs " << r.report.lhs << " rhs "
                               << r.report.rhs;
  }
  EXPECT_EQ(seen, (std::set<std::string>{"thm1", "thm1-hdh", "thm1-hdh-tightness", "thm1-per-domain-proof-form",
                                         "prop1", "prop2", "cor3", "cor4"}));
}

TEST(Fuzz, InstancesAreValidAndDeterministic) {
  const FuzzSpec spec = small_fuzz(1, 0);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto inst = random_instance(spec, s);
    EXPECT_NO_THROW(inst.validate());
    EXPECT_GE(inst.n(), 2u);
    EXPECT_LE(inst.n(), 3u);
    for (const auto& d : inst.domains) EXPECT_LE(d.points.size(), 50u);
    // Closed under complement: members come in (h, not h) pairs.
    for (std::size_t k = 0; k < inst.H.size(); k += 2) {
      EXPECT_EQ(inst.H.members[k].t, inst.H.members[k + 1].t);
      EXPECT_NE(inst.H.members[k].complement, inst.H.members[k + 1].complement);
    }
  }
  const auto a = fuzz(small_fuzz(5, 3)), b = fuzz(small_fuzz(5, 3));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].report.rhs, b[i].report.rhs);
}

TEST(Fuzz, ParameterValidation) {
  FuzzSpec s;
  s.n_min = 3;
  s.n_max = 2;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.dims = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.identical_fraction = 2;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

// ---- beyond one dimension ----

TEST(TwoDimensions, AxisThresholdsBreakTheHDivergenceForms) {
  // Both domains put half their mass on each axis value, so no single axis
  // threshold tells them apart (d_H = 0) and one hypothesis is optimal in both.
  // A threshold on the other axis is perfect on one domain and always wrong on
  // the other: the d_H-based bounds fail while the H-delta-H forms hold.
  const Distribution Di = dist({{{0, 0}, 0}, {{1, 1}, 1}});
  const Distribution Dj = dist({{{0, 1}, 0}, {{1, 0}, 1}});
  const auto inst = instance({Di, Dj}, {1000, 1000}, {0.5, 0.5});
  const auto T = pairwise_terms(inst);
  EXPECT_EQ(T.dH[0][1], 0.0);
  EXPECT_EQ(T.Delta[0][1], 0.0);
  EXPECT_EQ(T.dHdH[0][1], 2.0);

  std::size_t h = inst.H.size();
  for (std::size_t k = 0; k < inst.H.size(); ++k)
    if (inst.H.members[k].axis == 1 && !inst.H.members[k].complement && inst.H.members[k].t == 0.5) h = k;
  ASSERT_LT(h, inst.H.size());
  EXPECT_EQ(T.risk[0][h], 0.0);
  EXPECT_EQ(T.risk[1][h], 1.0);

  const auto p1 = check_prop1(T, h, 0);
  EXPECT_EQ(p1.lhs, 0.5);
  EXPECT_EQ(p1.rhs, 0.0);
  EXPECT_FALSE(p1.pass);
  const auto c3 = check_cor3(T, h);
  EXPECT_EQ(c3.lhs, 1.0);
  EXPECT_FALSE(c3.pass);
  EXPECT_TRUE(check_cor4(T, h).pass);
  EXPECT_TRUE(check_prop2(T, h, 0).pass);
}

TEST(TwoDimensions, TighterVariantClaimFailsOnSomeInstances) {
  // In one dimension d_HdH / 2 <= d_H for thresholds, so the H-delta-H form of
  // the theorem is never looser. With two axes that ordering can flip.
  std::size_t flips_1d = 0, flips_2d = 0;
  for (const auto& r : fuzz(small_fuzz(300, 5, 1)))
    if (r.report.bound == "thm1-hdh-tightness") flips_1d += !r.report.pass;
  for (const auto& r : fuzz(small_fuzz(1000, 0, 2)))
    if (r.report.bound == "thm1-hdh-tightness") flips_2d += !r.report.pass;
  EXPECT_EQ(flips_1d, 0u);
  EXPECT_GT(flips_2d, 0u);
}

}  // namespace
