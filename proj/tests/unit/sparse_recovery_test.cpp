#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace mscat;
using namespace mscat::testing;

TEST(JpqNorm, ColumnVectorGivesL1Norm) {
  const ComplexVector v = (ComplexVector(3) << Complex(3, 4), Complex(-1, 0), Complex(0, 2)).finished();
  EXPECT_NEAR(jpq_norm(v, 2, 1), 8.0, 1e-15);
}

TEST(JpqNorm, IdentityGivesTwo) { EXPECT_DOUBLE_EQ(jpq_norm(ComplexMatrix::Identity(2, 2), 2, 1), 2.0); }

TEST(JpqNorm, MatchesDoubleLoop) {
  std::mt19937_64 rng(1);
  const ComplexMatrix x = random_complex(3, 2, rng);
  for (double p : {1.0, 2.0, 3.0})
    for (double q : {1.0, 2.0, 1.5}) {
      double total = 0.0;
      for (Index i = 0; i < 3; ++i) {
        double row = 0.0;
        for (Index j = 0; j < 2; ++j) row += std::pow(std::abs(x(i, j)), p);
        total += std::pow(std::pow(row, 1.0 / p), q);
      }
      EXPECT_NEAR(jpq_norm(x, p, q), std::pow(total, 1.0 / q), 1e-14);
    }
  EXPECT_THROW(jpq_norm(x, 0.5, 1), Error);
}

TEST(SpectralNorm, MatchesSvd) {
  std::mt19937_64 rng(2);
  const ComplexMatrix g = random_complex(8, 12, rng);
  EXPECT_NEAR(spectral_norm_estimate(g), Eigen::JacobiSVD<ComplexMatrix>(g).singularValues()(0), 1e-6);
}

TEST(Gelma, ZeroDataStopsImmediately) {
  std::mt19937_64 rng(3);
  const SensingMatrix s = as_normalized(random_complex(8, 12, rng));
  const EffectiveSourceSolution sol = gelma_solve(s, ComplexMatrix::Zero(8, 2));
  EXPECT_EQ(sol.iterations, 1);
  EXPECT_TRUE(sol.converged);
  EXPECT_EQ(sol.X.norm(), 0.0);
  EXPECT_TRUE(sol.support.empty());
}

TEST(Gelma, SingleColumnRecoversCoefficient) {
  const ArrayGeometry geom = ArrayGeometry::linear(10, 1.0);
  const ImageWindow iw(Point3(0, 20, 0), 1, 1, 1.0);
  const SensingMatrix s = build_sensing_matrix(geom, iw, true);
  const Complex c(0.7, -2.0);
  const ComplexVector b = c * s.physical_column(0);
  SolverSettings settings;
  settings.tolerance = 1e-14;
  const EffectiveSourceSolution sol = gelma_solve(s, b, settings);
  EXPECT_LT(std::abs(sol.X(0, 0) - c), 1e-9 * std::abs(c));
  EXPECT_LT(sol.residual, 1e-9 * b.norm());
}

TEST(Gelma, RejectsUnnormalizedMatrixAndOversizedStep) {
  std::mt19937_64 rng(4);
  const ComplexMatrix g = random_complex(4, 6, rng);
  SensingMatrix raw{g, g.colwise().norm().transpose(), false};
  EXPECT_THROW(gelma_solve_smv(raw, ComplexVector::Ones(4)), Error);
  const SensingMatrix s = as_normalized(g);
  SolverSettings settings;
  settings.step = 2.0 / std::pow(spectral_norm_estimate(s.G), 2);
  EXPECT_THROW(gelma_solve_smv(s, ComplexVector::Ones(4), settings), Error);
}

TEST(Gelma, DivergenceGuardFiresWithIterate) {
  // Unit columns [a, b] and [a, -b] with b > a: the ones start vector of the power iteration is
  // an exact singular vector of the smaller singular value, so the default step is too long.
  const double a = 0.3, b = std::sqrt(1.0 - a * a);
  ComplexMatrix g(2, 2);
  g << a, a, b, -b;
  const SensingMatrix s = as_normalized(g);
  EXPECT_NEAR(spectral_norm_estimate(s.G), std::sqrt(2.0) * a, 1e-12);
  const ComplexVector data = s.G * (ComplexVector(2) << 1.0, -1.0).finished();
  SolverSettings settings;
  settings.tau = 0.0;
  try {
    gelma_solve(s, data, settings);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.iterate().rows(), 2);
    EXPECT_GT(e.iteration(), 0);
  }
}

TEST(Gelma, MatchesExhaustiveL0OracleAtDeskScale) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const SensingMatrix s = incoherent_instance(rng, 8, 12, 0.5);
    const Index m = 1 + trial % 2;
    const ScattererScene scene = random_scene(12, m, rng);
    const ComplexVector b = s.G * scene.rho0();
    const EffectiveSourceSolution sol = gelma_solve(s, b);
    EXPECT_EQ(sol.support, l0_oracle(s.G, b, 3)) << "trial " << trial;
    EXPECT_EQ(sol.support, scene.support());
  }
}

TEST(Gelma, SingleColumnMatrixEqualsVectorPathBitForBit) {
  std::mt19937_64 rng(6);
  const SensingMatrix s = incoherent_instance(rng, 8, 12, 0.6);
  const ComplexVector b = s.G * random_scene(12, 2, rng).rho0();
  const EffectiveSourceSolution v = gelma_solve_smv(s, b);
  const EffectiveSourceSolution m = gelma_solve(s, ComplexMatrix(b));
  EXPECT_EQ(v.X, m.X);
  EXPECT_EQ(v.iterations, m.iterations);
}

TEST(Gelma, SolutionIsInsensitiveToTau) {
  std::mt19937_64 rng(7);
  const SensingMatrix s = incoherent_instance(rng, 8, 12, 0.5);
  const ComplexVector b = s.G * random_scene(12, 2, rng).rho0();
  SolverSettings a, c;
  a.tau_scale = 0.3;
  c.tau_scale = 3.0;
  const EffectiveSourceSolution x = gelma_solve(s, b, a), y = gelma_solve(s, b, c);
  EXPECT_EQ(x.support, y.support);
  EXPECT_LT((x.X - y.X).norm() / x.X.norm(), 1e-6);
}

TEST(Gelma, ResidualEnvelopeIsNonIncreasingAndReported) {
  std::mt19937_64 rng(8);
  const SensingMatrix s = incoherent_instance(rng, 8, 12, 0.6);
  const ComplexMatrix b = s.G * random_complex(12, 1, rng).cwiseProduct(ComplexVector::Unit(12, 3) + ComplexVector::Unit(12, 9));
  std::vector<IterationRecord> trace;
  SolverSettings settings;
  settings.on_iteration = [&trace](const IterationRecord& r) { trace.push_back(r); };
  const EffectiveSourceSolution sol = gelma_solve(s, b, settings);
  ASSERT_EQ(static_cast<Index>(trace.size()), sol.iterations);
  double best = trace.front().residual;
  for (const auto& r : trace) {
    EXPECT_LE(r.residual, 10.0 * best);
    best = std::min(best, r.residual);
  }
  EXPECT_NEAR(sol.residual, (s.G * sol.X_normalized - b).norm(), 1e-15);
  EXPECT_LT(best, 1e-8 * b.norm());
}

TEST(Gelma, DiscrepancyStopHonoursDelta) {
  std::mt19937_64 rng(9);
  const SensingMatrix s = incoherent_instance(rng, 8, 12, 0.6);
  const ComplexVector b = s.G * random_scene(12, 2, rng).rho0();
  SolverSettings settings;
  settings.delta = 0.05 * b.norm();
  const EffectiveSourceSolution sol = gelma_solve(s, b, settings);
  EXPECT_TRUE(sol.converged);
  EXPECT_LE(sol.residual, settings.delta);
}

TEST(Gelma, RescalesToPhysicalUnits) {
  const ArrayGeometry geom = ArrayGeometry::linear(30, 1.0);
  const ImageWindow iw(Point3(0, 40, 0), 6, 6, 1.0);
  const SensingMatrix raw = build_sensing_matrix(geom, iw, false);
  const SensingMatrix s = raw.normalized_copy();
  std::mt19937_64 rng(10);
  const ComplexVector b = raw.G * random_scene(iw.size(), 1, rng).rho0();
  const EffectiveSourceSolution sol = gelma_solve(s, b);
  EXPECT_LT((sol.X - s.column_norms.cwiseInverse().asDiagonal() * sol.X_normalized).norm(), 1e-15 * sol.X.norm());
  EXPECT_LT((raw.G * sol.X - b).norm(), 1e-6 * b.norm());
}

TEST(TheoryBounds, ZeroCoherence) {
  const TheoryBounds t = theory_bounds(0.0, 4, 2.0);
  EXPECT_NEAR(t.delta_min, 2.0 * std::sqrt(5.0), 1e-14);
  EXPECT_NEAR(t.err_bound, t.delta, 1e-14);
  EXPECT_TRUE(t.conditions_hold);
  EXPECT_NEAR(theory_bounds(0.0, 1, 1.5).delta_min, 1.5 * std::sqrt(2.0), 1e-14);
}

TEST(TheoryBounds, DefaultConfigurationViolatesConditions) {
  const TheoryBounds t = theory_bounds(0.98, 5, 1.0);
  EXPECT_FALSE(t.conditions_hold);
  EXPECT_EQ(t.status(), "conditions violated");
}

TEST(TheoryBounds, GeneralFormula) {
  const double eps = 0.05, e = 0.3;
  const Index m = 3;
  const double shrink = 1.0 - 2.0 * eps, den = 1.0 - 6.0 * eps + eps;
  const TheoryBounds t = theory_bounds(eps, m, e, 1.0);
  EXPECT_NEAR(t.delta_min, e * std::sqrt(1.0 + 3.0 * shrink / (den * den)), 1e-14);
  EXPECT_NEAR(t.err_bound, 1.0 / std::sqrt(shrink), 1e-14);
}

TEST(ExtractSupport, ThresholdAboveMaximumGivesEmptySet) {
  std::mt19937_64 rng(11);
  const SensingMatrix s = incoherent_instance(rng, 8, 12, 0.6);
  const ComplexVector b = s.G * random_scene(12, 2, rng).rho0();
  const EffectiveSourceSolution sol = gelma_solve(s, b);
  EXPECT_TRUE(extract_support(sol, sol.row_norms.maxCoeff() * 1.01).empty());
  EXPECT_EQ(extract_support(sol, theory_bounds(0.9, 2, 0.0)), sol.support);
}

TEST(ExtractSupport, TheoryThresholdWhenConditionsHold) {
  EffectiveSourceSolution sol;
  sol.row_norms = (RealVector(4) << 0.05, 2.0, 0.5, 0.0).finished();
  const TheoryBounds t = theory_bounds(0.1, 2, 0.2, 0.4);
  EXPECT_EQ(extract_support(sol, t), (IndexSet{1, 2}));
  EXPECT_EQ(extract_support(sol, theory_bounds(0.6, 2, 0.2, 0.4), 0.1), (IndexSet{1, 2}));
}

TEST(NoiseConstrained, SingleRowMatchesClosedFormMinimizer) {
  // One true row k: the minimizer stays on k and shrinks the least-squares coefficient g_k^* b
  // until the residual reaches delta.
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const SensingMatrix s = incoherent_instance(rng, 16, 20, 0.4);
    const ScattererScene scene = random_scene(20, 1, rng, 4.0);
    const ComplexMatrix x0 = scene.rho0();
    const ComplexMatrix e = 0.02 * random_complex(16, 1, rng);
    const ComplexMatrix b = s.G * x0 + e;
    const TheoryBounds t = theory_bounds(mutual_coherence(s), 1, e.norm());
    ASSERT_TRUE(t.conditions_hold);
    const ComplexMatrix x = solve_noise_constrained(s, b, t.delta);

    const Index k = *scene.support().begin();
    const Complex ls = s.G.col(k).dot(b.col(0));
    const double perp2 = b.squaredNorm() - std::norm(ls);
    ComplexMatrix oracle = ComplexMatrix::Zero(20, 1);
    oracle(k, 0) = ls * (1.0 - std::sqrt(t.delta * t.delta - perp2) / std::abs(ls));

    EXPECT_LT((x - oracle).norm(), 1e-9 * oracle.norm());
    EXPECT_NEAR((s.G * x - b).norm(), t.delta, 1e-9 * t.delta);
    for (Index i = 0; i < 20; ++i)
      if (x.row(i).norm() > 0.0) EXPECT_NE(x0(i, 0), Complex(0.0));
  }
}

TEST(Decoupled, ColumnwiseL1CanSpreadSupportBeyondJointRecovery) {
  // 4 x 8 Gaussian dictionary, two true rows, three generic shots.
  std::mt19937_64 rng(8);
  const SensingMatrix s = as_normalized(random_complex(4, 8, rng));
  const ScattererScene scene = random_scene(8, 2, rng);
  ComplexMatrix x0 = ComplexMatrix::Zero(8, 3);
  for (Index i : scene.support()) x0.row(i) = random_complex(1, 3, rng);
  const ComplexMatrix b = s.G * x0;
  const IndexSet joint = gelma_solve(s, b).support;
  const IndexSet split = decoupled_union_support(s, b);
  EXPECT_EQ(joint, scene.support());
  EXPECT_GT(split.size(), joint.size());
  EXPECT_TRUE(std::includes(split.begin(), split.end(), joint.begin(), joint.end()));
}
