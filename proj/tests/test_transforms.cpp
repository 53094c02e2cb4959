#include "alrnet/transforms.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace alrnet;
using namespace alrnet::testing;

namespace {

Composition random_composition(std::size_t parts, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0);
  Vector p(static_cast<Index>(parts));
  for (Index k = 0; k < p.size(); ++k) p(k) = g(rng) + 1e-6;
  return {p / p.sum()};
}

TaxonList natural_layout(std::size_t taxa, TaxonId reference) {
  TaxonList l;
  for (TaxonId t = 0; t < taxa; ++t)
    if (t != reference) l.push_back(t);
  return l;
}

}  // namespace

TEST(Alr, UniformCompositionGivesZeros) {
  Composition p{Vector::Constant(4, 0.25)};
  const AlrVector z = alr(p, 3, {0, 1, 2});
  EXPECT_EQ(z.values, Vector::Zero(3));
}

TEST(Alr, HandComputedRatios) {
  Composition p{Vector(3)};
  p.probs << 0.2, 0.3, 0.5;
  const AlrVector z = alr(p, 2, {0, 1});
  EXPECT_NEAR(z.values(0), std::log(0.4), 1e-15);
  EXPECT_NEAR(z.values(1), std::log(0.6), 1e-15);
}

TEST(Alr, RoundTripThroughSoftmax) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t parts = 2 + rep % 9;
    const Composition p = random_composition(parts, rng);
    const TaxonId ref = static_cast<TaxonId>(rep) % parts;
    TaxonList layout = natural_layout(parts, ref);
    std::shuffle(layout.begin(), layout.end(), rng);
    const Composition back = softmax_inverse(alr(p, ref, layout));
    EXPECT_LT((back.probs - p.probs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Alr, RejectsBadInput) {
  Composition p{Vector(3)};
  p.probs << 0.5, 0.5, 0.0;
  EXPECT_THROW(alr(p, 0, {1, 2}), DomainError);
  p.probs << 0.2, 0.3, 0.5;
  EXPECT_THROW(alr(p, 0, {0, 2}), LayoutError);
  EXPECT_THROW(alr(p, 0, {1}), LayoutError);
  EXPECT_THROW(alr(p, 3, {0, 1}), LayoutError);
  EXPECT_THROW(alr(p, 0, {1, 1}), LayoutError);
}

TEST(Composition, Validation) {
  Composition ok{Vector::Constant(4, 0.25)};
  EXPECT_NO_THROW(validate_composition(ok));
  Composition off{Vector::Constant(4, 0.25 + 1e-9)};
  EXPECT_THROW(validate_composition(off), DomainError);
  Composition neg{Vector(2)};
  neg.probs << 1.5, -0.5;
  EXPECT_THROW(validate_composition(neg), DomainError);
}

TEST(SoftmaxInverse, ZerosAreUniform) {
  const Composition p = softmax_inverse(Vector::Zero(3), 3, {0, 1, 2});
  for (Index k = 0; k < 4; ++k) EXPECT_NEAR(p.probs(k), 0.25, 1e-15);
}

TEST(SoftmaxInverse, TwoTaxa) {
  Vector z(1);
  z << std::log(2.0);
  const Composition p = softmax_inverse(z, 1, {0});
  EXPECT_NEAR(p.probs(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p.probs(1), 1.0 / 3.0, 1e-15);
}

TEST(SoftmaxInverse, HugeCoordinateStaysFinite) {
  Vector z(3);
  z << 700.0, 0.0, -3.0;
  const Composition p = softmax_inverse(z, 3, {0, 1, 2});
  EXPECT_TRUE(p.probs.allFinite());
  EXPECT_NEAR(p.probs(0), 1.0, 1e-15);
  // the others are exp(-700) and smaller: tiny but representable
  EXPECT_GT(p.probs(1), 0.0);
  EXPECT_NEAR(std::log(p.probs(1)), -700.0, 1e-9);
  EXPECT_NEAR(p.probs.sum(), 1.0, 1e-15);
}

TEST(Layout, CanonicalPutsCandidatesLast) {
  const TaxonList l = canonical_layout(6, {1, 4}, 4);
  EXPECT_EQ(l, (TaxonList{0, 2, 3, 5, 1}));
  const TaxonList m = canonical_layout(6, {1, 4}, 1);
  EXPECT_EQ(m, (TaxonList{0, 2, 3, 5, 4}));
  EXPECT_THROW(canonical_layout(6, {1, 4}, 2), LayoutError);
}

TEST(Layout, SwappedGivesOldReferenceTheNewSlot) {
  EXPECT_EQ(swapped_layout({0, 1, 2}, 3, 1), (TaxonList{0, 3, 2}));
  EXPECT_THROW(swapped_layout({0, 1, 2}, 3, 5), LayoutError);
}

TEST(ReferenceChange, LastTwoBlockForm) {
  const auto q1 = last_two_swap_operator(1);
  Matrix expect1(2, 2);
  expect1 << 1, -1, 0, -1;
  EXPECT_EQ(q1.matrix, expect1);

  const std::size_t K = 5;
  const auto q = last_two_swap_operator(K);
  Matrix expect = Matrix::Zero(K + 1, K + 1);
  expect.topLeftCorner(K, K).setIdentity();
  expect.col(static_cast<Index>(K)).setConstant(-1.0);
  EXPECT_EQ(q.matrix, expect);
  EXPECT_TRUE(q.involutory());
  EXPECT_EQ(q.matrix * q.matrix, Matrix::Identity(K + 1, K + 1));
}

TEST(ReferenceChange, MatrixActionMatchesDirectAlr) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t parts = 3 + rep % 7;
    const Composition p = random_composition(parts, rng);
    std::uniform_int_distribution<std::size_t> pick(0, parts - 1);
    const TaxonId from = pick(rng);
    TaxonId to = pick(rng);
    while (to == from) to = pick(rng);
    TaxonList layout = natural_layout(parts, from);
    std::shuffle(layout.begin(), layout.end(), rng);

    // swapped layout: involution
    const TaxonList out = swapped_layout(layout, from, to);
    const auto q = reference_change_operator(from, to, layout, out);
    EXPECT_TRUE(q.involutory());
    const Vector direct = alr(p, to, out).values;
    EXPECT_LT((q.apply(alr(p, from, layout).values) - direct).cwiseAbs().maxCoeff(), 1e-12);

    // arbitrary output layout: still exact, but not necessarily its own inverse
    TaxonList other = natural_layout(parts, to);
    std::shuffle(other.begin(), other.end(), rng);
    const auto r = reference_change_operator(from, to, layout, other);
    EXPECT_LT((r.apply(alr(p, from, layout).values) - alr(p, to, other).values).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((r.inverse() * r.matrix - Matrix::Identity(r.matrix.rows(), r.matrix.cols())).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(ReferenceChange, SameReferenceRejected) {
  EXPECT_THROW(reference_change_operator(2, 2, {0, 1}, {0, 1}), LayoutError);
}

TEST(Gaussian, IdentityCovarianceHandExample) {
  const auto q = last_two_swap_operator(1);
  const GaussianParams g = transform_gaussian(make_gaussian(Vector::Zero(2), Matrix::Identity(2, 2)), q);
  Matrix expect(2, 2);
  expect << 2, 1, 1, 1;
  EXPECT_LT((g.sigma - expect).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NO_THROW(validate_gaussian(g));
}

TEST(Gaussian, InvolutionAndDeterminant) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t K = 1 + rep % 8;
    const Index d = static_cast<Index>(K + 1);
    const GaussianParams g = make_gaussian(random_vector(d, rng), random_spd(d, rng));
    const auto q = last_two_swap_operator(K);
    const GaussianParams once = transform_gaussian(g, q);
    const GaussianParams twice = transform_gaussian(once, q);
    EXPECT_LT(rel_diff(twice.sigma, g.sigma), 1e-10);
    EXPECT_LT(rel_diff(twice.omega, g.omega), 1e-10);
    EXPECT_LT((twice.mu - g.mu).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(log_det_spd(once.omega), log_det_spd(g.omega), 1e-8);
    EXPECT_LT(rel_diff(once.omega, transform_precision(g.omega, q)), 1e-12);
    // the transformed precision must also be the inverse of the transformed covariance
    EXPECT_LT(rel_diff(once.omega, spd_inverse(once.sigma)), 1e-8);
  }
}

TEST(Gaussian, ValidationCatchesMismatch) {
  GaussianParams g = make_gaussian(Vector::Zero(2), Matrix::Identity(2, 2));
  g.omega(0, 0) = 2.0;
  EXPECT_THROW(validate_gaussian(g), DomainError);
  g = make_gaussian(Vector::Zero(3), Matrix::Identity(2, 2));
  EXPECT_THROW(validate_gaussian(g), DomainError);
}

TEST(Invariance, IdentityAgreesToRoundoff) {
  for (std::size_t K = 1; K <= 6; ++K) {
    const auto rep = invariance_oracle(Matrix::Identity(static_cast<Index>(K + 1), static_cast<Index>(K + 1)), K);
    EXPECT_LE(rep.max_block_discrepancy, 1e-15);
  }
}

TEST(Invariance, RandomCovariances) {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t K = 2 + rep % 9;
    const Matrix sigma = random_spd(static_cast<Index>(K + 1), rng);
    EXPECT_LT(invariance_oracle(sigma, K).relative_discrepancy, 1e-10) << "K=" << K;
  }
}

TEST(Invariance, SampleCovarianceOfAlrData) {
  // sample covariance of z and of Q z: Q S Q' exactly, so the blocks agree
  std::mt19937_64 rng(23);
  const std::size_t K = 6;
  const Index d = static_cast<Index>(K + 1);
  const Matrix z = random_normal(40, d, rng) * random_spd(d, rng);
  const Matrix centered = z.rowwise() - z.colwise().mean();
  const Matrix s = centered.transpose() * centered / 40.0;
  EXPECT_LT(invariance_oracle(s, K).relative_discrepancy, 1e-10);
}

TEST(Invariance, MoreThanTwoCandidates) {
  // candidates {2, 5, 6} out of 7 taxa: leading 4 slots are invariant
  std::mt19937_64 rng(29);
  const TaxonList cands{2, 5, 6};
  const TaxonList in = canonical_layout(7, cands, 6);
  const TaxonList out = swapped_layout(in, 6, 2);
  const auto q = reference_change_operator(6, 2, in, out);
  EXPECT_TRUE(q.involutory());
  for (int rep = 0; rep < 20; ++rep)
    EXPECT_LT(invariance_oracle(random_spd(6, rng), q, 4).relative_discrepancy, 1e-10);
}
