#include <gtest/gtest.h>

#include "test_support.hpp"
#include "volseg/metrics.hpp"

namespace volseg {
namespace {

using Labels = std::vector<int>;

ContingencyTable table(const Labels& a, const Labels& b) {
  return build_contingency(std::span<const int>(a), std::span<const int>(b));
}
double fm(const Labels& a, const Labels& b) { return fowlkes_mallows(table(a, b)); }
double nmi(const Labels& a, const Labels& b) { return nmi_mean(table(a, b)); }

TEST(Contingency, Examples) {
  auto t = table({0, 0, 1}, {0, 0, 1});
  EXPECT_EQ(t.at(0, 0), 2u);
  EXPECT_EQ(t.at(1, 1), 1u);
  EXPECT_EQ(t.at(0, 1), 0u);
  EXPECT_EQ(t.total(), 3u);
  t = table({0, 1}, {1, 0});
  EXPECT_EQ(t.at(0, 1), 1u);
  EXPECT_EQ(t.at(1, 0), 1u);
  EXPECT_EQ(t.at(0, 0), 0u);
  EXPECT_EQ(t.total(), 2u);
}

TEST(Contingency, Errors) {
  try {
    table({0, 1}, {0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
  EXPECT_THROW(table({}, {}), Error);
  EXPECT_THROW(fm({0}, {0}), Error);
}

TEST(Contingency, MergeIsAdditive) {
  const Labels a{0, 1, 2, 2, 1, 0, 3}, b{1, 1, 0, 0, 2, 2, 2};
  ContingencyTable left = table(Labels(a.begin(), a.begin() + 3), Labels(b.begin(), b.begin() + 3));
  left.merge(table(Labels(a.begin() + 3, a.end()), Labels(b.begin() + 3, b.end())));
  const auto whole = table(a, b);
  for (std::size_t u = 0; u < 4; ++u) {
    for (std::size_t v = 0; v < 3; ++v) EXPECT_EQ(left.at(u, v), whole.at(u, v));
  }
  EXPECT_EQ(left.total(), whole.total());
  EXPECT_EQ(left.row_sums(), whole.row_sums());
  EXPECT_EQ(left.col_sums(), whole.col_sums());
}

TEST(FowlkesMallows, Examples) {
  EXPECT_EQ(fm({0, 0, 1, 1, 2}, {5, 5, 3, 3, 9}), 1.0);
  EXPECT_EQ(fm({0, 0, 0, 0}, {0, 1, 2, 3}), 0.0);
  EXPECT_EQ(fm({0, 0, 1, 1}, {0, 1, 0, 1}), 0.0);
}

TEST(Nmi, Examples) {
  EXPECT_EQ(nmi({0, 0, 1, 1, 2}, {5, 5, 3, 3, 9}), 1.0);
  EXPECT_EQ(nmi({0, 0, 0, 0}, {0, 0, 1, 1}), 0.0);
  EXPECT_NEAR(nmi({0, 0, 1, 1}, {0, 1, 0, 1}), 0.0, 1e-15);
  EXPECT_EQ(nmi({4, 4, 4}, {7, 7, 7}), 1.0);
}

Labels random_labels(std::mt19937_64& gen, std::size_t n, int k) {
  Labels l(n);
  for (auto& x : l) x = static_cast<int>(gen() % k);
  return l;
}

TEST(Metrics, MatchBruteForceOracles) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + gen() % 199;
    const auto a = random_labels(gen, n, 1 + static_cast<int>(gen() % 5));
    const auto b = trial % 7 == 0 ? a : random_labels(gen, n, 1 + static_cast<int>(gen() % 5));
    EXPECT_NEAR(fm(a, b), testing::brute_force_fm(a, b), 1e-12);
    EXPECT_NEAR(nmi(a, b), testing::brute_force_nmi(a, b), 1e-12);
  }
}

TEST(Metrics, SymmetricPermutationInvariantAndInRange) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + gen() % 300;
    const auto a = random_labels(gen, n, 4);
    const auto b = random_labels(gen, n, 3);
    const int perm[] = {2, 0, 3, 1};
    Labels pa(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] = perm[a[i]];
    EXPECT_NEAR(fm(a, b), fm(b, a), 1e-12);
    EXPECT_NEAR(nmi(a, b), nmi(b, a), 1e-12);
    EXPECT_NEAR(fm(a, b), fm(pa, b), 1e-12);
    EXPECT_NEAR(nmi(a, b), nmi(pa, b), 1e-12);
    for (double s : {fm(a, b), nmi(a, b)}) {
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
    EXPECT_EQ(fm(pa, a), 1.0);
    EXPECT_EQ(nmi(pa, a), 1.0);
  }
}

}  // namespace
}  // namespace volseg
