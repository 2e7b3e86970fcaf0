#include "offroad/edt.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace offroad;

namespace {

Grid<std::int64_t> brute_force(const Grid<std::uint8_t>& s) {
  Grid<std::int64_t> out(s.nx(), s.ny(), kNoSite);
  for (int j = 0; j < s.ny(); ++j)
    for (int i = 0; i < s.nx(); ++i)
      for (int b = 0; b < s.ny(); ++b)
        for (int a = 0; a < s.nx(); ++a)
          if (s(a, b)) {
            const std::int64_t d = std::int64_t(i - a) * (i - a) + std::int64_t(j - b) * (j - b);
            out(i, j) = std::min(out(i, j), d);
          }
  return out;
}

Grid<std::uint8_t> random_sites(std::mt19937_64& g, int nx, int ny, double p) {
  std::bernoulli_distribution b(p);
  Grid<std::uint8_t> s(nx, ny, 0);
  for (auto& v : s.data()) v = b(g) ? 1 : 0;
  return s;
}

}  // namespace

TEST(Edt, MatchesBruteForceOnRandomGrids) {
  std::mt19937_64 g(21);
  for (int n = 0; n < 20; ++n) {
    const int nx = 5 + static_cast<int>(g() % 40), ny = 5 + static_cast<int>(g() % 40);
    const double p = n % 4 == 0 ? 0.005 : 0.05 + 0.1 * (n % 3);
    const auto s = random_sites(g, nx, ny, p);
    EXPECT_EQ(squared_edt(s), brute_force(s)) << nx << "x" << ny << " p=" << p;
  }
}

TEST(Edt, NoSitesLeavesEverythingUnreachable) {
  const Grid<std::uint8_t> s(7, 3, 0);
  const auto d = squared_edt(s);
  for (auto v : d.data()) EXPECT_EQ(v, kNoSite);
}

TEST(Edt, SingleSiteGivesSquaredDistance) {
  Grid<std::uint8_t> s(9, 6, 0);
  s(2, 4) = 1;
  const auto d = squared_edt(s);
  EXPECT_EQ(d(2, 4), 0);
  EXPECT_EQ(d(8, 0), 36 + 16);
}

TEST(Edt, NearestIndexPointsAtASiteAtTheReportedDistance) {
  std::mt19937_64 g(4);
  for (int n = 0; n < 10; ++n) {
    const auto s = random_sites(g, 31, 17, 0.03);
    Grid<std::int64_t> nearest;
    const auto d = squared_edt(s, &nearest);
    for (int j = 0; j < s.ny(); ++j)
      for (int i = 0; i < s.nx(); ++i) {
        if (d(i, j) == kNoSite) {
          EXPECT_EQ(nearest(i, j), -1);
          continue;
        }
        const std::int64_t k = nearest(i, j);
        ASSERT_GE(k, 0);
        const int a = static_cast<int>(k % s.nx()), b = static_cast<int>(k / s.nx());
        EXPECT_TRUE(s(a, b));
        EXPECT_EQ(std::int64_t(i - a) * (i - a) + std::int64_t(j - b) * (j - b), d(i, j));
      }
  }
}
