#pragma once

// Exact Euclidean distance transform on binary grids (lower envelope of
// parabolas, Felzenszwalb & Huttenlocher). Breakpoints are compared as exact
// rationals so the result is bit-identical to a brute-force scan.

#include "offroad/grid.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace offroad {

inline constexpr std::int64_t kNoSite = std::numeric_limits<std::int64_t>::max();

namespace detail {

// num / den with den > 0; `inf` encodes -inf (-1) or +inf (+1).
struct Breakpoint {
  std::int64_t num = 0;
  std::int64_t den = 1;
  int inf = 0;
};

// Finite s against a breakpoint that is finite or -inf.
inline bool finite_le(const Breakpoint& s, const Breakpoint& z) {
  if (z.inf != 0) return z.inf > 0;
  return s.num * z.den <= z.num * s.den;
}

inline bool breakpoint_lt_int(const Breakpoint& a, std::int64_t q) {
  if (a.inf != 0) return a.inf < 0;
  return a.num < q * a.den;
}

// d[q] = min_p (q - p)^2 + f[p] over p with f[p] != kNoSite; arg[q] = argmin.
inline void edt_1d(const std::vector<std::int64_t>& f, std::vector<std::int64_t>& d, std::vector<int>& arg) {
  const int n = static_cast<int>(f.size());
  d.assign(static_cast<std::size_t>(n), kNoSite);
  arg.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<Breakpoint> z(static_cast<std::size_t>(n) + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    const std::int64_t fq = f[static_cast<std::size_t>(q)];
    if (fq == kNoSite) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = {0, 1, -1};
      z[1] = {0, 1, +1};
      continue;
    }
    auto intersect = [&](int p) {
      const std::int64_t fp = f[static_cast<std::size_t>(p)];
      return Breakpoint{(fq + std::int64_t{q} * q) - (fp + std::int64_t{p} * p), 2 * std::int64_t{q - p}, 0};
    };
    Breakpoint s = intersect(v[static_cast<std::size_t>(k)]);
    while (finite_le(s, z[static_cast<std::size_t>(k)])) {
      --k;
      s = intersect(v[static_cast<std::size_t>(k)]);
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = {0, 1, +1};
  }
  if (k < 0) return;
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (breakpoint_lt_int(z[static_cast<std::size_t>(j) + 1], q)) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    d[static_cast<std::size_t>(q)] = std::int64_t{q - p} * (q - p) + f[static_cast<std::size_t>(p)];
    arg[static_cast<std::size_t>(q)] = p;
  }
}

}  // namespace detail

/// Squared distance (in cells^2) from every cell to the nearest non-zero cell
/// of `sites`; kNoSite where the grid has no sites. When `nearest` is given it
/// receives the flat index of a nearest site (-1 if none).
inline Grid<std::int64_t> squared_edt(const Grid<std::uint8_t>& sites, Grid<std::int64_t>* nearest = nullptr) {
  const int nx = sites.nx(), ny = sites.ny();
  Grid<std::int64_t> column(nx, ny, kNoSite);
  Grid<int> column_arg(nx, ny, -1);
  std::vector<std::int64_t> f, d;
  std::vector<int> arg;
  f.resize(static_cast<std::size_t>(ny));
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) f[static_cast<std::size_t>(j)] = sites(i, j) ? 0 : kNoSite;
    detail::edt_1d(f, d, arg);
    for (int j = 0; j < ny; ++j) {
      column(i, j) = d[static_cast<std::size_t>(j)];
      column_arg(i, j) = arg[static_cast<std::size_t>(j)];
    }
  }
  Grid<std::int64_t> out(nx, ny, kNoSite);
  if (nearest) *nearest = Grid<std::int64_t>(nx, ny, -1);
  f.resize(static_cast<std::size_t>(nx));
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) f[static_cast<std::size_t>(i)] = column(i, j);
    detail::edt_1d(f, d, arg);
    for (int i = 0; i < nx; ++i) {
      out(i, j) = d[static_cast<std::size_t>(i)];
      if (nearest && arg[static_cast<std::size_t>(i)] >= 0) {
        const int si = arg[static_cast<std::size_t>(i)];
        (*nearest)(i, j) = static_cast<std::int64_t>(sites.index(si, column_arg(si, j)));
      }
    }
  }
  return out;
}

}  // namespace offroad
