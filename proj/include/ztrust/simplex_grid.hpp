#pragma once

// Regular grid on the probability simplex with `resolution` subdivisions per
// coordinate, plus barycentric interpolation on the Freudenthal
// triangulation (each query touches at most n grid points).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "ztrust/error.hpp"

namespace ztrust {

class SimplexGrid {
public:
  struct Vertex {
    std::size_t index;
    double weight;
  };

  SimplexGrid() = default;

  SimplexGrid(std::size_t dim, std::size_t resolution) : dim_(dim), res_(resolution) {
    require(dim >= 1, "grid.dimension", "must be at least 1");
    require(resolution >= 1, "grid_resolution", "must be at least 1");
    require(dim <= kMaxDim, "grid.dimension", "too many joint types");
    // cum_[m][s][c] = number of compositions of (s - v) into m parts, summed over v < c.
    cum_.assign(dim_, std::vector<std::vector<std::uint64_t>>(res_ + 1));
    for (std::size_t m = 0; m < dim_; ++m)
      for (std::size_t s = 0; s <= res_; ++s) {
        auto& row = cum_[m][s];
        row.assign(s + 2, 0);
        for (std::size_t c = 0; c <= s; ++c) row[c + 1] = row[c] + compositions(s - c, m);
      }
    const std::uint64_t total = compositions(res_, dim_);
    require(total <= 50'000'000, "grid_resolution", "belief grid too large (" + std::to_string(total) + " points)");
    points_.reserve(total * dim_);
    std::vector<int> counts(dim_, 0);
    enumerate(0, static_cast<int>(res_), counts);
  }

  std::size_t dimension() const { return dim_; }
  std::size_t resolution() const { return res_; }
  std::size_t size() const { return dim_ == 0 ? 0 : points_.size() / dim_; }

  std::span<const double> point(std::size_t idx) const { return {points_.data() + idx * dim_, dim_}; }

  // Rank of a composition (counts summing to resolution) in enumeration order.
  std::size_t index(std::span<const int> counts) const {
    std::uint64_t rank = 0;
    std::size_t rem = res_;
    for (std::size_t i = 0; i + 1 < dim_; ++i) {
      const auto c = static_cast<std::size_t>(counts[i]);
      rank += cum_[dim_ - i - 1][rem][c];
      rem -= c;
    }
    return static_cast<std::size_t>(rank);
  }

  // Barycentric decomposition of `b`; zero-weight vertices are dropped.
  void interpolate(std::span<const double> b, std::vector<Vertex>& out) const {
    out.clear();
    const std::size_t n = dim_;
    if (n == 1) {
      out.push_back({0, 1.0});
      return;
    }
    const double r = static_cast<double>(res_);
    // Cumulative coordinates x_i = r * sum_{j >= i} b_j.
    double x[kMaxDim], d[kMaxDim];
    int v[kMaxDim], order[kMaxDim];
    double suffix = 0.0;
    for (std::size_t i = n; i-- > 1;) {
      suffix += std::max(b[i], 0.0);
      x[i] = std::min(r * suffix, r);
    }
    x[0] = r;
    for (std::size_t i = 0; i < n; ++i) {
      // Enforce monotone cumulative coordinates against rounding.
      if (i > 0 && x[i] > x[i - 1]) x[i] = x[i - 1];
      v[i] = static_cast<int>(std::floor(x[i]));
      d[i] = x[i] - v[i];
    }
    std::size_t m = 0;
    for (std::size_t i = 1; i < n; ++i) order[m++] = static_cast<int>(i);
    std::stable_sort(order, order + m, [&](int a, int c) { return d[a] > d[c]; });

    int vert[kMaxDim], counts[kMaxDim];
    std::copy(v, v + n, vert);
    for (std::size_t j = 0; j <= m; ++j) {
      double w;
      if (j == 0)
        w = 1.0 - d[order[0]];
      else if (j < m)
        w = d[order[j - 1]] - d[order[j]];
      else
        w = d[order[m - 1]];
      if (j > 0) ++vert[order[j - 1]];
      if (w <= 1e-15) continue;
      for (std::size_t i = 0; i < n; ++i) counts[i] = vert[i] - (i + 1 < n ? vert[i + 1] : 0);
      out.push_back({index(std::span<const int>(counts, n)), w});
    }
  }

  static constexpr std::size_t kMaxDim = 32;

private:
  static std::uint64_t compositions(std::size_t s, std::size_t parts) {
    // C(s + parts - 1, parts - 1)
    if (parts == 0) return s == 0 ? 1 : 0;
    std::uint64_t c = 1;
    const std::size_t k = parts - 1;
    for (std::size_t i = 1; i <= k; ++i) c = c * (s + i) / i;
    return c;
  }

  void enumerate(std::size_t pos, int rem, std::vector<int>& counts) {
    if (pos + 1 == dim_) {
      counts[pos] = rem;
      for (std::size_t i = 0; i < dim_; ++i)
        points_.push_back(static_cast<double>(counts[i]) / static_cast<double>(res_));
      return;
    }
    for (int c = 0; c <= rem; ++c) {
      counts[pos] = c;
      enumerate(pos + 1, rem - c, counts);
    }
  }

  std::size_t dim_ = 0;
  std::size_t res_ = 0;
  std::vector<double> points_;
  std::vector<std::vector<std::vector<std::uint64_t>>> cum_;
};

}  // namespace ztrust
