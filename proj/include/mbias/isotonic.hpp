#pragma once

// Pool-adjacent-violators isotonic regression and its centered variant.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace mbias {

namespace detail {

struct IsoBlock {
  double sum_wy = 0.0;
  double sum_wx = 0.0;
  double weight = 0.0;
  std::size_t first = 0;  // first grouped point
  std::size_t last = 0;   // one past the last grouped point
  double mean() const { return sum_wy / weight; }
  double center() const { return sum_wx / weight; }
};

}  // namespace detail

/// Nondecreasing least-squares fit of y on sorted x.
///
/// Points sharing an x value are pooled before PAVA. With `centered`, blocks
/// with equal fitted values are pooled too, each block is anchored at its
/// mean x, and the fit is read off the piecewise-linear interpolant of the
/// anchors (constant beyond the first and last anchors).
inline std::vector<double> isotonic_fit(std::span<const double> x, std::span<const double> y,
                                        bool centered) {
  if (x.empty() || x.size() != y.size()) {
    throw std::invalid_argument("isotonic_fit: x and y must be nonempty and of equal length");
  }
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] < x[i - 1]) throw std::invalid_argument("isotonic_fit: x must be nondecreasing");
  }

  // Group tied abscissae.
  std::vector<detail::IsoBlock> groups;
  std::vector<std::size_t> group_of(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (groups.empty() || x[i] != x[i - 1]) {
      groups.push_back({0.0, 0.0, 0.0, groups.size(), groups.size() + 1});
    }
    auto& g = groups.back();
    g.sum_wy += y[i];
    g.sum_wx += x[i];
    g.weight += 1.0;
    group_of[i] = groups.size() - 1;
  }

  std::vector<detail::IsoBlock> blocks;
  blocks.reserve(groups.size());
  for (const auto& g : groups) {
    blocks.push_back(g);
    while (blocks.size() > 1) {
      const auto& cur = blocks.back();
      const auto& prev = blocks[blocks.size() - 2];
      const bool violates = centered ? prev.mean() >= cur.mean() : prev.mean() > cur.mean();
      if (!violates) break;
      detail::IsoBlock merged = prev;
      merged.sum_wy += cur.sum_wy;
      merged.sum_wx += cur.sum_wx;
      merged.weight += cur.weight;
      merged.last = cur.last;
      blocks.pop_back();
      blocks.back() = merged;
    }
  }

  std::vector<double> group_fit(groups.size());
  if (!centered) {
    for (const auto& b : blocks)
      for (std::size_t g = b.first; g < b.last; ++g) group_fit[g] = b.mean();
  } else {
    std::size_t k = 0;  // anchor segment
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const double xg = groups[g].center();
      while (k + 1 < blocks.size() && blocks[k + 1].center() <= xg) ++k;
      if (xg <= blocks.front().center()) {
        group_fit[g] = blocks.front().mean();
      } else if (k + 1 >= blocks.size()) {
        group_fit[g] = blocks.back().mean();
      } else {
        const double x0 = blocks[k].center();
        const double x1 = blocks[k + 1].center();
        const double t = (xg - x0) / (x1 - x0);
        group_fit[g] = blocks[k].mean() + t * (blocks[k + 1].mean() - blocks[k].mean());
      }
    }
  }

  std::vector<double> fit(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) fit[i] = group_fit[group_of[i]];
  return fit;
}

/// Same as isotonic_fit for arbitrary x order; ties in x keep input order.
inline std::vector<double> isotonic_fit_unsorted(std::span<const double> x,
                                                 std::span<const double> y, bool centered) {
  if (x.size() != y.size()) throw std::invalid_argument("isotonic_fit: length mismatch");
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> xs(x.size()), ys(x.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    xs[k] = x[order[k]];
    ys[k] = y[order[k]];
  }
  const auto fs = isotonic_fit(xs, ys, centered);
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < order.size(); ++k) out[order[k]] = fs[k];
  return out;
}

}  // namespace mbias
