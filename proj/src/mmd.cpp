// SPDX-License-Identifier: Apache-2.0

#include "spt/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "spt/error.hpp"

namespace spt {

namespace {

double squared_distance(const float* x, const float* y, std::size_t f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < f; ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    acc += d * d;
  }
  return acc;
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

DomainGapReport compute_mmd(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("compute_mmd expects [n x f] sample matrices");
  if (a.cols() != b.cols()) {
    throw DimensionError("feature widths differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const std::size_t n = a.rows();
  const std::size_t m = b.rows();
  if (n < 2 || m < 2) throw ArgumentError("compute_mmd needs at least 2 samples per side");
  const std::size_t f = a.cols();

  // Pooled rows: [0, n) from a, [n, n+m) from b.
  const std::size_t total = n + m;
  auto row = [&](std::size_t i) { return i < n ? a.data() + i * f : b.data() + (i - n) * f; };
  std::vector<double> d2(total * total, 0.0);
  std::vector<double> dist;
  dist.reserve(total * (total - 1) / 2);
  for (std::size_t i = 0; i < total; ++i) {
    for (std::size_t j = i + 1; j < total; ++j) {
      const double s = squared_distance(row(i), row(j), f);
      d2[i * total + j] = d2[j * total + i] = s;
      dist.push_back(std::sqrt(s));
    }
  }
  double h = median(std::move(dist));
  if (!(h > 0.0)) h = 1.0;
  const double gamma = 1.0 / (2.0 * h * h);
  auto k = [&](std::size_t i, std::size_t j) { return std::exp(-gamma * d2[i * total + j]); };

  double xx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) xx += 2.0 * k(i, j);
  }
  double yy = 0.0;
  for (std::size_t i = n; i < total; ++i) {
    for (std::size_t j = i + 1; j < total; ++j) yy += 2.0 * k(i, j);
  }
  double xy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = n; j < total; ++j) xy += k(i, j);
  }
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  const double mmd2 = xx / (dn * (dn - 1.0)) + yy / (dm * (dm - 1.0)) - 2.0 * xy / (dn * dm);

  DomainGapReport r;
  r.mmd = std::max(0.0, mmd2);
  r.bandwidth = h;
  r.n_a = n;
  r.n_b = m;
  return r;
}

}  // namespace spt
