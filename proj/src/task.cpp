// SPDX-License-Identifier: Apache-2.0

#include "spt/task.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "spt/error.hpp"
#include "spt/random.hpp"

namespace spt {

namespace {

using Vec = std::vector<double>;

Vec random_unit(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v(dim);
  double norm = 0.0;
  while (norm < 1e-6) {
    for (auto& x : v) x = n(rng);
    norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  }
  for (auto& x : v) x /= norm;
  return v;
}

/// Rotation by theta inside span{u, v}, identity on the orthogonal complement.
struct PlaneRotation {
  Vec u;
  Vec v;
  double theta = 0.0;

  void apply(float* x) const {
    double a = 0.0;
    double b = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      a += u[i] * x[i];
      b += v[i] * x[i];
    }
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double ra = c * a - s * b;
    const double rb = s * a + c * b;
    for (std::size_t i = 0; i < u.size(); ++i) {
      x[i] = static_cast<float>(x[i] + (ra - a) * u[i] + (rb - b) * v[i]);
    }
  }
};

PlaneRotation random_plane(Rng& rng, std::size_t dim, double theta) {
  PlaneRotation r;
  r.theta = theta;
  r.u = random_unit(rng, dim);
  for (;;) {
    Vec w = random_unit(rng, dim);
    const double proj = std::inner_product(w.begin(), w.end(), r.u.begin(), 0.0);
    for (std::size_t i = 0; i < dim; ++i) w[i] -= proj * r.u[i];
    const double norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
    if (norm < 1e-6) continue;
    for (auto& x : w) x /= norm;
    r.v = std::move(w);
    return r;
  }
}

Dataset sample_split(const TaskSpec& spec, const std::vector<Vec>& means, std::size_t count, Rng& rng) {
  Dataset d;
  d.features = Tensor({count, spec.seq, spec.dim});
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) d.labels[i] = static_cast<int>(i % spec.classes);
  std::shuffle(d.labels.begin(), d.labels.end(), rng);
  std::normal_distribution<double> noise(0.0, spec.noise);
  for (std::size_t i = 0; i < count; ++i) {
    const Vec& mean = means[static_cast<std::size_t>(d.labels[i])];
    for (std::size_t t = 0; t < spec.seq; ++t) {
      float* token = d.features.data() + (i * spec.seq + t) * spec.dim;
      for (std::size_t c = 0; c < spec.dim; ++c) token[c] = static_cast<float>(mean[c] + noise(rng));
    }
  }
  return d;
}

}  // namespace

void TaskSpec::validate() const {
  if (classes < 1 || dim < 1 || seq < 1 || train < 1 || val < 1 || source_train < 1 || source_val < 1) {
    throw ConfigError("task counts and dimensions must be >= 1");
  }
  if (!(theta >= 0.0 && theta <= std::numbers::pi)) throw ConfigError("task theta must lie in [0, pi]");
  if (!(noise >= 0.0)) throw ConfigError("task noise must be >= 0");
  if (dim < 2 && theta != 0.0) throw ConfigError("rotation needs dim >= 2");
}

TaskData generate_task(const TaskSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = derive_rng(seed, 0x7461736bULL);
  std::vector<Vec> means;
  means.reserve(spec.classes);
  for (std::size_t c = 0; c < spec.classes; ++c) means.push_back(random_unit(rng, spec.dim));

  const PlaneRotation rotation = spec.dim >= 2 ? random_plane(rng, spec.dim, spec.theta) : PlaneRotation{};

  std::vector<int> perm(spec.classes);
  std::iota(perm.begin(), perm.end(), 0);
  // A derangement: every class moves, so a frozen source head cannot beat chance.
  auto has_fixed_point = [&] {
    for (std::size_t c = 0; c < perm.size(); ++c) {
      if (perm[c] == static_cast<int>(c)) return true;
    }
    return false;
  };
  if (spec.permute && spec.classes > 1) {
    while (has_fixed_point()) std::shuffle(perm.begin(), perm.end(), rng);
  }

  TaskData out;
  Rng source_rng = derive_rng(seed, 1);
  out.source.train = sample_split(spec, means, spec.source_train, source_rng);
  out.source.val = sample_split(spec, means, spec.source_val, source_rng);
  out.source.train.task_id = out.source.val.task_id = 0;

  Rng target_rng = derive_rng(seed, 2);
  for (Dataset* d : {&out.target.train, &out.target.val}) {
    *d = sample_split(spec, means, d == &out.target.train ? spec.train : spec.val, target_rng);
    d->task_id = 1;
    if (spec.theta != 0.0) {
      const std::size_t tokens = d->size() * spec.seq;
      for (std::size_t t = 0; t < tokens; ++t) rotation.apply(d->features.data() + t * spec.dim);
    }
    for (auto& label : d->labels) label = perm[static_cast<std::size_t>(label)];
  }
  return out;
}

}  // namespace spt
