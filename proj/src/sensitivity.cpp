// SPDX-License-Identifier: Apache-2.0

#include "spt/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "spt/container.hpp"
#include "spt/error.hpp"

namespace spt {

namespace {

constexpr std::string_view kSensSuffix = ".sens";

/// A recorded loss over one contiguous sample range.
struct BatchGraph {
  Tape tape;
  Var loss;
  std::vector<Var> params;  // aligned with the ParameterStore
};

using BatchBuilder = std::function<BatchGraph(std::size_t begin, std::size_t end)>;

void accumulate(const GradientSnapshot& grads, const BatchGraph& g, const ParameterStore& params, Criterion criterion,
                float count, SensitivityMap& map) {
  for (std::size_t t = 0; t < params.size(); ++t) {
    const Tensor& gr = grads[g.params[t]];
    const Tensor& w = params.entry(t).second;
    Tensor& s = map.scores.entry(t).second;
    if (criterion == Criterion::gradient_squared) {
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += count * gr[i] * gr[i];
    } else {
      for (std::size_t i = 0; i < s.size(); ++i) {
        const float gw = gr[i] * w[i];
        s[i] += count * gw * gw;
      }
    }
  }
}

void score_range(const ParameterStore& params, const BatchBuilder& build, Criterion criterion, std::size_t batch,
                 std::size_t begin, std::size_t end, SensitivityMap& map) {
  for (std::size_t lo = begin; lo < end; lo += batch) {
    const std::size_t hi = std::min(end, lo + batch);
    BatchGraph g = build(lo, hi);
    if (!std::isfinite(g.tape.value(g.loss)[0])) {
      for (std::size_t s = lo; s < hi; ++s) {
        BatchGraph one = build(s, s + 1);
        if (!std::isfinite(one.tape.value(one.loss)[0])) {
          throw NumericalError("non-finite loss at sample " + std::to_string(s));
        }
      }
      throw NumericalError("non-finite loss in samples [" + std::to_string(lo) + ", " + std::to_string(hi) + ")");
    }
    GradientSnapshot grads = g.tape.backward(g.loss);
    accumulate(grads, g, params, criterion, static_cast<float>(hi - lo), map);
    map.samples_used += hi - lo;
  }
}

SensitivityMap run_scoring(const ParameterStore& params, const BatchBuilder& build, Criterion criterion,
                           const SensitivityOptions& options) {
  if (options.samples == 0) throw ArgumentError("sample count C must be positive");
  if (options.batch == 0) throw ArgumentError("sensitivity batch must be positive");
  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, options.samples);

  std::vector<SensitivityMap> shards(workers, zero_map(params));
  if (workers == 1) {
    score_range(params, build, criterion, options.batch, 0, options.samples, shards[0]);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = options.samples * w / workers;
      const std::size_t end = options.samples * (w + 1) / workers;
      threads.emplace_back([&, w, begin, end] {
        try {
          score_range(params, build, criterion, options.batch, begin, end, shards[w]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  SensitivityMap out = std::move(shards[0]);
  for (std::size_t w = 1; w < workers; ++w) out = merge_maps(out, shards[w]);
  return out;
}

SensitivityMap model_scores(const ModelConfig& config, const ParameterStore& params, const Dataset& data,
                            Criterion criterion, const SensitivityOptions& options) {
  if (options.samples > data.size()) {
    throw ArgumentError("C = " + std::to_string(options.samples) + " exceeds the " + std::to_string(data.size()) +
                        " available samples");
  }
  data.validate(config.num_classes);
  const GradPolicy policy = GradPolicy::all_params(params);
  BatchBuilder build = [&](std::size_t begin, std::size_t end) {
    Dataset part = data.slice(begin, end);
    BatchGraph g;
    ForwardGraph fg = forward(g.tape, config, params, part.features, {}, policy);
    g.loss = g.tape.cross_entropy(fg.logits, part.labels);
    g.params = std::move(fg.params);
    return g;
  };
  return run_scoring(params, build, criterion, options);
}

}  // namespace

SensitivityMap zero_map(const TensorMap& layout) {
  SensitivityMap map;
  for (const auto& [name, t] : layout) map.scores.add(name, Tensor(t.shape()));
  return map;
}

SensitivityMap score_parameters(const ParameterStore& params, const LossFn& loss, Criterion criterion,
                                const SensitivityOptions& options) {
  BatchBuilder build = [&](std::size_t begin, std::size_t end) {
    BatchGraph g;
    for (const auto& [name, t] : params) g.params.push_back(g.tape.leaf(t, true));
    g.loss = loss(g.tape, g.params, begin, end);
    return g;
  };
  return run_scoring(params, build, criterion, options);
}

SensitivityMap compute_sensitivity(const ModelConfig& config, const ParameterStore& params, const Dataset& data,
                                   const SensitivityOptions& options) {
  return model_scores(config, params, data, Criterion::gradient_squared, options);
}

SensitivityMap compute_importance_magnitude(const ModelConfig& config, const ParameterStore& params,
                                            const Dataset& data, const SensitivityOptions& options) {
  return model_scores(config, params, data, Criterion::magnitude, options);
}

SensitivityMap merge_maps(const SensitivityMap& a, const SensitivityMap& b) {
  if (!same_layout(a.scores, b.scores)) throw ContractError("merge_maps: sensitivity maps are not shape-aligned");
  SensitivityMap out = a;
  for (std::size_t t = 0; t < out.scores.size(); ++t) {
    Tensor& dst = out.scores.entry(t).second;
    const Tensor& src = b.scores.entry(t).second;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  out.samples_used = a.samples_used + b.samples_used;
  return out;
}

void save_sensitivity(const std::filesystem::path& path, const SensitivityMap& map) {
  TensorMap out;
  for (const auto& [name, t] : map.scores) out.add(name + std::string(kSensSuffix), t);
  out.add("samples_used", Tensor::scalar(static_cast<float>(map.samples_used)));
  container::write(path, out);
}

SensitivityMap load_sensitivity(const std::filesystem::path& path) {
  TensorMap in = container::read(path);
  SensitivityMap map;
  for (auto& [name, t] : in) {
    if (name == "samples_used") {
      map.samples_used = static_cast<std::size_t>(t[0]);
    } else if (name.ends_with(kSensSuffix)) {
      map.scores.add(name.substr(0, name.size() - kSensSuffix.size()), t);
    } else {
      throw FormatError("unexpected entry '" + name + "' in sensitivity file");
    }
  }
  return map;
}

}  // namespace spt
