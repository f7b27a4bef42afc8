// SPDX-License-Identifier: Apache-2.0

#include "spt/allocation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "spt/container.hpp"
#include "spt/error.hpp"
#include "spt/model.hpp"

namespace spt {

using nlohmann::json;

const char* to_string(SigmaPolicy p) noexcept { return p == SigmaPolicy::module_param_count ? "module" : "paper"; }

const char* to_string(StructuredKind k) noexcept {
  switch (k) {
    case StructuredKind::none: return "none";
    case StructuredKind::lora: return "lora";
    case StructuredKind::adapter: return "adapter";
  }
  return "none";
}

const char* to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::frozen: return "frozen";
    case Verdict::unstructured: return "unstructured";
    case Verdict::structured: return "structured";
  }
  return "frozen";
}

SigmaPolicy parse_sigma_policy(std::string_view text) {
  if (text == "module" || text == "module_param_count") return SigmaPolicy::module_param_count;
  if (text == "paper" || text == "paper_formula") return SigmaPolicy::paper_formula;
  throw ArgumentError("unknown sigma policy '" + std::string(text) + "'");
}

StructuredKind parse_structured_kind(std::string_view text) {
  if (text == "none") return StructuredKind::none;
  if (text == "lora") return StructuredKind::lora;
  if (text == "adapter") return StructuredKind::adapter;
  throw ArgumentError("unknown structured kind '" + std::string(text) + "'");
}

namespace {

Verdict parse_verdict(std::string_view text) {
  if (text == "frozen") return Verdict::frozen;
  if (text == "unstructured") return Verdict::unstructured;
  if (text == "structured") return Verdict::structured;
  throw FormatError("unknown verdict '" + std::string(text) + "'");
}

struct Candidate {
  float score;
  std::uint32_t name_rank;
  std::uint32_t tensor;
  std::size_t index;
};

}  // namespace

std::set<std::string> default_exclusions(const TensorMap& layout, bool exclude_bias) {
  std::set<std::string> out;
  for (const auto& [name, t] : layout) {
    if (is_head(name) || (exclude_bias && is_bias(name))) out.insert(name);
  }
  return out;
}

std::size_t eligible_count(const SensitivityMap& sens, const std::set<std::string>& exclusions) {
  std::size_t n = 0;
  for (const auto& [name, t] : sens.scores) {
    if (!exclusions.contains(name)) n += t.size();
  }
  return n;
}

std::vector<Connection> select_top_tau(const SensitivityMap& sens, std::size_t tau,
                                       const std::set<std::string>& exclusions) {
  const std::size_t eligible = eligible_count(sens, exclusions);
  if (tau == 0 || tau > eligible) {
    throw ArgumentError("tau = " + std::to_string(tau) + " outside [1, " + std::to_string(eligible) +
                        "] eligible connections");
  }
  const auto& scores = sens.scores;
  std::vector<std::uint32_t> by_name(scores.size());
  std::iota(by_name.begin(), by_name.end(), 0U);
  std::sort(by_name.begin(), by_name.end(),
            [&](std::uint32_t a, std::uint32_t b) { return scores.entry(a).first < scores.entry(b).first; });
  std::vector<std::uint32_t> name_rank(scores.size());
  for (std::uint32_t r = 0; r < by_name.size(); ++r) name_rank[by_name[r]] = r;

  std::vector<Candidate> pool;
  pool.reserve(eligible);
  for (std::uint32_t t = 0; t < scores.size(); ++t) {
    const auto& [name, tensor] = scores.entry(t);
    if (exclusions.contains(name)) continue;
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      if (std::isnan(tensor[i])) throw ArgumentError("NaN sensitivity in '" + name + "'");
      pool.push_back({tensor[i], name_rank[t], t, i});
    }
  }
  auto better = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.name_rank != b.name_rank) return a.name_rank < b.name_rank;
    return a.index < b.index;
  };
  std::nth_element(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(tau - 1), pool.end(), better);
  std::vector<Connection> out;
  out.reserve(tau);
  for (std::size_t i = 0; i < tau; ++i) out.push_back({pool[i].tensor, pool[i].index});
  std::sort(out.begin(), out.end());
  return out;
}

std::map<std::string, Mask> build_masks(const std::vector<Connection>& connections, const TensorMap& layout) {
  std::map<std::string, Mask> masks;
  std::vector<Mask*> slots;
  slots.reserve(layout.size());
  for (const auto& [name, t] : layout) slots.push_back(&masks.emplace(name, Mask(t.shape())).first->second);
  for (const auto& c : connections) {
    if (c.tensor >= slots.size()) throw IndexError("connection names tensor " + std::to_string(c.tensor));
    slots[c.tensor]->set(c.index);
  }
  return masks;
}

std::size_t module_param_count(ModuleKind kind, std::size_t d_in, std::size_t d_out, std::size_t r) {
  if (kind == ModuleKind::lora) return r * (d_in + d_out);
  return 2 * r * d_out + r + d_out;
}

std::size_t sigma_for(ModuleKind kind, std::size_t d_in, std::size_t d_out, std::size_t r, SigmaPolicy policy) {
  if (d_in < 1 || d_out < 1 || r < 1) throw ArgumentError("sigma_for needs dims and rank >= 1");
  if (policy == SigmaPolicy::paper_formula) return 2 * d_in * d_out * r;
  return module_param_count(kind, d_in, d_out, r);
}

std::size_t AllocationPlan::total_trainable() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.trainable;
  return n;
}

std::size_t AllocationPlan::count(Verdict v) const {
  return static_cast<std::size_t>(
      std::count_if(tensors.begin(), tensors.end(), [v](const TensorPlan& t) { return t.verdict == v; }));
}

const TensorPlan& AllocationPlan::at(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw ConfigError("plan has no entry for '" + std::string(name) + "'");
}

AllocationPlan plan_from_connections(const TensorMap& layout, const std::vector<Connection>& selected,
                                     std::size_t tau, const PlanOptions& options) {
  AllocationPlan plan;
  plan.budget_tau = tau;
  plan.structured = options.structured;
  plan.rank = options.rank;
  plan.sigma_policy = options.sigma_policy;
  plan.exclude_bias = options.exclude_bias;
  if (options.structured != StructuredKind::none && options.rank < 1) {
    throw ArgumentError("structured tuning needs rank >= 1");
  }
  const ModuleKind kind = options.structured == StructuredKind::adapter ? ModuleKind::adapter : ModuleKind::lora;

  auto masks = build_masks(selected, layout);
  for (const auto& [name, t] : layout) {
    if (is_head(name)) {
      plan.always_trainable.push_back(name);
      plan.head_params += t.size();
      continue;
    }
    TensorPlan entry;
    entry.name = name;
    entry.shape = t.shape();
    Mask& mask = masks.at(name);
    entry.sensitive = mask.popcount();

    bool eligible = options.structured != StructuredKind::none && is_structured_eligible(name, t.shape());
    if (eligible) {
      const std::size_t d_in = t.shape()[0];
      const std::size_t d_out = t.shape()[1];
      if (options.rank > max_module_rank(d_in, d_out)) {
        plan.warnings.push_back(name + ": rank " + std::to_string(options.rank) + " exceeds min(d_in, d_out)/2; " +
                                "structured tuning disabled for this matrix");
        eligible = false;
      } else {
        entry.sigma = sigma_for(kind, d_in, d_out, options.rank, options.sigma_policy);
        if (entry.sigma > d_in * d_out) {
          plan.warnings.push_back(name + ": sigma " + std::to_string(entry.sigma) + " exceeds matrix size " +
                                  std::to_string(d_in * d_out));
        }
      }
    }

    if (eligible && entry.sensitive > 0 && entry.sensitive >= entry.sigma) {
      entry.verdict = Verdict::structured;
      entry.kind = kind;
      entry.rank = options.rank;
      entry.trainable = module_param_count(kind, t.shape()[0], t.shape()[1], options.rank);
    } else if (entry.sensitive > 0 && options.allow_unstructured) {
      entry.verdict = Verdict::unstructured;
      entry.trainable = entry.sensitive;
      entry.mask = std::move(mask);
    }
    plan.tensors.push_back(std::move(entry));
  }
  return plan;
}

AllocationPlan make_plan(const SensitivityMap& sens, std::size_t tau, const PlanOptions& options) {
  const auto exclusions = default_exclusions(sens.scores, options.exclude_bias);
  const auto selected = select_top_tau(sens, tau, exclusions);
  return plan_from_connections(sens.scores, selected, tau, options);
}

std::size_t resolve_budget(std::string_view budget, std::size_t total_params, std::size_t eligible) {
  const bool fraction = budget.find_first_of(".eE") != std::string_view::npos;
  if (fraction) {
    double f = 0.0;
    try {
      std::size_t used = 0;
      f = std::stod(std::string(budget), &used);
      if (used != budget.size()) throw ArgumentError("");
    } catch (const std::exception&) {
      throw ArgumentError("cannot parse budget '" + std::string(budget) + "'");
    }
    if (!(f > 0.0) || f > 1.0) throw ArgumentError("budget fraction must lie in (0, 1], got " + std::string(budget));
    const auto tau = static_cast<std::size_t>(std::llround(f * static_cast<double>(total_params)));
    return std::clamp<std::size_t>(tau, 1, eligible);
  }
  std::size_t tau = 0;
  auto [ptr, ec] = std::from_chars(budget.data(), budget.data() + budget.size(), tau);
  if (ec != std::errc{} || ptr != budget.data() + budget.size()) {
    throw ArgumentError("cannot parse budget '" + std::string(budget) + "'");
  }
  return tau;
}

void check_plan_matches(const AllocationPlan& plan, const TensorMap& params) {
  for (const auto& t : plan.tensors) {
    if (!params.contains(t.name)) throw ConfigError("plan names '" + t.name + "' which is not in the registry");
    if (params.at(t.name).shape() != t.shape) {
      throw ConfigError("plan shape " + to_string(t.shape) + " for '" + t.name + "' does not match registry " +
                        to_string(params.at(t.name).shape()));
    }
  }
  for (const auto& name : plan.always_trainable) {
    if (!params.contains(name)) throw ConfigError("plan names head tensor '" + name + "' which is not in the registry");
  }
  if (plan.tensors.size() + plan.always_trainable.size() != params.size()) {
    throw ConfigError("plan covers " + std::to_string(plan.tensors.size() + plan.always_trainable.size()) +
                      " tensors, registry has " + std::to_string(params.size()));
  }
}

std::string plan_to_json(const AllocationPlan& plan) {
  json doc;
  doc["format"] = "spt-plan/1";
  doc["budget_tau"] = plan.budget_tau;
  doc["structured"] = to_string(plan.structured);
  doc["rank"] = plan.rank;
  doc["sigma_policy"] = to_string(plan.sigma_policy);
  doc["exclude_bias"] = plan.exclude_bias;
  doc["always_trainable"] = plan.always_trainable;
  doc["head_params"] = plan.head_params;
  doc["total_trainable"] = plan.total_trainable();
  json tensors = json::array();
  for (const auto& t : plan.tensors) {
    json rec;
    rec["name"] = t.name;
    rec["shape"] = t.shape;
    rec["verdict"] = to_string(t.verdict);
    rec["sensitive"] = t.sensitive;
    rec["sigma"] = t.sigma;
    rec["trainable"] = t.trainable;
    if (t.verdict == Verdict::structured) {
      rec["kind"] = to_string(t.kind);
      rec["rank"] = t.rank;
    }
    tensors.push_back(std::move(rec));
  }
  doc["tensors"] = std::move(tensors);
  doc["warnings"] = plan.warnings;
  return doc.dump(2);
}

void save_plan(const std::filesystem::path& path, const AllocationPlan& plan) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out << plan_to_json(plan) << '\n';
  TensorMap masks;
  for (const auto& t : plan.tensors) {
    if (t.verdict == Verdict::unstructured) masks.add(t.name + ".mask", t.mask.to_tensor());
  }
  container::write(path.string() + ".masks", masks);
}

AllocationPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("plan '" + path.string() + "': " + e.what());
  }
  const TensorMap masks = container::read(path.string() + ".masks");
  AllocationPlan plan;
  try {
    plan.budget_tau = doc.at("budget_tau").get<std::size_t>();
    plan.structured = parse_structured_kind(doc.at("structured").get<std::string>());
    plan.rank = doc.at("rank").get<std::size_t>();
    plan.sigma_policy = parse_sigma_policy(doc.at("sigma_policy").get<std::string>());
    plan.exclude_bias = doc.value("exclude_bias", false);
    plan.always_trainable = doc.at("always_trainable").get<std::vector<std::string>>();
    plan.head_params = doc.at("head_params").get<std::size_t>();
    plan.warnings = doc.value("warnings", std::vector<std::string>{});
    for (const auto& rec : doc.at("tensors")) {
      TensorPlan t;
      t.name = rec.at("name").get<std::string>();
      t.shape = rec.at("shape").get<Shape>();
      t.verdict = parse_verdict(rec.at("verdict").get<std::string>());
      t.sensitive = rec.at("sensitive").get<std::size_t>();
      t.sigma = rec.at("sigma").get<std::size_t>();
      t.trainable = rec.at("trainable").get<std::size_t>();
      if (t.verdict == Verdict::structured) {
        t.kind = rec.at("kind").get<std::string>() == "adapter" ? ModuleKind::adapter : ModuleKind::lora;
        t.rank = rec.at("rank").get<std::size_t>();
      } else if (t.verdict == Verdict::unstructured) {
        t.mask = Mask::from_tensor(masks.at(t.name + ".mask"));
        if (t.mask.shape() != t.shape || t.mask.popcount() != t.trainable) {
          throw FormatError("mask for '" + t.name + "' disagrees with the plan record");
        }
      }
      plan.tensors.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw FormatError("plan '" + path.string() + "': " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError("plan '" + path.string() + "': " + e.what());
  }
  return plan;
}

}  // namespace spt
