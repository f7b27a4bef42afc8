// SPDX-License-Identifier: Apache-2.0

#include "spt/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "spt/error.hpp"

namespace spt {

using nlohmann::json;

namespace {

/// Reads keys out of one section and rejects any it does not know.
class Section {
 public:
  Section(const json& root, const char* name) : name_(name) {
    if (!root.contains(name)) return;
    node_ = &root.at(name);
    if (!node_->is_object()) throw ConfigError(std::string("section '") + name + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (node_ == nullptr || !node_->contains(key)) return;
    try {
      out = node_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string(name_) + "." + key + " has the wrong type");
    }
  }

  void size(const char* key, std::size_t& out) {
    seen_.insert(key);
    if (node_ == nullptr || !node_->contains(key)) return;
    const json& v = node_->at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(std::string(name_) + "." + key + " must be a non-negative integer");
    }
    out = v.get<std::size_t>();
  }

  void mark(const char* key) { seen_.insert(key); }

  bool has(const char* key) const { return node_ != nullptr && node_->contains(key); }

  void finish() const {
    if (node_ == nullptr) return;
    for (const auto& item : node_->items()) {
      if (!seen_.contains(item.key())) throw ConfigError("unknown key " + std::string(name_) + "." + item.key());
    }
  }

 private:
  const char* name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

void read_train(Section& s, TrainConfig& t) {
  s.size("batch", t.batch);
  s.read("lr", t.lr);
  s.read("wd", t.weight_decay);
  s.size("epochs", t.epochs);
  s.size("eval_every", t.eval_every);
  s.read("stop_accuracy", t.stop_accuracy);
  s.read("augment_noise", t.augment_noise);
  std::string schedule = "cosine";
  s.read("schedule", schedule);
  if (schedule != "cosine") throw ConfigError("unsupported schedule '" + schedule + "'");
  s.finish();
}

template <typename F>
auto as_config(F&& parse) {
  try {
    return parse();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

json train_json(const TrainConfig& t) {
  return {{"batch", t.batch},           {"lr", t.lr},
          {"wd", t.weight_decay},       {"epochs", t.epochs},
          {"eval_every", t.eval_every}, {"stop_accuracy", t.stop_accuracy},
          {"augment_noise", t.augment_noise}, {"schedule", "cosine"}};
}

}  // namespace

PlanOptions SptSettings::plan_options() const {
  PlanOptions p;
  p.structured = structured;
  p.rank = rank;
  p.sigma_policy = sigma_policy;
  p.exclude_bias = exclude_bias;
  p.allow_unstructured = allow_unstructured;
  return p;
}

SensitivityOptions SptSettings::sensitivity_options() const {
  SensitivityOptions o;
  o.samples = samples;
  o.batch = sens_batch;
  o.workers = workers;
  return o;
}

void ExperimentConfig::validate() const {
  model.validate();
  task.validate();
  pretrain.validate();
  train.validate();
  if (model.num_classes != task.classes) throw ConfigError("model.classes and task.classes differ");
  if (model.seq != task.seq) throw ConfigError("model.seq and task.seq differ");
  if (model.input_dim != task.dim) throw ConfigError("model input width and task.dim differ");
  if (spt.rank < 1) throw ConfigError("spt.rank must be >= 1");
  if (spt.samples < 1) throw ConfigError("spt.samples_C must be >= 1");
  if (spt.sens_batch < 1 || spt.workers < 1) throw ConfigError("spt.sens_batch and spt.workers must be >= 1");
}

ExperimentConfig parse_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& item : root.items()) {
    static const std::set<std::string> known{"seed", "model", "task", "pretrain", "train", "spt"};
    if (!known.contains(item.key())) throw ConfigError("unknown section '" + item.key() + "'");
  }

  ExperimentConfig c;
  // Pre-training stops early; fine-tuning always runs its full schedule.
  c.pretrain.epochs = 50;
  c.train.stop_accuracy = 0.0;
  if (root.contains("seed")) {
    if (!root["seed"].is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
    c.seed = root["seed"].get<std::uint64_t>();
  }

  Section task(root, "task");
  task.size("classes", c.task.classes);
  task.size("dim", c.task.dim);
  task.size("seq", c.task.seq);
  task.read("theta", c.task.theta);
  task.read("permute", c.task.permute);
  task.read("noise", c.task.noise);
  task.size("train", c.task.train);
  task.size("val", c.task.val);
  task.size("source_train", c.task.source_train);
  task.size("source_val", c.task.source_val);
  task.finish();

  // The model inherits the task's shape unless told otherwise.
  c.model.num_classes = c.task.classes;
  c.model.seq = c.task.seq;
  c.model.input_dim = c.task.dim;
  Section model(root, "model");
  std::string variant = to_string(c.model.variant);
  model.read("variant", variant);
  c.model.variant = parse_variant(variant);
  model.size("depth", c.model.depth);
  model.size("width", c.model.width);
  model.size("heads", c.model.heads);
  model.size("mlp_ratio", c.model.mlp_ratio);
  model.size("classes", c.model.num_classes);
  model.size("seq", c.model.seq);
  model.finish();
  if (model.has("seq") && !task.has("seq")) c.task.seq = c.model.seq;
  if (model.has("classes") && !task.has("classes")) c.task.classes = c.model.num_classes;

  Section pre(root, "pretrain");
  read_train(pre, c.pretrain);
  Section train(root, "train");
  read_train(train, c.train);

  Section spt(root, "spt");
  if (spt.has("budget")) {
    const json& b = root["spt"]["budget"];
    if (b.is_string()) {
      c.spt.budget = b.get<std::string>();
    } else if (b.is_number_integer()) {
      c.spt.budget = std::to_string(b.get<long long>());
    } else if (b.is_number()) {
      std::ostringstream os;
      os.precision(17);
      os << std::showpoint << b.get<double>();
      c.spt.budget = os.str();
    } else {
      throw ConfigError("spt.budget must be a number or string");
    }
  }
  spt.mark("budget");
  std::string structured = to_string(c.spt.structured);
  spt.read("structured", structured);
  c.spt.structured = as_config([&] { return parse_structured_kind(structured); });
  spt.size("rank", c.spt.rank);
  std::string sigma = to_string(c.spt.sigma_policy);
  spt.read("sigma_policy", sigma);
  c.spt.sigma_policy = as_config([&] { return parse_sigma_policy(sigma); });
  spt.size("samples_C", c.spt.samples);
  spt.read("exclude_bias", c.spt.exclude_bias);
  spt.read("allow_unstructured", c.spt.allow_unstructured);
  std::string criterion = c.spt.criterion == Criterion::magnitude ? "magnitude" : "gradient";
  spt.read("criterion", criterion);
  if (criterion == "gradient") {
    c.spt.criterion = Criterion::gradient_squared;
  } else if (criterion == "magnitude") {
    c.spt.criterion = Criterion::magnitude;
  } else {
    throw ConfigError("spt.criterion must be 'gradient' or 'magnitude'");
  }
  spt.size("sens_batch", c.spt.sens_batch);
  spt.size("workers", c.spt.workers);
  std::string act = c.spt.activation == Activation::gelu ? "gelu" : "relu";
  spt.read("activation", act);
  if (act == "relu") {
    c.spt.activation = Activation::relu;
  } else if (act == "gelu") {
    c.spt.activation = Activation::gelu;
  } else {
    throw ConfigError("spt.activation must be 'relu' or 'gelu'");
  }
  spt.finish();

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["model"] = {{"variant", to_string(c.model.variant)}, {"depth", c.model.depth},
                {"width", c.model.width},                {"heads", c.model.heads},
                {"mlp_ratio", c.model.mlp_ratio},        {"classes", c.model.num_classes},
                {"seq", c.model.seq}};
  j["task"] = {{"classes", c.task.classes}, {"dim", c.task.dim},     {"seq", c.task.seq},
               {"theta", c.task.theta},     {"permute", c.task.permute}, {"noise", c.task.noise},
               {"train", c.task.train},     {"val", c.task.val},     {"source_train", c.task.source_train},
               {"source_val", c.task.source_val}};
  j["pretrain"] = train_json(c.pretrain);
  j["train"] = train_json(c.train);
  j["spt"] = {{"budget", c.spt.budget},
              {"structured", to_string(c.spt.structured)},
              {"rank", c.spt.rank},
              {"sigma_policy", to_string(c.spt.sigma_policy)},
              {"samples_C", c.spt.samples},
              {"exclude_bias", c.spt.exclude_bias},
              {"allow_unstructured", c.spt.allow_unstructured},
              {"criterion", c.spt.criterion == Criterion::magnitude ? "magnitude" : "gradient"},
              {"sens_batch", c.spt.sens_batch},
              {"workers", c.spt.workers},
              {"activation", c.spt.activation == Activation::gelu ? "gelu" : "relu"}};
  return j.dump(2);
}

}  // namespace spt
