#pragma once

#include <json.hpp>
#include <string>

#include "cten/common.hpp"
#include "cten/ipd.hpp"
#include "cten/model.hpp"
#include "cten/train.hpp"

// JSON schema for experiment configs and run reports. Parsing is strict:
// unknown keys are rejected so typos in config files or --set overrides fail
// loudly instead of silently using a default.

namespace cten {

using json = nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const json& j,
                                std::initializer_list<const char*> allowed,
                                const std::string& ctx) {
  if (!j.is_object()) throw DomainError(ctx + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed)
      if (it.key() == a) {
        known = true;
        break;
      }
    if (!known) throw DomainError(ctx + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void maybe_get(const json& j, const char* key, T& out, const std::string& ctx) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DomainError(ctx + "." + key + ": " + e.what());
  }
}

}  // namespace detail

// ---- model ----------------------------------------------------------------

inline json to_json(const ModelSpec& s) {
  return json{{"input_channels", s.input_channels},
              {"hidden", s.hidden},
              {"rank", s.rank},
              {"n_classes", s.n_classes},
              {"mlp_hidden", s.mlp_hidden},
              {"ffn_hidden", s.ffn_hidden},
              {"alpha", s.alpha},
              {"use_phase", s.ablation.use_phase},
              {"use_interaction", s.ablation.use_interaction},
              {"pooling", pooling_name(s.ablation.pooling)},
              {"attention_heads", s.ablation.attention_heads}};
}

inline ModelSpec model_from_json(const json& j, const std::string& ctx = "model") {
  detail::reject_unknown_keys(
      j,
      {"input_channels", "hidden", "rank", "n_classes", "mlp_hidden",
       "ffn_hidden", "alpha", "use_phase", "use_interaction", "pooling",
       "attention_heads"},
      ctx);
  ModelSpec s;
  detail::maybe_get(j, "input_channels", s.input_channels, ctx);
  detail::maybe_get(j, "hidden", s.hidden, ctx);
  detail::maybe_get(j, "rank", s.rank, ctx);
  detail::maybe_get(j, "n_classes", s.n_classes, ctx);
  detail::maybe_get(j, "mlp_hidden", s.mlp_hidden, ctx);
  detail::maybe_get(j, "ffn_hidden", s.ffn_hidden, ctx);
  detail::maybe_get(j, "alpha", s.alpha, ctx);
  detail::maybe_get(j, "use_phase", s.ablation.use_phase, ctx);
  detail::maybe_get(j, "use_interaction", s.ablation.use_interaction, ctx);
  if (j.contains("pooling")) {
    const std::string p = j.at("pooling").get<std::string>();
    if (p == "mean_max")
      s.ablation.pooling = Pooling::kMeanMax;
    else if (p == "mean")
      s.ablation.pooling = Pooling::kMean;
    else if (p == "max")
      s.ablation.pooling = Pooling::kMax;
    else
      throw DomainError(ctx + ".pooling: unknown mode '" + p + "'");
  }
  detail::maybe_get(j, "attention_heads", s.ablation.attention_heads, ctx);
  return s;
}

// ---- dataset ----------------------------------------------------------------

inline json to_json(const DatasetConfig& d) {
  return json{{"time_steps", d.ipd.time_steps},
              {"dt", d.ipd.dt},
              {"n_ear", d.ipd.n_ear},
              {"n_classes", d.ipd.n_classes},
              {"carrier_freq", d.ipd.carrier_freq},
              {"max_spike_prob", d.ipd.max_spike_prob},
              {"random_onset_phase", d.ipd.random_onset_phase},
              {"n_train", d.n_train},
              {"n_test", d.n_test},
              {"file", d.file},
              {"normalize", d.normalize}};
}

inline DatasetConfig dataset_from_json(const json& j,
                                       const std::string& ctx = "dataset") {
  detail::reject_unknown_keys(
      j,
      {"time_steps", "dt", "n_ear", "n_classes", "carrier_freq",
       "max_spike_prob", "random_onset_phase", "n_train", "n_test", "file",
       "normalize"},
      ctx);
  DatasetConfig d;
  detail::maybe_get(j, "time_steps", d.ipd.time_steps, ctx);
  detail::maybe_get(j, "dt", d.ipd.dt, ctx);
  detail::maybe_get(j, "n_ear", d.ipd.n_ear, ctx);
  detail::maybe_get(j, "n_classes", d.ipd.n_classes, ctx);
  detail::maybe_get(j, "carrier_freq", d.ipd.carrier_freq, ctx);
  detail::maybe_get(j, "max_spike_prob", d.ipd.max_spike_prob, ctx);
  detail::maybe_get(j, "random_onset_phase", d.ipd.random_onset_phase, ctx);
  detail::maybe_get(j, "n_train", d.n_train, ctx);
  detail::maybe_get(j, "n_test", d.n_test, ctx);
  detail::maybe_get(j, "file", d.file, ctx);
  detail::maybe_get(j, "normalize", d.normalize, ctx);
  return d;
}

// ---- training ----------------------------------------------------------------

inline json to_json(const TrainConfig& t) {
  return json{{"train",
               {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_eps", t.adam_eps},
                {"seeds", t.seeds}}},
              {"model", to_json(t.model)},
              {"dataset", to_json(t.dataset)}};
}

inline TrainConfig train_config_from_json(const json& j) {
  detail::reject_unknown_keys(j, {"train", "model", "dataset"}, "config");
  TrainConfig t;
  if (j.contains("train")) {
    const json& jt = j.at("train");
    detail::reject_unknown_keys(jt,
                                {"epochs", "batch_size", "learning_rate",
                                 "adam_beta1", "adam_beta2", "adam_eps", "seeds"},
                                "train");
    detail::maybe_get(jt, "epochs", t.epochs, "train");
    detail::maybe_get(jt, "batch_size", t.batch_size, "train");
    detail::maybe_get(jt, "learning_rate", t.learning_rate, "train");
    detail::maybe_get(jt, "adam_beta1", t.adam_beta1, "train");
    detail::maybe_get(jt, "adam_beta2", t.adam_beta2, "train");
    detail::maybe_get(jt, "adam_eps", t.adam_eps, "train");
    detail::maybe_get(jt, "seeds", t.seeds, "train");
  }
  if (j.contains("model")) t.model = model_from_json(j.at("model"));
  if (j.contains("dataset")) t.dataset = dataset_from_json(j.at("dataset"));
  return t;
}

// ---- reports ----------------------------------------------------------------

inline json to_json(const SeedResult& r) {
  json j{{"seed", r.seed},
         {"final_test_accuracy", r.final_test_accuracy},
         {"wall_time_s", r.wall_time_s},
         {"train_loss_curve", r.train_loss_curve},
         {"failed", r.failed}};
  if (r.failed) j["error"] = r.error;
  return j;
}

inline json to_json(const RunReport& r) {
  json per_seed = json::array();
  for (const SeedResult& s : r.per_seed) per_seed.push_back(to_json(s));
  json aggregate{{"mean_acc", r.mean_acc},
                 {"std_acc", r.std_defined ? json(r.std_acc) : json()},
                 {"best_acc", r.best_acc},
                 {"worst_acc", r.worst_acc},
                 {"mean_time_s", r.mean_time_s},
                 {"parameter_count", r.parameter_count},
                 {"n_seeds", r.per_seed.size()},
                 {"n_failed", r.n_failed}};
  return json{{"schema", "cten-run-report/1"},
              {"build", build_id()},
              {"config", to_json(r.config)},
              {"parameter_count", r.parameter_count},
              {"per_seed", per_seed},
              {"aggregate", aggregate}};
}

// ---- dotted-path overrides ---------------------------------------------------

/// Applies `--set path.to.key=value` onto a config JSON tree. The path must
/// address an existing location (or a new key inside an existing object);
/// values parse as JSON when possible, else as strings.
inline void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw DomainError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted string
  }
  json* node = &root;
  std::size_t pos = 0;
  for (;;) {
    const auto dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot - pos);
    if (key.empty()) throw DomainError("override '" + assignment + "': empty key");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key) || !(*node)[key].is_object())
      throw DomainError("override '" + assignment + "': no object at '" +
                        path.substr(0, dot) + "'");
    node = &(*node)[key];
    pos = dot + 1;
  }
}

}  // namespace cten
