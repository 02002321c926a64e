#include "uags/config.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>

namespace uags {

using nlohmann::json;

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw InvalidParameter(std::string("config: ") + what);
  };
  require(iterations >= 0, "iterations must be >= 0");
  require(ua_start >= 0 && ua_start <= iterations, "ua_start must lie in [0, iterations]");
  require(warmup >= 0, "warmup must be >= 0");
  require(cache_size >= 1 && cache_period >= 1 && uncertainty_period >= 1,
          "cache_size and all periods must be >= 1");
  require(sh_degree >= 0 && sh_degree <= kMaxShDegree, "sh_degree must be 0 or 1");
  require(weights.grid >= 0 && weights.data >= 0 && weights.ua_diff >= 0 && weights.ua_tv >= 0,
          "loss weights must be >= 0");
  require(densify.interval >= 1, "densify.interval must be >= 1");
  require(refiner_strength >= 0 && refiner_strength <= 1, "refiner.strength must lie in [0, 1]");
  require(refiner_timeout > 0, "refiner.timeout must be positive");
  require(checkpoint_every >= 0, "checkpoint_every must be >= 0");
  for (double v : {lr.position, lr.position_final, lr.features, lr.opacity, lr.scale, lr.rotation,
                   lr.deformation}) {
    require(v >= 0, "learning rates must be >= 0");
  }
}

namespace {

json to_json(const TrainConfig& c) {
  return {
      {"schema_version", kConfigSchemaVersion},
      {"iterations", c.iterations},
      {"ua_start", c.ua_start},
      {"ua_enabled", c.ua_enabled},
      {"ua_tv_uniform", c.ua_tv_uniform},
      {"warmup", c.warmup},
      {"cache_size", c.cache_size},
      {"cache_period", c.cache_period},
      {"uncertainty_period", c.uncertainty_period},
      {"sh_degree", c.sh_degree},
      {"background", {c.background.x(), c.background.y(), c.background.z()}},
      {"seed", c.seed},
      {"precision", c.precision == Precision::Float32 ? "float32" : "float64"},
      {"weights",
       {{"grid", c.weights.grid},
        {"data", c.weights.data},
        {"ua_diff", c.weights.ua_diff},
        {"ua_tv", c.weights.ua_tv}}},
      {"uncertainty", {{"c0", c.c0}, {"c1", c.c1}}},
      {"lr",
       {{"position", c.lr.position},
        {"position_final", c.lr.position_final},
        {"features", c.lr.features},
        {"opacity", c.lr.opacity},
        {"scale", c.lr.scale},
        {"rotation", c.lr.rotation},
        {"deformation", c.lr.deformation}}},
      {"densify",
       {{"from", c.densify.from},
        {"until", c.densify.until},
        {"interval", c.densify.interval},
        {"grad_threshold", c.densify.grad_threshold},
        {"percent_dense", c.densify.percent_dense},
        {"min_opacity", c.densify.min_opacity},
        {"max_primitives", c.densify.max_primitives},
        {"dynamic_init", c.densify.dynamic_init},
        {"dynamic_budget", c.densify.dynamic_budget}}},
      {"deformation",
       {{"enabled", c.deformation_enabled},
        {"feature_dim", c.deformation.feature_dim},
        {"spatial_res", c.deformation.spatial_res},
        {"temporal_res", c.deformation.temporal_res},
        {"hidden_dim", c.deformation.hidden_dim}}},
      {"refiner",
       {{"strength", c.refiner_strength},
        {"prompt", c.refiner_prompt},
        {"timeout", c.refiner_timeout}}},
      {"checkpoint_every", c.checkpoint_every},
  };
}

TrainConfig from_json(const json& j) {
  TrainConfig c;
  c.iterations = j.at("iterations").get<int>();
  c.ua_start = j.at("ua_start").get<int>();
  c.ua_enabled = j.at("ua_enabled").get<bool>();
  c.ua_tv_uniform = j.at("ua_tv_uniform").get<bool>();
  c.warmup = j.at("warmup").get<int>();
  c.cache_size = j.at("cache_size").get<int>();
  c.cache_period = j.at("cache_period").get<int>();
  c.uncertainty_period = j.at("uncertainty_period").get<int>();
  c.sh_degree = j.at("sh_degree").get<int>();
  const auto bg = j.at("background").get<std::vector<double>>();
  if (bg.size() != 3) throw InvalidParameter("config: background must hold 3 numbers");
  c.background = Vec3(bg[0], bg[1], bg[2]);
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto prec = j.at("precision").get<std::string>();
  if (prec != "float32" && prec != "float64") {
    throw InvalidParameter("config: precision must be float32 or float64");
  }
  c.precision = prec == "float32" ? Precision::Float32 : Precision::Float64;
  const auto& w = j.at("weights");
  c.weights = {w.at("grid").get<double>(), w.at("data").get<double>(),
               w.at("ua_diff").get<double>(), w.at("ua_tv").get<double>()};
  c.c0 = j.at("uncertainty").at("c0").get<double>();
  c.c1 = j.at("uncertainty").at("c1").get<double>();
  const auto& lr = j.at("lr");
  c.lr = {lr.at("position").get<double>(),  lr.at("position_final").get<double>(),
          lr.at("features").get<double>(),  lr.at("opacity").get<double>(),
          lr.at("scale").get<double>(),     lr.at("rotation").get<double>(),
          lr.at("deformation").get<double>()};
  const auto& d = j.at("densify");
  c.densify.from = d.at("from").get<int>();
  c.densify.until = d.at("until").get<int>();
  c.densify.interval = d.at("interval").get<int>();
  c.densify.grad_threshold = d.at("grad_threshold").get<double>();
  c.densify.percent_dense = d.at("percent_dense").get<double>();
  c.densify.min_opacity = d.at("min_opacity").get<double>();
  c.densify.max_primitives = d.at("max_primitives").get<std::size_t>();
  c.densify.dynamic_init = d.at("dynamic_init").get<bool>();
  c.densify.dynamic_budget = d.at("dynamic_budget").get<std::size_t>();
  const auto& df = j.at("deformation");
  c.deformation_enabled = df.at("enabled").get<bool>();
  c.deformation = {df.at("feature_dim").get<int>(), df.at("spatial_res").get<int>(),
                   df.at("temporal_res").get<int>(), df.at("hidden_dim").get<int>()};
  c.refiner_strength = j.at("refiner").at("strength").get<double>();
  c.refiner_prompt = j.at("refiner").at("prompt").get<std::string>();
  c.refiner_timeout = j.at("refiner").at("timeout").get<double>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  return c;
}

// Overlays `patch` onto `base`, rejecting keys the base does not know and
// values whose JSON type differs (integers may stand in for floats).
void overlay(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw InvalidParameter("config: '" + prefix + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw InvalidParameter("config: unknown key '" + key + "'");
    json& dst = base[it.key()];
    const json& src = it.value();
    if (dst.is_object()) {
      overlay(dst, src, key);
      continue;
    }
    const bool ok = (dst.is_number() && src.is_number()) || (dst.is_boolean() && src.is_boolean()) ||
                    (dst.is_string() && src.is_string()) || (dst.is_array() && src.is_array());
    if (!ok) throw InvalidParameter("config: wrong type for '" + key + "'");
    if (dst.is_number_unsigned() && src.is_number_integer() && src.get<std::int64_t>() < 0) {
      throw InvalidParameter("config: '" + key + "' must be non-negative");
    }
    if ((dst.is_number_integer() || dst.is_number_unsigned()) && src.is_number_float()) {
      throw InvalidParameter("config: '" + key + "' must be an integer");
    }
    dst = src;
  }
}

void apply_env(json& node, const std::string& prefix) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (key == "schema_version") continue;
    if (it.value().is_object()) {
      apply_env(it.value(), key);
      continue;
    }
    const char* raw = std::getenv(env_name_for(key).c_str());
    if (!raw) continue;
    json value;
    if (it.value().is_string()) {
      value = std::string(raw);
    } else {
      try {
        value = json::parse(raw);
      } catch (const json::exception&) {
        throw InvalidParameter("environment " + env_name_for(key) + ": cannot parse '" + raw + "'");
      }
    }
    json patch = {{it.key(), value}};
    overlay(node, patch, prefix);
  }
}

TrainConfig resolve(const json* file_doc, bool env) {
  json doc = to_json(TrainConfig{});
  if (file_doc) {
    if (!file_doc->is_object()) throw InvalidParameter("config: top level must be an object");
    if (file_doc->contains("schema_version") &&
        (*file_doc)["schema_version"] != kConfigSchemaVersion) {
      throw InvalidParameter("config: schema_version must be " +
                             std::to_string(kConfigSchemaVersion));
    }
    overlay(doc, *file_doc, "");
  }
  if (env) apply_env(doc, "");
  TrainConfig c;
  try {
    c = from_json(doc);
  } catch (const json::exception& e) {
    throw InvalidParameter(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace

std::string env_name_for(const std::string& dotted_key) {
  std::string name = "UAGS_";
  for (char ch : dotted_key) {
    name += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  }
  return name;
}

TrainConfig load_config(const std::filesystem::path& file) {
  if (file.empty()) return resolve(nullptr, true);
  std::ifstream in(file);
  if (!in) throw LoadError(file.string(), "cannot open config file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(file.string(), std::string("malformed JSON: ") + e.what());
  }
  try {
    return resolve(&doc, true);
  } catch (const InvalidParameter& e) {
    throw LoadError(file.string(), e.what());
  }
}

TrainConfig config_from_json_text(const std::string& text, bool env) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidParameter(std::string("config: malformed JSON: ") + e.what());
  }
  return resolve(&doc, env);
}

std::string config_to_json_text(const TrainConfig& config) { return to_json(config).dump(2); }

}  // namespace uags
