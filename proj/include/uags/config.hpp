#pragma once

#include "uags/deformation.hpp"
#include "uags/losses.hpp"
#include "uags/rasterizer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace uags {

inline constexpr int kConfigSchemaVersion = 1;

struct LearningRates {
  double position = 1.6e-4;        // multiplied by the scene extent
  double position_final = 1.6e-6;  // exponential decay target at the last iteration
  double features = 2.5e-3;
  double opacity = 5e-2;
  double scale = 5e-3;
  double rotation = 5e-3;
  double deformation = 1.6e-3;
};

struct DensifySchedule {
  int from = 500;
  int until = 15000;
  int interval = 100;
  double grad_threshold = 2e-4;
  double percent_dense = 0.01;
  double min_opacity = 0.005;
  std::size_t max_primitives = 200000;
  bool dynamic_init = true;  // densify_dynamic at start when no dynamic_points.ply exists
  std::size_t dynamic_budget = 2000;
};

struct TrainConfig {
  int iterations = 40000;
  int ua_start = 20000;
  bool ua_enabled = true;
  bool ua_tv_uniform = false;  // replace U by 1 inside the TV term (plain TV baseline)
  int warmup = 1000;
  int cache_size = 200;
  int cache_period = 2000;
  int uncertainty_period = 500;
  int sh_degree = 1;
  Vec3 background = Vec3::Zero();
  std::uint64_t seed = 0;
  Precision precision = Precision::Float32;
  LossWeights weights;
  double c0 = 0.25;
  double c1 = 0.0;  // <= 0: 20 / number of training views
  LearningRates lr;
  DensifySchedule densify;
  bool deformation_enabled = true;
  DeformationConfig deformation;
  double refiner_strength = 0.3;
  std::string refiner_prompt;
  double refiner_timeout = 600;
  int checkpoint_every = 0;

  // Throws InvalidParameter on inconsistent values.
  void validate() const;
};

// Layered resolution: defaults < JSON file < UAGS_* environment variables.
// Unknown keys and type mismatches throw InvalidParameter.
TrainConfig load_config(const std::filesystem::path& file);  // empty path: defaults + env
TrainConfig config_from_json_text(const std::string& text, bool apply_env = false);
std::string config_to_json_text(const TrainConfig& config);

// Environment variable that overrides a dotted key, e.g. "lr.position" ->
// UAGS_LR_POSITION.
std::string env_name_for(const std::string& dotted_key);

}  // namespace uags
