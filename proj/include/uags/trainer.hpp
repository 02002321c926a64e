#pragma once

#include "uags/checkpoint.hpp"
#include "uags/config.hpp"
#include "uags/dataio.hpp"
#include "uags/refiner.hpp"

#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace uags {

// 1.1 x the largest distance of a training camera center from their mean
// (1 when all centers coincide).
double scene_extent(const SceneBundle& scene);

// A view between two adjacent training cameras: rotation slerp, center and
// intrinsics lerp at a factor in (0, 1), timestamp ~ U(0, 1).
Camera sample_unseen_view(std::span<const Camera> train, std::mt19937_64& rng);

// SfM points plus dynamic primitives: `<scene_dir>/dynamic_points.ply` when it
// exists, otherwise (if enabled) densify_dynamic on the training frames.
GaussianModel initial_model(const SceneBundle& scene, const TrainConfig& config,
                            const std::filesystem::path& scene_dir = {});

// Bounding box of the primitives padded by 10% of the scene extent per side.
Aabb deformation_box(const GaussianModel& model, double extent);

struct TrainerOptions {
  std::filesystem::path out_dir;  // train_log.jsonl, config.json, checkpoint.uags; empty = none
  RefinerOptions refiner;
  bool keep_log = false;  // copy every log line into TrainResult::log
  // Called after each iteration with the 0-based iteration index.
  std::function<void(int, const GaussianModel&, const DeformationField*)> on_iteration;
};

struct TrainResult {
  Checkpoint checkpoint;
  LossBreakdown last;
  std::vector<std::string> log;
  double extent = 1.0;
  std::size_t refiner_failures = 0;
};

// Runs the full schedule. Throws NumericalError naming the first non-finite
// loss term.
TrainResult train(const SceneBundle& scene, GaussianModel initial, const TrainConfig& config,
                  const TrainerOptions& options = {});

// Whether this build contains the uncertainty-aware phase.
bool ua_phase_compiled();

}  // namespace uags
