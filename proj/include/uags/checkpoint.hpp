#pragma once

#include "uags/deformation.hpp"
#include "uags/optim.hpp"
#include "uags/scene_core.hpp"

#include <filesystem>
#include <optional>

namespace uags {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  GaussianModel model{0};
  std::optional<DeformationField> field;
  OptimizerState optimizer;
  std::uint64_t iteration = 0;
  Vec3 background = Vec3::Zero();
};

// Little-endian container: "UAGS", u32 version, primitive arrays as float32,
// deformation field (config, box, float32 parameters), optimizer moments.
// Values pass through float32, so loading yields float32-representable
// parameters.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rounds every stored quantity to float32, as a save/load round trip would.
void round_to_storage(Checkpoint& ckpt);

}  // namespace uags
