#pragma once

#include "uags/checkpoint.hpp"
#include "uags/dataio.hpp"
#include "uags/rasterizer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace uags {

struct FrameMetrics {
  std::string frame_id;
  double psnr = 0;
  std::optional<double> mpsnr;  // over the covisibility mask, when the frame has one
  double ssim = 0;
  std::optional<double> mssim;
};

struct EvalSummary {
  std::vector<FrameMetrics> frames;
  double mean_psnr = 0;
  double mean_ssim = 0;
  std::optional<double> mean_mpsnr;
  std::optional<double> mean_mssim;
};

// Renders every frame of `split` and scores it against the ground truth.
// When image_dir is non-empty writes <id>_render.png and <id>_diff.png
// (|render - truth| averaged over channels, gray) there.
EvalSummary evaluate(const Checkpoint& ckpt, const SceneBundle& scene, Split split,
                     const std::filesystem::path& image_dir = {},
                     Precision precision = Precision::Float32);

// Frame metrics as CSV: frame_id,psnr,mpsnr,ssim,mssim (masked cells empty
// when absent).
std::string metrics_csv(const std::vector<FrameMetrics>& frames);

}  // namespace uags
