#pragma once

#include "uags/image.hpp"
#include "uags/scene_core.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace uags {

namespace fs = std::filesystem;

// ---- File formats. Every reader throws LoadError naming the file. ----

// 8-bit PNG (gray, gray+alpha, RGB or RGBA; 16-bit is reduced) as H x W x 3 in [0, 1].
Image read_png_rgb(const fs::path& path);
// Values are clamped to [0, 1] and rounded to 8 bits.
void write_png_rgb(const fs::path& path, const Image& image);
// Any nonzero sample marks the pixel.
Mask read_png_mask(const fs::path& path);
void write_png_mask(const fs::path& path, const Mask& mask);
// Single-channel map scaled by `scale`, clamped and rounded to 16 bits.
void write_png_gray16(const fs::path& path, const Image& map, double scale = 65535.0);
// Single-channel 8- or 16-bit PNG read back as raw integer samples.
Image read_png_gray_raw(const fs::path& path);

// PFM: "Pf" (1 channel) or "PF" (3 channels), little-endian float32, rows
// stored bottom to top as the format prescribes.
Image read_pfm(const fs::path& path);
void write_pfm(const fs::path& path, const Image& image);

// Middlebury .flo: float32 magic 202021.25, int32 width, int32 height,
// interleaved (u, v) rows top to bottom.
Image read_flo(const fs::path& path);
void write_flo(const fs::path& path, const Image& flow);

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<std::array<std::uint8_t, 3>> colors;
};

// Binary little-endian PLY with float x, y, z and uchar red, green, blue.
PointCloud read_ply(const fs::path& path);
void write_ply(const fs::path& path, const PointCloud& cloud);

// ---- Scene directories. ----

inline constexpr int kSceneSchemaVersion = 1;

enum class Split { Train, Val };

struct Frame {
  std::string id;
  Split split = Split::Train;
  Camera camera;  // carries the timestamp
  Image image;
  std::optional<Image> depth;         // camera-space z, H x W
  std::optional<Image> flow;          // to the next training frame, H x W x 2
  std::optional<Mask> dynamic_mask;
  std::optional<Mask> covisibility;
};

struct SceneBundle {
  std::vector<Frame> frames;  // manifest order, timestamps strictly increasing
  std::optional<PointCloud> points;
  std::string ground_truth;   // optional opaque JSON text describing the generator

  std::vector<const Frame*> split(Split s) const;
  std::vector<Camera> cameras(Split s) const;
};

// Reads and fully validates `dir/scene.json` and every file it references.
SceneBundle load_scene(const fs::path& dir);

// Writes the manifest and all channels under `dir` (created if missing).
void save_scene(const SceneBundle& scene, const fs::path& dir);

// Every problem found in the scene directory; empty means the scene loads.
std::vector<std::string> lint_scene(const fs::path& dir);

// Flow from training frame i to training frame i + 1 is stored on frame i.
// Returns the index (into frames) of the next training frame, or -1.
int next_train_frame(const SceneBundle& scene, std::size_t frame_index);

}  // namespace uags
