#pragma once

#include "uags/dataio.hpp"

#include <cstdint>
#include <string>

namespace uags {

enum class ShapeKind { Ellipsoid, Quad };

// A textured rigid object translating linearly: center(t) = center + velocity * t.
struct SynthObject {
  ShapeKind kind = ShapeKind::Ellipsoid;
  Vec3 center = Vec3::Zero();
  Vec3 radii = Vec3::Constant(0.5);  // semi-axes; a quad uses x and y as half extents
  Vec4 rotation = Vec4(1, 0, 0, 0);
  Vec3 velocity = Vec3::Zero();
  Vec3 color_a = Vec3(0.9, 0.3, 0.2);
  Vec3 color_b = Vec3(0.2, 0.3, 0.8);
  double checker = 4.0;  // texture cells per unit of the local parameterization
};

struct SynthSpec {
  int width = 64;
  int height = 48;
  int frames = 10;
  double focal = 60.0;
  // Cameras sit on a horizontal arc of `arc_radius` around `target`.
  Vec3 target = Vec3::Zero();
  double arc_radius = 4.0;
  double arc_degrees = 20.0;
  double camera_height = 0.0;
  // Every frame with index % val_stride == val_stride - 1 is held out (0: none).
  int val_stride = 0;
  bool background = true;
  double background_z = 2.0;  // world plane z = background_z
  Vec3 background_a = Vec3(0.75, 0.75, 0.7);
  Vec3 background_b = Vec3(0.35, 0.4, 0.35);
  double background_checker = 2.0;
  std::vector<SynthObject> objects;
  int sfm_points = 2000;  // static-surface points for initialization
};

// Camera-to-world look-at: image x right, image y along world +y.
Mat4 look_at(const Vec3& eye, const Vec3& target);

// Camera of frame i under the arc layout.
Camera synth_camera(const SynthSpec& spec, int frame);

struct RayHit {
  int object = -2;  // -1 background, -2 nothing
  double depth = 0;  // camera-space z
  Vec3 point = Vec3::Zero();
  Vec3 color = Vec3::Zero();
};

// Nearest surface along the ray through continuous pixel (x, y) at cam.timestamp.
RayHit cast_ray(const SynthSpec& spec, const Camera& cam, double x, double y);

// Renders every frame with depth, flow to the next training frame, dynamic
// masks, covisibility masks for held-out frames and static SfM-style points.
SceneBundle synth_scene(const SynthSpec& spec, std::uint64_t seed);

// Named generator setups: "ellipsoid", "moving-quad", "two-cluster", "default".
SynthSpec synth_preset(const std::string& name, std::uint64_t seed);

}  // namespace uags
