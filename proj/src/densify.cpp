#include "uags/densify.hpp"

#include "uags/detail/splat_math.hpp"

#include <spdlog/spdlog.h>

#include <random>

namespace uags {

Mask dynamic_mask(const Image& flow, double tau) {
  if (flow.channels != 2) throw ContractError("dynamic_mask expects a 2-channel flow map");
  Mask m(flow.width, flow.height);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const double u = flow.at(y, x, 0), v = flow.at(y, x, 1);
      if (!std::isfinite(u) || !std::isfinite(v)) throw InvalidParameter("non-finite flow value");
      m.set(y, x, std::hypot(u, v) >= tau);
    }
  }
  return m;
}

Vec3 backproject(const Vec2& pixel, double depth, const Camera& cam) {
  if (!(depth > 0)) throw InvalidParameter("backproject: depth must be positive");
  const auto& k = cam.intrinsics;
  const Vec3 p((pixel.x() - k.cx) * depth / k.fx, (pixel.y() - k.cy) * depth / k.fy, depth);
  return cam.rotation().transpose() * (p - cam.translation());
}

namespace {

struct Candidate {
  int frame;
  int x, y;
};

}  // namespace

DensifyResult densify_dynamic(std::span<const DensifyFrame> frames, const DensifyOptions& options) {
  if (frames.empty()) throw InvalidParameter("densify_dynamic needs at least one frame");
  std::vector<Candidate> pool;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const DensifyFrame& fr = frames[f];
    if (!fr.color || !fr.depth || (!fr.flow && !fr.dynamic)) {
      throw InvalidParameter("densify_dynamic: frame " + std::to_string(f) +
                             " lacks color, depth or motion data");
    }
    const Mask mask = fr.dynamic ? *fr.dynamic : dynamic_mask(*fr.flow, options.flow_threshold);
    for (int y = 0; y < mask.height; ++y) {
      for (int x = 0; x < mask.width; ++x) {
        const double d = fr.depth->at(y, x);
        if (mask.at(y, x) && std::isfinite(d) && d > 0) pool.push_back({static_cast<int>(f), x, y});
      }
    }
  }

  DensifyResult result;
  result.primitives = GaussianModel(options.sh_degree);
  if (pool.empty() || options.budget == 0) {
    result.warning = "no dynamic pixels found; nothing densified";
    spdlog::warn("densify_dynamic: {}", result.warning);
    return result;
  }

  std::vector<Candidate> picked;
  if (pool.size() <= options.budget) {
    picked = pool;
  } else {
    // One uniform draw per equal-width stratum of the candidate list.
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double width = static_cast<double>(pool.size()) / static_cast<double>(options.budget);
    for (std::size_t s = 0; s < options.budget; ++s) {
      auto idx = static_cast<std::size_t>((static_cast<double>(s) + u(rng)) * width);
      idx = std::min(idx, pool.size() - 1);
      picked.push_back(pool[idx]);
    }
  }

  const std::size_t n = picked.size();
  std::vector<Vec3> pos(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = picked[i];
    const DensifyFrame& fr = frames[static_cast<std::size_t>(c.frame)];
    pos[i] = backproject(Vec2(c.x, c.y), fr.depth->at(c.y, c.x), fr.cam);
  }
  std::vector<double> scale = nearest_neighbor_distance(pos);
  for (std::size_t i = 0; i < n; ++i) {
    if (scale[i] > 0) continue;
    // Isolated or coincident samples: one pixel footprint at that depth.
    const auto& c = picked[i];
    const DensifyFrame& fr = frames[static_cast<std::size_t>(c.frame)];
    scale[i] = fr.depth->at(c.y, c.x) / fr.cam.intrinsics.fx;
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = picked[i];
    const DensifyFrame& fr = frames[static_cast<std::size_t>(c.frame)];
    GaussianPrimitive p;
    p.position = pos[i];
    p.log_scale = Vec3::Constant(std::log(scale[i]));
    p.opacity_logit = logit(kDensifyInitialOpacity);
    for (int ch = 0; ch < 3; ++ch) p.sh[ch] = (fr.color->at(c.y, c.x, ch) - 0.5) / kShC0;
    result.primitives.push_back(p);
    result.source_frame.push_back(c.frame);
    result.source_pixel.emplace_back(c.x, c.y);
  }
  return result;
}

std::vector<double> nearest_neighbor_distance(std::span<const Vec3> points, int k) {
  if (k < 1) throw InvalidParameter("nearest_neighbor_distance: k must be >= 1");
  const std::size_t n = points.size();
  std::vector<double> out(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> best(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d = (points[i] - points[j]).norm();
      for (auto& b : best) {
        if (d < b) std::swap(d, b);
      }
    }
    double sum = 0;
    int count = 0;
    for (double b : best) {
      if (std::isfinite(b)) sum += b, ++count;
    }
    out[i] = count ? sum / count : 0.0;
  });
  return out;
}

GaussianModel model_from_points(const PointCloud& cloud, int sh_degree) {
  GaussianModel model(sh_degree);
  const std::vector<double> dist = nearest_neighbor_distance(cloud.points);
  double fallback = 0;
  for (double d : dist) fallback = std::max(fallback, d);
  if (!(fallback > 0)) fallback = 0.01;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    GaussianPrimitive p;
    p.position = cloud.points[i];
    p.log_scale = Vec3::Constant(std::log(dist[i] > 0 ? dist[i] : fallback));
    p.opacity_logit = logit(kDensifyInitialOpacity);
    for (int c = 0; c < 3; ++c) p.sh[c] = (cloud.colors[i][c] / 255.0 - 0.5) / kShC0;
    model.push_back(p);
  }
  return model;
}

void DensityStats::reset(std::size_t n) {
  grad_sum.assign(n, 0.0);
  count.assign(n, 0);
}

void DensityStats::add(std::span<const double> screen_grad, std::span<const double> contributions) {
  if (screen_grad.size() != grad_sum.size() || contributions.size() != grad_sum.size()) {
    throw ContractError("DensityStats::add size mismatch");
  }
  for (std::size_t k = 0; k < grad_sum.size(); ++k) {
    if (contributions[k] > 0) {
      grad_sum[k] += screen_grad[k];
      ++count[k];
    }
  }
}

DensityResult adaptive_density_control(const GaussianModel& model, const DensityStats& stats,
                                       const DensityOptions& options) {
  const std::size_t n = model.size();
  if (stats.grad_sum.size() != n || stats.count.size() != n) {
    throw ContractError("density statistics do not match the model");
  }
  const double size_limit = options.percent_dense * options.scene_extent;
  std::vector<int> clone, split;
  for (std::size_t k = 0; k < n; ++k) {
    if (stats.mean(k) < options.grad_threshold) continue;
    double max_scale = 0;
    for (int i = 0; i < 3; ++i) max_scale = std::max(max_scale, std::exp(model.log_scales[3 * k + i]));
    (max_scale > size_limit ? split : clone).push_back(static_cast<int>(k));
  }

  DensityResult result;
  result.model = GaussianModel(model.sh_degree());
  // Each split replaces one primitive with two; each clone adds one.
  const std::size_t grown = n + clone.size() + split.size();
  result.capped = grown > options.max_primitives && (!clone.empty() || !split.empty());
  if (result.capped) {
    spdlog::warn("density control: {} primitives would exceed the cap of {}; growth suspended",
                 grown, options.max_primitives);
    clone.clear();
    split.clear();
  }

  std::vector<unsigned char> is_split(n, 0);
  for (int k : split) is_split[static_cast<std::size_t>(k)] = 1;
  std::vector<GaussianPrimitive> out;
  std::vector<int> source;
  std::vector<unsigned char> original;
  for (std::size_t k = 0; k < n; ++k) {
    if (is_split[k]) continue;
    out.push_back(model.primitive(k));
    source.push_back(static_cast<int>(k));
    original.push_back(1);
  }
  for (int k : clone) {
    out.push_back(model.primitive(static_cast<std::size_t>(k)));
    source.push_back(k);
    original.push_back(0);
  }
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k : split) {
    const GaussianPrimitive p = model.primitive(static_cast<std::size_t>(k));
    const Mat3 rot = quaternion_to_rotation(p.rotation);
    const Vec3 sigma = p.log_scale.array().exp();
    for (int child = 0; child < 2; ++child) {
      GaussianPrimitive c = p;
      const Vec3 z(normal(rng), normal(rng), normal(rng));
      c.position = p.position + rot * sigma.cwiseProduct(z);
      c.log_scale = p.log_scale.array() - std::log(kSplitScaleFactor);
      out.push_back(c);
      source.push_back(k);
      original.push_back(0);
    }
  }
  result.cloned = clone.size();
  result.split = split.size();

  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].opacity() < options.min_opacity) {
      ++result.pruned;
      continue;
    }
    result.model.push_back(out[i]);
    result.source.push_back(source[i]);
    result.original.push_back(original[i]);
  }
  return result;
}

}  // namespace uags
