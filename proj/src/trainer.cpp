#include "uags/trainer.hpp"

#include "uags/densify.hpp"
#include "uags/losses.hpp"
#include "uags/optim.hpp"
#include "uags/rasterizer.hpp"
#include "uags/uncertainty.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <optional>

namespace uags {

bool ua_phase_compiled() {
#ifdef UAGS_NO_UA_PHASE
  return false;
#else
  return true;
#endif
}

double scene_extent(const SceneBundle& scene) {
  const auto cams = scene.cameras(Split::Train);
  if (cams.empty()) return 1.0;
  Vec3 mean = Vec3::Zero();
  for (const auto& c : cams) mean += c.center();
  mean /= static_cast<double>(cams.size());
  double r = 0.0;
  for (const auto& c : cams) r = std::max(r, (c.center() - mean).norm());
  return r > 1e-9 ? 1.1 * r : 1.0;
}

Camera sample_unseen_view(std::span<const Camera> train, std::mt19937_64& rng) {
  if (train.empty()) throw InvalidParameter("sample_unseen_view: no training cameras");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (train.size() == 1) {
    Camera c = train[0];
    c.timestamp = unit(rng);
    return c;
  }
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 2);
  const std::size_t j = pick(rng);
  double a = 0.0;
  while (a <= 0.0) a = unit(rng);
  const Camera& c0 = train[j];
  const Camera& c1 = train[j + 1];
  const Eigen::Quaterniond q0(c0.rotation()), q1(c1.rotation());
  const Mat3 rot = q0.slerp(a, q1).normalized().toRotationMatrix();
  const Vec3 center = (1.0 - a) * c0.center() + a * c1.center();
  Camera out = c0;
  out.world_to_camera.setIdentity();
  out.world_to_camera.topLeftCorner<3, 3>() = rot;
  out.world_to_camera.topRightCorner<3, 1>() = -rot * center;
  auto lerp = [a](double x, double y) { return (1.0 - a) * x + a * y; };
  out.intrinsics.fx = lerp(c0.intrinsics.fx, c1.intrinsics.fx);
  out.intrinsics.fy = lerp(c0.intrinsics.fy, c1.intrinsics.fy);
  out.intrinsics.cx = lerp(c0.intrinsics.cx, c1.intrinsics.cx);
  out.intrinsics.cy = lerp(c0.intrinsics.cy, c1.intrinsics.cy);
  out.timestamp = unit(rng);
  return out;
}

GaussianModel initial_model(const SceneBundle& scene, const TrainConfig& config,
                            const std::filesystem::path& scene_dir) {
  GaussianModel model(config.sh_degree);
  if (scene.points && !scene.points->points.empty()) {
    model.append(model_from_points(*scene.points, config.sh_degree));
  }
  const auto dyn_file = scene_dir.empty() ? fs::path{} : scene_dir / "dynamic_points.ply";
  if (!dyn_file.empty() && fs::exists(dyn_file)) {
    const PointCloud cloud = read_ply(dyn_file);
    if (!cloud.points.empty()) model.append(model_from_points(cloud, config.sh_degree));
  } else if (config.densify.dynamic_init) {
    std::vector<DensifyFrame> frames;
    for (const Frame* f : scene.split(Split::Train)) {
      if (!f->depth || (!f->dynamic_mask && !f->flow)) continue;
      frames.push_back({f->camera, &f->image, &*f->depth, f->flow ? &*f->flow : nullptr,
                        f->dynamic_mask ? &*f->dynamic_mask : nullptr});
    }
    if (!frames.empty()) {
      DensifyOptions opt;
      opt.budget = config.densify.dynamic_budget;
      opt.seed = config.seed;
      opt.sh_degree = config.sh_degree;
      model.append(densify_dynamic(frames, opt).primitives);
    }
  }
  if (model.empty()) throw InvalidParameter("scene provides no points to initialize from");
  return model;
}

Aabb deformation_box(const GaussianModel& model, double extent) {
  Aabb box{Vec3::Constant(1e300), Vec3::Constant(-1e300)};
  for (std::size_t k = 0; k < model.size(); ++k) {
    const Vec3 p(model.positions[3 * k], model.positions[3 * k + 1], model.positions[3 * k + 2]);
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  if (model.empty()) box = {Vec3::Constant(-1), Vec3::Constant(1)};
  const double pad = std::max(0.1 * extent, 1e-3);
  box.min.array() -= pad;
  box.max.array() += pad;
  return box;
}

namespace {

struct GroupRef {
  ParamGroup group;
  std::vector<double>* params;
  const std::vector<double>* grads;
  int stride;
};

// Moments follow their primitive through densification; fresh primitives
// start from zero.
void remap_moments(AdamMoments& mom, const DensityResult& r, int stride) {
  if (mom.m.empty()) return;
  AdamMoments out;
  out.resize(r.source.size() * static_cast<std::size_t>(stride));
  for (std::size_t i = 0; i < r.source.size(); ++i) {
    if (!r.original[i]) continue;
    const std::size_t src = static_cast<std::size_t>(r.source[i]) * stride;
    for (int c = 0; c < stride; ++c) {
      out.m[i * stride + c] = mom.m[src + c];
      out.v[i * stride + c] = mom.v[src + c];
    }
  }
  mom = std::move(out);
}

Mask valid_depth_mask(const Image& depth) {
  Mask m(depth.width, depth.height);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const double d = depth.at(y, x);
      m.set(y, x, std::isfinite(d) && d > 0.0);
    }
  }
  return m;
}

Mask valid_flow_mask(const Image& flow) {
  Mask m(flow.width, flow.height);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      m.set(y, x, std::isfinite(flow.at(y, x, 0)) && std::isfinite(flow.at(y, x, 1)));
    }
  }
  return m;
}

void check_finite(const char* term, double v, int it) {
  if (!std::isfinite(v)) {
    throw NumericalError(term, std::string("non-finite ") + term + " loss at iteration " +
                                   std::to_string(it));
  }
}

nlohmann::json opt_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

#ifndef UAGS_NO_UA_PHASE
struct CacheEntry {
  Camera cam;
  Image refined;
};
#endif

}  // namespace

TrainResult train(const SceneBundle& scene, GaussianModel initial, const TrainConfig& config,
                  const TrainerOptions& options) {
  config.validate();
  if (initial.sh_degree() != config.sh_degree) {
    throw InvalidParameter("initial model SH degree differs from the configured degree");
  }
  initial.validate();

  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < scene.frames.size(); ++i) {
    if (scene.frames[i].split == Split::Train) train_idx.push_back(i);
  }
  if (train_idx.empty()) throw InvalidParameter("scene has no training frames");
  if (scene.frames.size() < 2) throw InvalidParameter("training needs at least two frames");
  const std::vector<Camera> train_cams = scene.cameras(Split::Train);

  TrainResult result;
  result.extent = scene_extent(scene);
  Checkpoint& ck = result.checkpoint;
  ck.model = std::move(initial);
  ck.background = config.background;
  if (config.deformation_enabled) {
    ck.field.emplace(config.deformation, deformation_box(ck.model, result.extent), config.seed);
  }
  GaussianModel& model = ck.model;
  OptimizerState& opt = ck.optimizer;

  RenderSettings settings;
  settings.background = config.background;
  settings.precision = config.precision;

  std::ofstream log_file;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    std::ofstream(options.out_dir / "config.json") << config_to_json_text(config) << '\n';
    log_file.open(options.out_dir / "train_log.jsonl");
    if (!log_file) throw LoadError((options.out_dir / "train_log.jsonl").string(), "cannot write");
  }

  // Separate streams, so enabling one loss term never shifts the draws of another.
  std::mt19937_64 rng(config.seed);
  auto stream = [&](std::uint64_t k) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                      static_cast<std::uint32_t>(config.seed >> 32), static_cast<std::uint32_t>(k)};
    return std::mt19937_64(seq);
  };
  [[maybe_unused]] std::mt19937_64 cache_rng = stream(1), tv_rng = stream(2), pick_rng = stream(3);
  std::uniform_int_distribution<std::size_t> pick_frame(0, train_idx.size() - 1);
  DensityStats stats;
  stats.reset(model.size());

#ifndef UAGS_NO_UA_PHASE
  UncertaintyParams uparams = UncertaintyParams::for_view_count(train_cams.size());
  uparams.c0 = config.c0;
  if (config.c1 > 0) uparams.c1 = config.c1;
  std::vector<CacheEntry> cache;
  std::uint64_t refresh_batch = 0;
  RefinerOptions refiner = options.refiner;
  refiner.strength = config.refiner_strength;
  refiner.prompt = config.refiner_prompt;
  refiner.timeout_seconds = config.refiner_timeout;
  refiner.seed = config.seed;
  if (refiner.work_dir.empty()) {
    refiner.work_dir = options.out_dir.empty() ? fs::temp_directory_path() / "uags_refiner"
                                               : options.out_dir / "refiner";
  }
#endif

  const double lr_pos0 = config.lr.position * result.extent;
  const double lr_pos1 = config.lr.position_final * result.extent;

  for (int it = 0; it < config.iterations; ++it) {
#ifdef UAGS_NO_UA_PHASE
    const bool ua_active = false;
#else
    const bool ua_active = config.ua_enabled && it >= config.ua_start;
    if (ua_active) {
      const int phase_it = it - config.ua_start;
      if (phase_it % config.uncertainty_period == 0) {
        refresh_uncertainty(model, ck.field ? &*ck.field : nullptr, train_cams, uparams, settings);
      }
      if (config.weights.ua_diff > 0 && phase_it % config.cache_period == 0) {
        std::vector<CacheEntry> fresh;
        std::vector<Image> renders;
        for (int i = 0; i < config.cache_size; ++i) {
          CacheEntry e{sample_unseen_view(train_cams, cache_rng), {}};
          RenderRequest req;
          renders.push_back(
              render(model, ck.field ? &*ck.field : nullptr, e.cam, req, settings).color);
          fresh.push_back(std::move(e));
        }
        try {
          auto refined = refine_images(renders, refiner, refresh_batch++);
          for (std::size_t i = 0; i < fresh.size(); ++i) fresh[i].refined = std::move(refined[i]);
          cache = std::move(fresh);
        } catch (const RefinerError& e) {
          ++result.refiner_failures;
          spdlog::warn("refiner failed ({}); keeping the previous cache", e.what());
          if (cache.empty()) {
            for (std::size_t i = 0; i < fresh.size(); ++i) fresh[i].refined = renders[i];
            cache = std::move(fresh);
          }
        }
      }
    }
#endif

    const DeformationField* field = ck.field ? &*ck.field : nullptr;
    const std::size_t fi = train_idx[pick_frame(rng)];
    const Frame& frame = scene.frames[fi];
    const int next = next_train_frame(scene, fi);

    RenderRequest req;
    const bool use_depth = frame.depth && config.weights.data > 0;
    const bool use_flow = frame.flow && next >= 0 && config.weights.data > 0;
    req.channels.depth = use_depth;
    req.channels.flow = use_flow;
    if (use_flow) req.flow_target = scene.frames[static_cast<std::size_t>(next)].camera;
    const RenderOutput out = render(model, field, frame.camera, req, settings);

    LossParts parts;
    RenderGradients up;
    parts.recon = loss_recon(out.color, frame.image, &up.color, 1.0);
    if (use_depth) {
      parts.depth = loss_masked_l1(out.depth, *frame.depth, valid_depth_mask(*frame.depth),
                                   &up.depth, config.weights.data);
    }
    if (use_flow) {
      parts.flow = loss_masked_l1(out.flow, *frame.flow, valid_flow_mask(*frame.flow), &up.flow,
                                  config.weights.data);
    }
    ModelGradients grads(model, field);
    std::vector<double> screen;
    render_backward(model, field, out, up, grads, &screen);
    stats.add(screen, out.contributions);
    if (field) {
      parts.grid = grid_smoothness(*field);
      grid_smoothness_backward(*field, config.weights.grid, grads.field);
    }

#ifndef UAGS_NO_UA_PHASE
    if (ua_active) {
      if (config.weights.ua_tv > 0) {
        const Camera cam = sample_unseen_view(train_cams, tv_rng);
        RenderRequest r2;
        r2.channels = {false, true, !config.ua_tv_uniform, false};
        const RenderOutput o2 = render(model, field, cam, r2, settings);
        const Image u = config.ua_tv_uniform ? Image(o2.width, o2.height, 1, 1.0) : o2.uncertainty;
        RenderGradients g2;
        parts.ua_tv = loss_ua_tv(o2.depth, u, &g2.depth, config.weights.ua_tv);
        render_backward(model, field, o2, g2, grads);
      }
      if (config.weights.ua_diff > 0 && !cache.empty()) {
        std::uniform_int_distribution<std::size_t> pick_entry(0, cache.size() - 1);
        const CacheEntry& e = cache[pick_entry(pick_rng)];
        RenderRequest r3;
        r3.channels = {true, false, true, false};
        const RenderOutput o3 = render(model, field, e.cam, r3, settings);
        RenderGradients g3;
        parts.ua_diff = loss_ua_diff(o3.color, e.refined, o3.uncertainty, &g3.color,
                                     config.weights.ua_diff);
        render_backward(model, field, o3, g3, grads);
      }
    }
#endif

    const LossBreakdown loss = total_loss(parts, config.weights, ua_active);
    check_finite("recon", parts.recon, it);
    check_finite("grid", parts.grid, it);
    check_finite("depth", parts.depth, it);
    check_finite("flow", parts.flow, it);
    if (parts.ua_diff) check_finite("ua_diff", *parts.ua_diff, it);
    if (parts.ua_tv) check_finite("ua_tv", *parts.ua_tv, it);
    check_finite("total", loss.total, it);
    result.last = loss;

    // Adam.
    const std::uint64_t step = ++opt.step;
    const double frac = config.iterations > 1 ? double(it) / double(config.iterations - 1) : 0.0;
    const double lr_pos = (lr_pos0 > 0 && lr_pos1 > 0)
                              ? std::exp((1 - frac) * std::log(lr_pos0) + frac * std::log(lr_pos1))
                              : lr_pos0;
    const std::array<std::pair<GroupRef, double>, 5> groups{{
        {{ParamGroup::Position, &model.positions, &grads.positions, 3}, lr_pos},
        {{ParamGroup::Rotation, &model.rotations, &grads.rotations, 4}, config.lr.rotation},
        {{ParamGroup::LogScale, &model.log_scales, &grads.log_scales, 3}, config.lr.scale},
        {{ParamGroup::Opacity, &model.opacity_logits, &grads.opacity_logits, 1},
         config.lr.opacity},
        {{ParamGroup::Features, &model.features, &grads.features, model.feature_stride()},
         config.lr.features},
    }};
    for (const auto& [g, lr] : groups) {
      AdamMoments& mom = opt.group(g.group);
      mom.resize(g.params->size());
      adam_step(*g.params, *g.grads, mom, step, lr);
    }
    model.normalize_rotations();
    if (ck.field && it >= config.warmup) {
      AdamMoments& mom = opt.group(ParamGroup::Deformation);
      mom.resize(ck.field->params.size());
      adam_step(ck.field->params, grads.field, mom, step, config.lr.deformation);
    }

    nlohmann::json line = {
        {"iter", it},
        {"frame", frame.id},
        {"recon", parts.recon},
        {"grid", parts.grid},
        {"depth", parts.depth},
        {"flow", parts.flow},
        {"ua_diff", opt_number(parts.ua_diff)},
        {"ua_tv", opt_number(parts.ua_tv)},
        {"total", loss.total},
        {"primitives", model.size()},
    };

    // Density control.
    const int done = it + 1;
    const auto& ds = config.densify;
    if (done >= ds.from && done <= ds.until && done % ds.interval == 0 && done < config.iterations) {
      DensityOptions dopt;
      dopt.grad_threshold = ds.grad_threshold;
      dopt.percent_dense = ds.percent_dense;
      dopt.scene_extent = result.extent;
      dopt.min_opacity = ds.min_opacity;
      dopt.max_primitives = ds.max_primitives;
      dopt.seed = config.seed + static_cast<std::uint64_t>(done);
      DensityResult dr = adaptive_density_control(model, stats, dopt);
      remap_moments(opt.group(ParamGroup::Position), dr, 3);
      remap_moments(opt.group(ParamGroup::Rotation), dr, 4);
      remap_moments(opt.group(ParamGroup::LogScale), dr, 3);
      remap_moments(opt.group(ParamGroup::Opacity), dr, 1);
      remap_moments(opt.group(ParamGroup::Features), dr, model.feature_stride());
      if (dr.capped) {
        spdlog::warn("primitive cap {} reached at iteration {}; growth suspended", ds.max_primitives,
                     done);
      }
      model = std::move(dr.model);
      stats.reset(model.size());
      line["densify"] = {{"cloned", dr.cloned}, {"split", dr.split}, {"pruned", dr.pruned},
                         {"capped", dr.capped}};
      if (model.empty()) throw NumericalError("densify", "every primitive was pruned");
    }

    const std::string text = line.dump();
    if (log_file.is_open()) log_file << text << '\n';
    if (options.keep_log) result.log.push_back(text);
    ck.iteration = static_cast<std::uint64_t>(done);
    if (options.on_iteration) options.on_iteration(it, model, ck.field ? &*ck.field : nullptr);
    if (!options.out_dir.empty() && config.checkpoint_every > 0 &&
        done % config.checkpoint_every == 0 && done < config.iterations) {
      save_checkpoint(options.out_dir / ("checkpoint_" + std::to_string(done) + ".uags"), ck);
    }
  }

  if (!options.out_dir.empty()) save_checkpoint(options.out_dir / "checkpoint.uags", ck);
  return result;
}

}  // namespace uags
