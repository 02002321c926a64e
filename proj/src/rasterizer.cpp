#include "uags/rasterizer.hpp"

#include "splat_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace uags {

namespace detail {

struct RenderState {
  Precision precision = Precision::Float32;
  RenderSettings settings;
  Camera cam;
  std::optional<Camera> flow_target;
  ChannelSet channels;
  std::size_t model_size = 0;
  std::size_t field_params = 0;
  bool has_field = false;
  SortedSplatList splats;
  int tiles_x = 0, tiles_y = 0;
  std::vector<std::size_t> tile_begin;  // offsets into tile_entries, size tiles + 1
  std::vector<int> tile_entries;        // indices into splats, depth ordered per tile
  std::vector<int> pixel_last;          // per pixel: tile-list entries scanned
};

}  // namespace detail

namespace {

using detail::FrameContext;
using detail::PrimitiveForward;
using detail::RenderState;
using detail::SplatGrad;

template <class T>
ProjectedSplat to_splat(const PrimitiveForward<T>& f, int index, int width, int height,
                        bool& on_screen) {
  ProjectedSplat s;
  s.index = index;
  s.mean = Vec2(static_cast<double>(f.mean.x()), static_cast<double>(f.mean.y()));
  s.conic_a = static_cast<double>(f.conic_a);
  s.conic_b = static_cast<double>(f.conic_b);
  s.conic_c = static_cast<double>(f.conic_c);
  s.depth = static_cast<double>(f.p.z());
  s.opacity = static_cast<double>(f.opacity);
  s.color = f.color.template cast<double>();
  s.flow = f.flow.template cast<double>();
  s.uncertainty = static_cast<double>(f.uncertainty);
  // 3-sigma ellipse extents plus one pixel of slack for rounding.
  const double ex = 3.0 * std::sqrt(static_cast<double>(f.cov2(0, 0)));
  const double ey = 3.0 * std::sqrt(static_cast<double>(f.cov2(1, 1)));
  const double x0 = std::floor(s.mean.x() - ex) - 1, x1 = std::ceil(s.mean.x() + ex) + 1;
  const double y0 = std::floor(s.mean.y() - ey) - 1, y1 = std::ceil(s.mean.y() + ey) + 1;
  on_screen = x1 >= 0 && y1 >= 0 && x0 <= width - 1 && y0 <= height - 1 && std::isfinite(ex) &&
              std::isfinite(ey);
  if (on_screen) {
    s.x_min = static_cast<int>(std::max(0.0, x0));
    s.x_max = static_cast<int>(std::min<double>(width - 1, x1));
    s.y_min = static_cast<int>(std::max(0.0, y0));
    s.y_max = static_cast<int>(std::min<double>(height - 1, y1));
  }
  return s;
}

template <class T>
SortedSplatList project_all(const GaussianModel& model, const DeformationField* field,
                            const FrameContext& frame, bool cull_offscreen) {
  const std::size_t n = model.size();
  std::vector<ProjectedSplat> slots(n);
  std::vector<unsigned char> keep(n, 0);
  const int w = frame.cam->width, h = frame.cam->height;
  parallel_for(n, [&](std::size_t k) {
    PrimitiveForward<T> f;
    if (!detail::primitive_forward<T>(model, field, frame, k, f)) return;
    bool on_screen = false;
    slots[k] = to_splat(f, static_cast<int>(k), w, h, on_screen);
    keep[k] = (on_screen || !cull_offscreen) ? 1 : 0;
  });
  SortedSplatList out;
  for (std::size_t k = 0; k < n; ++k) {
    if (keep[k]) out.push_back(slots[k]);
  }
  std::sort(out.begin(), out.end(), [](const ProjectedSplat& a, const ProjectedSplat& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
  });
  return out;
}

void check_inputs(const GaussianModel& model, const DeformationField* field, const Camera& cam,
                  const RenderRequest& request) {
  cam.validate();
  model.validate();
  if (request.channels.flow) {
    if (!request.flow_target) throw ContractError("flow channel requested without a flow target");
    request.flow_target->validate();
  }
  if (field && field->params.empty()) throw ContractError("deformation field is uninitialized");
}

FrameContext frame_context(const Camera& cam, const RenderRequest& request) {
  FrameContext fc;
  fc.cam = &cam;
  if (request.channels.flow && request.flow_target) fc.flow_cam = &*request.flow_target;
  return fc;
}

// Splat fields cast to the compute scalar, structure-of-arrays per tile.
template <class T>
struct TileSplats {
  std::vector<T> mx, my, ca, cb, cc, op, r, g, b, depth, unc, fx, fy;
  std::vector<int> x0, x1, y0, y1;

  void load(const SortedSplatList& splats, const int* ids, std::size_t count) {
    auto resize = [count](auto&... v) { (v.resize(count), ...); };
    resize(mx, my, ca, cb, cc, op, r, g, b, depth, unc, fx, fy, x0, x1, y0, y1);
    for (std::size_t i = 0; i < count; ++i) {
      const ProjectedSplat& s = splats[static_cast<std::size_t>(ids[i])];
      mx[i] = T(s.mean.x());
      my[i] = T(s.mean.y());
      ca[i] = T(s.conic_a);
      cb[i] = T(s.conic_b);
      cc[i] = T(s.conic_c);
      op[i] = T(s.opacity);
      r[i] = T(s.color.x());
      g[i] = T(s.color.y());
      b[i] = T(s.color.z());
      depth[i] = T(s.depth);
      unc[i] = T(s.uncertainty);
      fx[i] = T(s.flow.x());
      fy[i] = T(s.flow.y());
      x0[i] = s.x_min;
      x1[i] = s.x_max;
      y0[i] = s.y_min;
      y1[i] = s.y_max;
    }
  }

  // alpha * G at pixel (x, y), or a negative value when the splat does not
  // touch the pixel.
  T alpha_at(std::size_t i, int x, int y, T& dx, T& dy) const {
    if (x < x0[i] || x > x1[i] || y < y0[i] || y > y1[i]) return T(-1);
    dx = T(x) - mx[i];
    dy = T(y) - my[i];
    const T power = T(0.5) * (ca[i] * dx * dx + cc[i] * dy * dy) + cb[i] * dx * dy;
    if (power > T(detail::kKernelPowerCutoff)) return T(-1);
    return op[i] * std::exp(-power);
  }
};

void bin_tiles(RenderState& st, int width, int height) {
  const int ts = st.settings.tile_size;
  st.tiles_x = (width + ts - 1) / ts;
  st.tiles_y = (height + ts - 1) / ts;
  const std::size_t ntiles = static_cast<std::size_t>(st.tiles_x) * st.tiles_y;
  std::vector<std::size_t> counts(ntiles, 0);
  auto for_tiles = [&](const ProjectedSplat& s, auto&& fn) {
    for (int ty = s.y_min / ts; ty <= s.y_max / ts; ++ty) {
      for (int tx = s.x_min / ts; tx <= s.x_max / ts; ++tx) {
        fn(static_cast<std::size_t>(ty) * st.tiles_x + tx);
      }
    }
  };
  for (const auto& s : st.splats) for_tiles(s, [&](std::size_t t) { ++counts[t]; });
  st.tile_begin.assign(ntiles + 1, 0);
  for (std::size_t t = 0; t < ntiles; ++t) st.tile_begin[t + 1] = st.tile_begin[t] + counts[t];
  st.tile_entries.assign(st.tile_begin.back(), 0);
  std::vector<std::size_t> cursor(st.tile_begin.begin(), st.tile_begin.end() - 1);
  for (std::size_t i = 0; i < st.splats.size(); ++i) {
    for_tiles(st.splats[i], [&](std::size_t t) { st.tile_entries[cursor[t]++] = static_cast<int>(i); });
  }
}

template <class T>
void rasterize_forward(RenderState& st, RenderOutput& out) {
  const int width = st.cam.width, height = st.cam.height;
  const int ts = st.settings.tile_size;
  const ChannelSet ch = st.channels;
  const bool thresholds = st.settings.thresholds;
  const T min_alpha = T(st.settings.min_alpha);
  const T min_t = T(st.settings.min_transmittance);
  const T bg[3] = {T(st.settings.background.x()), T(st.settings.background.y()),
                   T(st.settings.background.z())};
  const std::size_t ntiles = static_cast<std::size_t>(st.tiles_x) * st.tiles_y;
  st.pixel_last.assign(static_cast<std::size_t>(width) * height, 0);
  std::vector<std::vector<double>> tile_contrib(ntiles);

  parallel_for(ntiles, [&](std::size_t tile) {
    const std::size_t begin = st.tile_begin[tile], end = st.tile_begin[tile + 1];
    const std::size_t count = end - begin;
    TileSplats<T> sp;
    sp.load(st.splats, st.tile_entries.data() + begin, count);
    std::vector<double>& contrib = tile_contrib[tile];
    contrib.assign(count, 0.0);
    const int tx = static_cast<int>(tile % st.tiles_x), ty = static_cast<int>(tile / st.tiles_x);
    for (int y = ty * ts; y < std::min(height, (ty + 1) * ts); ++y) {
      for (int x = tx * ts; x < std::min(width, (tx + 1) * ts); ++x) {
        T trans = T(1);
        T acc_r = 0, acc_g = 0, acc_b = 0, acc_d = 0, acc_u = 0, acc_fx = 0, acc_fy = 0, acc_a = 0;
        int last = 0;
        for (std::size_t i = 0; i < count; ++i) {
          T dx, dy;
          const T a = sp.alpha_at(i, x, y, dx, dy);
          if (a < T(0)) continue;
          if (thresholds && a < min_alpha) continue;
          const T w = a * trans;
          acc_a += w;
          if (ch.color) {
            acc_r += w * sp.r[i];
            acc_g += w * sp.g[i];
            acc_b += w * sp.b[i];
          }
          if (ch.depth) acc_d += w * sp.depth[i];
          if (ch.uncertainty) acc_u += w * sp.unc[i];
          if (ch.flow) {
            acc_fx += w * sp.fx[i];
            acc_fy += w * sp.fy[i];
          }
          contrib[i] += static_cast<double>(w);
          trans *= T(1) - a;
          last = static_cast<int>(i) + 1;
          if (thresholds && trans < min_t) break;
        }
        st.pixel_last[static_cast<std::size_t>(y) * width + x] = last;
        out.alpha.at(y, x) = static_cast<double>(acc_a);
        out.transmittance.at(y, x) = static_cast<double>(trans);
        if (ch.color) {
          out.color.at(y, x, 0) = static_cast<double>(acc_r + trans * bg[0]);
          out.color.at(y, x, 1) = static_cast<double>(acc_g + trans * bg[1]);
          out.color.at(y, x, 2) = static_cast<double>(acc_b + trans * bg[2]);
        }
        if (ch.depth) out.depth.at(y, x) = static_cast<double>(acc_d);
        if (ch.uncertainty) out.uncertainty.at(y, x) = static_cast<double>(acc_u);
        if (ch.flow) {
          out.flow.at(y, x, 0) = static_cast<double>(acc_fx);
          out.flow.at(y, x, 1) = static_cast<double>(acc_fy);
        }
      }
    }
  });

  for (std::size_t tile = 0; tile < ntiles; ++tile) {
    const std::size_t begin = st.tile_begin[tile];
    for (std::size_t i = 0; i < tile_contrib[tile].size(); ++i) {
      const auto& s = st.splats[static_cast<std::size_t>(st.tile_entries[begin + i])];
      out.contributions[static_cast<std::size_t>(s.index)] += tile_contrib[tile][i];
    }
  }
}

template <class T>
RenderOutput render_impl(const GaussianModel& model, const DeformationField* field,
                         const Camera& cam, const RenderRequest& request,
                         const RenderSettings& settings) {
  if (settings.tile_size < 1) throw InvalidParameter("tile size must be positive");
  auto st = std::make_shared<RenderState>();
  st->precision = settings.precision;
  st->settings = settings;
  st->cam = cam;
  st->channels = request.channels;
  if (request.channels.flow) st->flow_target = request.flow_target;
  st->model_size = model.size();
  st->has_field = field != nullptr;
  st->field_params = field ? field->param_count() : 0;
  const FrameContext fc = frame_context(st->cam, request);
  st->splats = project_all<T>(model, field, fc, true);
  bin_tiles(*st, cam.width, cam.height);

  RenderOutput out;
  out.width = cam.width;
  out.height = cam.height;
  const ChannelSet ch = request.channels;
  if (ch.color) out.color = Image(cam.width, cam.height, 3);
  if (ch.depth) out.depth = Image(cam.width, cam.height, 1);
  if (ch.uncertainty) out.uncertainty = Image(cam.width, cam.height, 1);
  if (ch.flow) out.flow = Image(cam.width, cam.height, 2);
  out.alpha = Image(cam.width, cam.height, 1);
  out.transmittance = Image(cam.width, cam.height, 1);
  out.contributions.assign(model.size(), 0.0);
  rasterize_forward<T>(*st, out);
  out.state = st;
  return out;
}

void check_upstream(const Image& img, const RenderState& st, int channels, bool enabled,
                    const char* name) {
  if (img.empty()) return;
  if (!enabled) {
    throw ContractError(std::string("upstream gradient for channel '") + name +
                        "' that the forward pass did not render");
  }
  if (img.width != st.cam.width || img.height != st.cam.height || img.channels != channels) {
    throw ContractError(std::string("upstream gradient shape mismatch for channel '") + name + "'");
  }
}

struct PixelEntry {
  int i;
  double a, trans, dx, dy;
};

template <class T>
void rasterize_backward(const RenderState& st, const RenderGradients& up,
                        std::vector<SplatGrad>& splat_grads) {
  const int width = st.cam.width, height = st.cam.height;
  const int ts = st.settings.tile_size;
  const bool thresholds = st.settings.thresholds;
  const T min_alpha = T(st.settings.min_alpha);
  const T bg[3] = {T(st.settings.background.x()), T(st.settings.background.y()),
                   T(st.settings.background.z())};
  const bool has_c = !up.color.empty(), has_d = !up.depth.empty(),
             has_u = !up.uncertainty.empty(), has_f = !up.flow.empty(), has_a = !up.alpha.empty();
  const std::size_t ntiles = static_cast<std::size_t>(st.tiles_x) * st.tiles_y;
  std::vector<std::vector<SplatGrad>> tile_grads(ntiles);

  parallel_for(ntiles, [&](std::size_t tile) {
    const std::size_t begin = st.tile_begin[tile], end = st.tile_begin[tile + 1];
    const std::size_t count = end - begin;
    TileSplats<T> sp;
    sp.load(st.splats, st.tile_entries.data() + begin, count);
    std::vector<SplatGrad>& grads = tile_grads[tile];
    grads.assign(count, SplatGrad{});
    std::vector<PixelEntry> entries;
    entries.reserve(count);
    std::vector<T> e_a, e_t;
    const int tx = static_cast<int>(tile % st.tiles_x), ty = static_cast<int>(tile / st.tiles_x);
    for (int y = ty * ts; y < std::min(height, (ty + 1) * ts); ++y) {
      for (int x = tx * ts; x < std::min(width, (tx + 1) * ts); ++x) {
        const T gc[3] = {has_c ? T(up.color.at(y, x, 0)) : T(0),
                         has_c ? T(up.color.at(y, x, 1)) : T(0),
                         has_c ? T(up.color.at(y, x, 2)) : T(0)};
        const T gd = has_d ? T(up.depth.at(y, x)) : T(0);
        const T gu = has_u ? T(up.uncertainty.at(y, x)) : T(0);
        const T gfx = has_f ? T(up.flow.at(y, x, 0)) : T(0);
        const T gfy = has_f ? T(up.flow.at(y, x, 1)) : T(0);
        const T ga = has_a ? T(up.alpha.at(y, x)) : T(0);
        if (gc[0] == T(0) && gc[1] == T(0) && gc[2] == T(0) && gd == T(0) && gu == T(0) &&
            gfx == T(0) && gfy == T(0) && ga == T(0)) {
          continue;
        }
        // Replay the forward pass for this pixel.
        const int last = st.pixel_last[static_cast<std::size_t>(y) * width + x];
        entries.clear();
        e_a.clear();
        e_t.clear();
        T trans = T(1);
        for (int i = 0; i < last; ++i) {
          T dx, dy;
          const T a = sp.alpha_at(static_cast<std::size_t>(i), x, y, dx, dy);
          if (a < T(0)) continue;
          if (thresholds && a < min_alpha) continue;
          entries.push_back({i, 0, 0, static_cast<double>(dx), static_cast<double>(dy)});
          e_a.push_back(a);
          e_t.push_back(trans);
          trans *= T(1) - a;
        }
        // Back to front: rest = gradient-weighted payload of everything behind.
        T rest = gc[0] * bg[0] + gc[1] * bg[1] + gc[2] * bg[2];
        for (std::size_t e = entries.size(); e-- > 0;) {
          const std::size_t i = static_cast<std::size_t>(entries[e].i);
          const T a = e_a[e], tr = e_t[e];
          const T w = a * tr;
          const T payload = gc[0] * sp.r[i] + gc[1] * sp.g[i] + gc[2] * sp.b[i] + gd * sp.depth[i] +
                            gu * sp.unc[i] + gfx * sp.fx[i] + gfy * sp.fy[i] + ga;
          SplatGrad& sg = grads[i];
          for (int c = 0; c < 3; ++c) sg.color[c] += static_cast<double>(w * gc[c]);
          sg.depth += static_cast<double>(w * gd);
          sg.flow[0] += static_cast<double>(w * gfx);
          sg.flow[1] += static_cast<double>(w * gfy);
          const T d_a = tr * (payload - rest);
          rest = a * payload + (T(1) - a) * rest;
          const T g_kernel = a / sp.op[i];
          sg.opacity += static_cast<double>(g_kernel * d_a);
          const T d_power = -a * d_a;
          const T dx = T(entries[e].dx), dy = T(entries[e].dy);
          sg.mean[0] += static_cast<double>(-d_power * (sp.ca[i] * dx + sp.cb[i] * dy));
          sg.mean[1] += static_cast<double>(-d_power * (sp.cb[i] * dx + sp.cc[i] * dy));
          sg.conic[0] += static_cast<double>(d_power * T(0.5) * dx * dx);
          sg.conic[1] += static_cast<double>(d_power * dx * dy);
          sg.conic[2] += static_cast<double>(d_power * T(0.5) * dy * dy);
        }
      }
    }
  });

  splat_grads.assign(st.splats.size(), SplatGrad{});
  for (std::size_t tile = 0; tile < ntiles; ++tile) {
    const std::size_t begin = st.tile_begin[tile];
    for (std::size_t i = 0; i < tile_grads[tile].size(); ++i) {
      splat_grads[static_cast<std::size_t>(st.tile_entries[begin + i])].add(tile_grads[tile][i]);
    }
  }
}

// Fixed chunking keeps field-gradient summation order independent of the
// number of worker threads.
constexpr std::size_t kBackwardChunk = 64;

template <class T>
void backward_impl(const GaussianModel& model, const DeformationField* field,
                   const RenderState& st, const RenderGradients& up, ModelGradients& grads,
                   std::vector<double>* screen_grad) {
  std::vector<SplatGrad> splat_grads;
  rasterize_backward<T>(st, up, splat_grads);

  RenderRequest request;
  request.channels = st.channels;
  request.flow_target = st.flow_target;
  const FrameContext fc = frame_context(st.cam, request);

  const std::size_t n = st.splats.size();
  const std::size_t chunks = (n + kBackwardChunk - 1) / kBackwardChunk;
  std::vector<std::vector<double>> chunk_field(field ? chunks : 0);
  parallel_for(chunks, [&](std::size_t c) {
    double* fg = nullptr;
    if (field) {
      chunk_field[c].assign(field->param_count(), 0.0);
      fg = chunk_field[c].data();
    }
    const std::size_t end = std::min(n, (c + 1) * kBackwardChunk);
    for (std::size_t i = c * kBackwardChunk; i < end; ++i) {
      const auto k = static_cast<std::size_t>(st.splats[i].index);
      detail::primitive_backward<T>(model, field, fc, k, splat_grads[i], grads, fg);
    }
  });
  if (field) {
    for (const auto& buf : chunk_field) {
      for (std::size_t j = 0; j < buf.size(); ++j) grads.field[j] += buf[j];
    }
  }
  if (screen_grad) {
    screen_grad->assign(model.size(), 0.0);
    const double sx = 0.5 * st.cam.width, sy = 0.5 * st.cam.height;
    for (std::size_t i = 0; i < n; ++i) {
      const double gx = splat_grads[i].mean[0] * sx, gy = splat_grads[i].mean[1] * sy;
      (*screen_grad)[static_cast<std::size_t>(st.splats[i].index)] = std::hypot(gx, gy);
    }
  }
}

}  // namespace

double splat_kernel(const ProjectedSplat& s, double x, double y) {
  const double dx = x - s.mean.x(), dy = y - s.mean.y();
  const double power = 0.5 * (s.conic_a * dx * dx + s.conic_c * dy * dy) + s.conic_b * dx * dy;
  if (power > detail::kKernelPowerCutoff) return 0.0;
  return std::exp(-power);
}

std::vector<BlendWeight> blend_weights(const SortedSplatList& splats, const Vec2& pixel,
                                       const BlendOptions& options) {
  std::vector<BlendWeight> out;
  double trans = 1.0;
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const double a = splats[i].opacity * splat_kernel(splats[i], pixel.x(), pixel.y());
    if (a <= 0) continue;
    if (options.thresholds && a < options.min_alpha) continue;
    out.push_back({static_cast<int>(i), a * trans});
    trans *= 1.0 - a;
    if (options.thresholds && trans < options.min_transmittance) break;
  }
  return out;
}

SortedSplatList build_splat_list(const GaussianModel& model, const DeformationField* field,
                                 const Camera& cam, const RenderRequest& request,
                                 Precision precision) {
  check_inputs(model, field, cam, request);
  const FrameContext fc = frame_context(cam, request);
  return precision == Precision::Float32 ? project_all<float>(model, field, fc, true)
                                         : project_all<double>(model, field, fc, true);
}

ModelGradients::ModelGradients(const GaussianModel& model, const DeformationField* field)
    : positions(model.positions.size(), 0.0),
      rotations(model.rotations.size(), 0.0),
      log_scales(model.log_scales.size(), 0.0),
      opacity_logits(model.opacity_logits.size(), 0.0),
      features(model.features.size(), 0.0),
      field(field ? field->param_count() : 0, 0.0) {}

void ModelGradients::zero() {
  for (auto* v : {&positions, &rotations, &log_scales, &opacity_logits, &features, &field}) {
    std::fill(v->begin(), v->end(), 0.0);
  }
}

void ModelGradients::add(const ModelGradients& o) {
  auto acc = [](std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ContractError("ModelGradients::add size mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  acc(positions, o.positions);
  acc(rotations, o.rotations);
  acc(log_scales, o.log_scales);
  acc(opacity_logits, o.opacity_logits);
  acc(features, o.features);
  acc(field, o.field);
}

RenderOutput render(const GaussianModel& model, const DeformationField* field,
                    const Camera& cam, const RenderRequest& request,
                    const RenderSettings& settings) {
  check_inputs(model, field, cam, request);
  return settings.precision == Precision::Float32
             ? render_impl<float>(model, field, cam, request, settings)
             : render_impl<double>(model, field, cam, request, settings);
}

RenderOutput render_flow_pair(const GaussianModel& model, const DeformationField* field,
                              const Camera& frame_a, const Camera& frame_b,
                              const RenderSettings& settings) {
  if (frame_a.timestamp < 0 || frame_a.timestamp > 1 || frame_b.timestamp < 0 ||
      frame_b.timestamp > 1) {
    throw InvalidParameter("render_flow_pair: timestamps must lie in [0, 1]");
  }
  RenderRequest request;
  request.channels = {false, false, false, true};
  request.flow_target = frame_b;
  return render(model, field, frame_a, request, settings);
}

void render_backward(const GaussianModel& model, const DeformationField* field,
                     const RenderOutput& forward, const RenderGradients& upstream,
                     ModelGradients& grads, std::vector<double>* screen_grad) {
  if (!forward.state) throw ContractError("render_backward: forward pass retained no state");
  const RenderState& st = *forward.state;
  if (st.model_size != model.size() || st.has_field != (field != nullptr) ||
      st.field_params != (field ? field->param_count() : 0)) {
    throw ContractError("render_backward: model or field does not match the forward pass");
  }
  if (grads.opacity_logits.size() != model.size() ||
      grads.features.size() != model.features.size() ||
      grads.field.size() != (field ? field->param_count() : 0)) {
    throw ContractError("render_backward: gradient buffers do not match the model");
  }
  check_upstream(upstream.color, st, 3, st.channels.color, "color");
  check_upstream(upstream.depth, st, 1, st.channels.depth, "depth");
  check_upstream(upstream.uncertainty, st, 1, st.channels.uncertainty, "uncertainty");
  check_upstream(upstream.flow, st, 2, st.channels.flow, "flow");
  check_upstream(upstream.alpha, st, 1, true, "alpha");
  if (st.precision == Precision::Float32) {
    backward_impl<float>(model, field, st, upstream, grads, screen_grad);
  } else {
    backward_impl<double>(model, field, st, upstream, grads, screen_grad);
  }
}

RenderOutput render_oracle(const GaussianModel& model, const DeformationField* field,
                           const Camera& cam, const RenderRequest& request,
                           const Vec3& background) {
  check_inputs(model, field, cam, request);
  const FrameContext fc = frame_context(cam, request);
  // No off-screen culling: every projected primitive is tested at every pixel.
  const SortedSplatList splats = project_all<double>(model, field, fc, false);
  const ChannelSet ch = request.channels;
  RenderOutput out;
  out.width = cam.width;
  out.height = cam.height;
  if (ch.color) out.color = Image(cam.width, cam.height, 3);
  if (ch.depth) out.depth = Image(cam.width, cam.height, 1);
  if (ch.uncertainty) out.uncertainty = Image(cam.width, cam.height, 1);
  if (ch.flow) out.flow = Image(cam.width, cam.height, 2);
  out.alpha = Image(cam.width, cam.height, 1);
  out.transmittance = Image(cam.width, cam.height, 1);
  out.contributions.assign(model.size(), 0.0);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      double trans = 1.0;
      Vec3 color = Vec3::Zero();
      Vec2 flow = Vec2::Zero();
      double depth = 0, unc = 0, acc = 0;
      for (const auto& s : splats) {
        const double a = s.opacity * splat_kernel(s, x, y);
        const double w = a * trans;
        color += w * s.color;
        depth += w * s.depth;
        unc += w * s.uncertainty;
        flow += w * s.flow;
        acc += w;
        out.contributions[static_cast<std::size_t>(s.index)] += w;
        trans *= 1.0 - a;
      }
      color += trans * background;
      if (ch.color) {
        for (int c = 0; c < 3; ++c) out.color.at(y, x, c) = color[c];
      }
      if (ch.depth) out.depth.at(y, x) = depth;
      if (ch.uncertainty) out.uncertainty.at(y, x) = unc;
      if (ch.flow) {
        out.flow.at(y, x, 0) = flow.x();
        out.flow.at(y, x, 1) = flow.y();
      }
      out.alpha.at(y, x) = acc;
      out.transmittance.at(y, x) = trans;
    }
  }
  return out;
}

}  // namespace uags
