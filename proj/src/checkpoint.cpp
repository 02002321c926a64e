#include "uags/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace uags {

namespace {

constexpr char kMagic[4] = {'U', 'A', 'G', 'S'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error(path.string() + ": cannot open for writing");
  }
  template <class T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void floats(const std::vector<double>& v) {
    pod(static_cast<std::uint64_t>(v.size()));
    std::vector<float> buf(v.begin(), v.end());
    out_.write(reinterpret_cast<const char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  void finish() {
    out_.flush();
    if (!out_) throw Error(path_.string() + ": write failed");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw LoadError(path.string(), "cannot open checkpoint");
  }
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) throw LoadError(path_.string(), "truncated checkpoint");
    return v;
  }
  std::vector<double> floats(std::size_t expected) {
    const auto n = pod<std::uint64_t>();
    if (n != expected) throw LoadError(path_.string(), "array length mismatch in checkpoint");
    std::vector<float> buf(n);
    in_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in_) throw LoadError(path_.string(), "truncated checkpoint");
    std::vector<double> out(buf.begin(), buf.end());
    for (double v : out) {
      if (!std::isfinite(v)) throw LoadError(path_.string(), "non-finite value in checkpoint");
    }
    return out;
  }
  void raw(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (!in_) throw LoadError(path_.string(), "truncated checkpoint");
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

std::array<std::size_t, kParamGroupCount> group_sizes(const GaussianModel& m,
                                                      const std::optional<DeformationField>& f) {
  return {m.positions.size(), m.rotations.size(), m.log_scales.size(), m.opacity_logits.size(),
          m.features.size(), f ? f->param_count() : 0};
}

void round_vec(std::vector<double>& v) {
  for (auto& x : v) x = static_cast<float>(x);
}

}  // namespace

void round_to_storage(Checkpoint& c) {
  for (auto* v : {&c.model.positions, &c.model.rotations, &c.model.log_scales,
                  &c.model.opacity_logits, &c.model.features, &c.model.contributions,
                  &c.model.uncertainties}) {
    round_vec(*v);
  }
  if (c.field) round_vec(c.field->params);
  for (auto& g : c.optimizer.groups) {
    round_vec(g.m);
    round_vec(g.v);
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  c.model.validate();
  const auto sizes = group_sizes(c.model, c.field);
  for (int g = 0; g < kParamGroupCount; ++g) {
    const auto& mo = c.optimizer.groups[g];
    if ((!mo.m.empty() || !mo.v.empty()) && (mo.m.size() != sizes[g] || mo.v.size() != sizes[g])) {
      throw ContractError("optimizer state does not match the model");
    }
  }
  Writer w(path);
  w.pod(kMagic);
  w.pod(kCheckpointVersion);
  w.pod(static_cast<std::uint64_t>(c.iteration));
  for (int i = 0; i < 3; ++i) w.pod(c.background[i]);
  w.pod(static_cast<std::uint32_t>(c.model.sh_degree()));
  w.pod(static_cast<std::uint64_t>(c.model.size()));
  w.floats(c.model.positions);
  w.floats(c.model.rotations);
  w.floats(c.model.log_scales);
  w.floats(c.model.opacity_logits);
  w.floats(c.model.features);
  w.floats(c.model.contributions);
  w.floats(c.model.uncertainties);
  w.pod(static_cast<std::uint8_t>(c.field ? 1 : 0));
  if (c.field) {
    const auto& cfg = c.field->config();
    for (int v : {cfg.feature_dim, cfg.spatial_res, cfg.temporal_res, cfg.hidden_dim}) {
      w.pod(static_cast<std::int32_t>(v));
    }
    for (int i = 0; i < 3; ++i) w.pod(c.field->box().min[i]);
    for (int i = 0; i < 3; ++i) w.pod(c.field->box().max[i]);
    w.floats(c.field->params);
  }
  w.pod(static_cast<std::uint64_t>(c.optimizer.step));
  for (int g = 0; g < kParamGroupCount; ++g) {
    const auto& mo = c.optimizer.groups[g];
    const bool present = !mo.m.empty() || sizes[g] == 0;
    w.pod(static_cast<std::uint8_t>(present && sizes[g] > 0 ? 1 : 0));
    if (present && sizes[g] > 0) {
      w.floats(mo.m);
      w.floats(mo.v);
    }
  }
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw LoadError(path.string(), "not a UAGS checkpoint");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw LoadError(path.string(), "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.iteration = r.pod<std::uint64_t>();
  for (int i = 0; i < 3; ++i) c.background[i] = r.pod<double>();
  const auto degree = r.pod<std::uint32_t>();
  if (degree > static_cast<std::uint32_t>(kMaxShDegree)) {
    throw LoadError(path.string(), "unsupported SH degree in checkpoint");
  }
  c.model = GaussianModel(static_cast<int>(degree));
  const auto n = r.pod<std::uint64_t>();
  if (n > (1ull << 32)) throw LoadError(path.string(), "implausible primitive count");
  c.model.positions = r.floats(3 * n);
  c.model.rotations = r.floats(4 * n);
  c.model.log_scales = r.floats(3 * n);
  c.model.opacity_logits = r.floats(n);
  c.model.features = r.floats(static_cast<std::size_t>(c.model.feature_stride()) * n);
  c.model.contributions = r.floats(n);
  c.model.uncertainties = r.floats(n);
  if (r.pod<std::uint8_t>()) {
    DeformationConfig cfg;
    cfg.feature_dim = r.pod<std::int32_t>();
    cfg.spatial_res = r.pod<std::int32_t>();
    cfg.temporal_res = r.pod<std::int32_t>();
    cfg.hidden_dim = r.pod<std::int32_t>();
    Aabb box;
    for (int i = 0; i < 3; ++i) box.min[i] = r.pod<double>();
    for (int i = 0; i < 3; ++i) box.max[i] = r.pod<double>();
    try {
      c.field.emplace(cfg, box, 0);
    } catch (const InvalidParameter& e) {
      throw LoadError(path.string(), std::string("invalid deformation field: ") + e.what());
    }
    c.field->params = r.floats(c.field->param_count());
  }
  c.optimizer.step = r.pod<std::uint64_t>();
  const auto sizes = group_sizes(c.model, c.field);
  for (int g = 0; g < kParamGroupCount; ++g) {
    if (r.pod<std::uint8_t>()) {
      c.optimizer.groups[g].m = r.floats(sizes[g]);
      c.optimizer.groups[g].v = r.floats(sizes[g]);
    }
  }
  return c;
}

}  // namespace uags
