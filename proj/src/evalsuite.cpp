#include "uags/evalsuite.hpp"

#include "uags/metrics.hpp"

#include <iomanip>
#include <sstream>

namespace uags {

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream s;
  s << std::setprecision(10) << *v;
  return s.str();
}

std::optional<double> mean_of(const std::vector<FrameMetrics>& frames,
                              std::optional<double> FrameMetrics::*member) {
  double sum = 0;
  int n = 0;
  for (const auto& f : frames) {
    if (f.*member) sum += *(f.*member), ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

std::string metrics_csv(const std::vector<FrameMetrics>& frames) {
  std::ostringstream s;
  s << "frame_id,psnr,mpsnr,ssim,mssim\n";
  for (const auto& f : frames) {
    s << f.frame_id << ',' << cell(f.psnr) << ',' << cell(f.mpsnr) << ',' << cell(f.ssim) << ','
      << cell(f.mssim) << '\n';
  }
  return s.str();
}

EvalSummary evaluate(const Checkpoint& ckpt, const SceneBundle& scene, Split split,
                     const std::filesystem::path& image_dir, Precision precision) {
  const auto frames = scene.split(split);
  if (frames.empty()) throw InvalidParameter("evaluate: the requested split has no frames");
  if (!image_dir.empty()) std::filesystem::create_directories(image_dir);
  RenderSettings settings;
  settings.background = ckpt.background;
  settings.precision = precision;
  const DeformationField* field = ckpt.field ? &*ckpt.field : nullptr;

  EvalSummary summary;
  for (const Frame* f : frames) {
    const Image pred = render(ckpt.model, field, f->camera, RenderRequest{}, settings).color;
    FrameMetrics m;
    m.frame_id = f->id;
    m.psnr = *psnr(pred, f->image);
    m.ssim = ssim(pred, f->image).value_or(0.0);
    if (f->covisibility) {
      m.mpsnr = psnr(pred, f->image, &*f->covisibility);
      m.mssim = ssim(pred, f->image, &*f->covisibility);
    }
    if (!image_dir.empty()) {
      write_png_rgb(image_dir / (f->id + "_render.png"), pred);
      const Image diff = abs_difference(pred, f->image);
      Image rgb(diff.width, diff.height, 3);
      for (std::size_t i = 0; i < diff.pixel_count(); ++i) {
        for (int c = 0; c < 3; ++c) rgb.data[3 * i + c] = diff.data[i];
      }
      write_png_rgb(image_dir / (f->id + "_diff.png"), rgb);
    }
    summary.frames.push_back(std::move(m));
  }
  double ps = 0, ss = 0;
  for (const auto& m : summary.frames) ps += m.psnr, ss += m.ssim;
  summary.mean_psnr = ps / summary.frames.size();
  summary.mean_ssim = ss / summary.frames.size();
  summary.mean_mpsnr = mean_of(summary.frames, &FrameMetrics::mpsnr);
  summary.mean_mssim = mean_of(summary.frames, &FrameMetrics::mssim);
  return summary;
}

}  // namespace uags
