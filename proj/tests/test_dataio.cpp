#include "uags/dataio.hpp"
#include "uags/synth.hpp"

#include "image_ref.hpp"
#include "tempdir.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace uags;
using uags::testing::random_image;
using uags::testing::read_file;
using uags::testing::TempDir;

namespace {

void expect_load_error_names(const fs::path& file, const std::function<void()>& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find(file.filename().string()), std::string::npos) << e.what();
  }
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

SceneBundle small_scene() {
  SynthSpec spec = synth_preset("ellipsoid", 1);
  spec.width = 20;
  spec.height = 14;
  spec.frames = 5;
  spec.sfm_points = 50;
  return synth_scene(spec, 1);
}

}  // namespace

TEST(Png, RoundTripIsExactOnEightBitValues) {
  TempDir dir;
  Image img(7, 5, 3);
  std::mt19937_64 rng(1);
  for (auto& v : img.data) v = static_cast<double>(rng() % 256) / 255.0;
  write_png_rgb(dir / "a.png", img);
  EXPECT_EQ(read_png_rgb(dir / "a.png").data, img.data);
  Mask m(7, 5);
  for (auto& v : m.data) v = rng() % 2;
  write_png_mask(dir / "m.png", m);
  EXPECT_EQ(read_png_mask(dir / "m.png").data, m.data);
  Image g(7, 5, 1);
  for (auto& v : g.data) v = static_cast<double>(rng() % 65536) / 65535.0;
  write_png_gray16(dir / "g.png", g);
  const Image raw = read_png_gray_raw(dir / "g.png");
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(raw.data[i], std::round(g.data[i] * 65535));
}

TEST(Pfm, RoundTripIsBitExactOnFloat32) {
  TempDir dir;
  for (int c : {1, 3}) {
    Image img = random_image(9, 4, c, 2, -5, 5);
    for (auto& v : img.data) v = static_cast<float>(v);
    img.data[3] = std::numeric_limits<float>::infinity();
    write_pfm(dir / "d.pfm", img);
    const Image back = read_pfm(dir / "d.pfm");
    EXPECT_EQ(back.channels, c);
    EXPECT_EQ(back.data, img.data);
  }
}

TEST(Pfm, RowsAreStoredBottomToTop) {
  TempDir dir;
  Image img(1, 2, 1);
  img.at(0, 0) = 1.0;
  img.at(1, 0) = 2.0;
  write_pfm(dir / "d.pfm", img);
  const std::string bytes = read_file(dir / "d.pfm");
  float first = 0;
  std::memcpy(&first, bytes.data() + bytes.size() - 8, 4);
  EXPECT_EQ(first, 2.0f);
}

TEST(Flo, RoundTripAndHeader) {
  TempDir dir;
  Image f = random_image(6, 3, 2, 3, -10, 10);
  for (auto& v : f.data) v = static_cast<float>(v);
  write_flo(dir / "f.flo", f);
  EXPECT_EQ(read_flo(dir / "f.flo").data, f.data);
  const std::string bytes = read_file(dir / "f.flo");
  EXPECT_EQ(bytes.substr(0, 4), "PIEH");
  EXPECT_EQ(bytes.size(), 12u + 6 * 3 * 2 * 4);
}

TEST(Ply, RoundTrip) {
  TempDir dir;
  PointCloud c;
  for (int i = 0; i < 10; ++i) {
    c.points.push_back(Vec3(static_cast<float>(0.1 * i), static_cast<float>(-0.3 * i), 2.5f));
    c.colors.push_back({static_cast<std::uint8_t>(i), 200, static_cast<std::uint8_t>(25 * i)});
  }
  write_ply(dir / "p.ply", c);
  const PointCloud back = read_ply(dir / "p.ply");
  ASSERT_EQ(back.points.size(), 10u);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(back.points[i], c.points[i]);
    EXPECT_EQ(back.colors[i], c.colors[i]);
  }
}

TEST(Readers, ErrorsNameTheFile) {
  TempDir dir;
  write_text(dir / "bad.png", "not a png");
  write_text(dir / "bad.pfm", "P5\n1 1\n-1\n");
  write_text(dir / "bad.flo", "XXXX");
  write_text(dir / "bad.ply", "ply\nformat ascii 1.0\nend_header\n");
  expect_load_error_names(dir / "bad.png", [&] { read_png_rgb(dir / "bad.png"); });
  expect_load_error_names(dir / "bad.pfm", [&] { read_pfm(dir / "bad.pfm"); });
  expect_load_error_names(dir / "bad.flo", [&] { read_flo(dir / "bad.flo"); });
  expect_load_error_names(dir / "bad.ply", [&] { read_ply(dir / "bad.ply"); });
  expect_load_error_names(dir / "missing.png", [&] { read_png_rgb(dir / "missing.png"); });
}

TEST(Scene, SaveLoadRoundTripIsExact) {
  TempDir dir;
  const SceneBundle s = small_scene();
  save_scene(s, dir.path());
  EXPECT_TRUE(lint_scene(dir.path()).empty());
  const SceneBundle back = load_scene(dir.path());
  ASSERT_EQ(back.frames.size(), s.frames.size());
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    const Frame &a = s.frames[i], &b = back.frames[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.split, b.split);
    EXPECT_EQ(a.camera.timestamp, b.camera.timestamp);
    EXPECT_EQ(a.camera.world_to_camera, b.camera.world_to_camera);
    EXPECT_EQ(a.image.data, b.image.data);
    EXPECT_EQ(a.depth->data, b.depth->data);
    EXPECT_EQ(a.flow.has_value(), b.flow.has_value());
    if (a.flow) EXPECT_EQ(a.flow->data, b.flow->data);
    EXPECT_EQ(a.dynamic_mask->data, b.dynamic_mask->data);
    EXPECT_EQ(a.covisibility.has_value(), b.covisibility.has_value());
  }
  EXPECT_EQ(back.points->points.size(), s.points->points.size());
  // Saving the loaded scene reproduces the manifest byte for byte.
  TempDir again;
  save_scene(back, again.path());
  EXPECT_EQ(read_file(dir / "scene.json"), read_file(again / "scene.json"));
}

TEST(Scene, LintReportsEveryProblemWithItsFile) {
  TempDir dir;
  save_scene(small_scene(), dir.path());
  fs::remove(dir.path() / "images" / "0001.png");
  write_text(dir.path() / "depth" / "0002.pfm", "garbage");
  const auto issues = lint_scene(dir.path());
  ASSERT_EQ(issues.size(), 2u);
  EXPECT_NE(issues[0].find("0001.png"), std::string::npos);
  EXPECT_NE(issues[1].find("0002.pfm"), std::string::npos);
  expect_load_error_names(dir.path() / "images" / "0001.png", [&] { load_scene(dir.path()); });
}

TEST(Scene, ManifestValidation) {
  TempDir dir;
  expect_load_error_names(dir / "scene.json", [&] { load_scene(dir.path()); });
  save_scene(small_scene(), dir.path());
  std::string text = read_file(dir / "scene.json");
  const auto pos = text.find("\"schema_version\": 1");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 19, "\"schema_version\": 7");
  write_text(dir / "scene.json", text);
  expect_load_error_names(dir / "scene.json", [&] { load_scene(dir.path()); });
  write_text(dir / "scene.json", "{ not json");
  expect_load_error_names(dir / "scene.json", [&] { load_scene(dir.path()); });
}

TEST(Scene, RejectsNonIncreasingTimestampsAndSizeMismatch) {
  TempDir dir;
  SceneBundle s = small_scene();
  s.frames[2].camera.timestamp = s.frames[1].camera.timestamp;
  save_scene(s, dir.path());
  auto issues = lint_scene(dir.path());
  ASSERT_FALSE(issues.empty());
  EXPECT_NE(issues[0].find("strictly increasing"), std::string::npos);

  TempDir dir2;
  SceneBundle t = small_scene();
  t.frames[0].depth = Image(3, 3, 1, 1.0);
  save_scene(t, dir2.path());
  issues = lint_scene(dir2.path());
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_NE(issues[0].find("0000.pfm"), std::string::npos);
}

TEST(Scene, NextTrainFrameSkipsHeldOut) {
  const SceneBundle s = small_scene();  // frame 3 is held out
  EXPECT_EQ(s.frames[3].split, Split::Val);
  EXPECT_EQ(next_train_frame(s, 2), 4);
  EXPECT_EQ(next_train_frame(s, 4), -1);
  EXPECT_FALSE(s.frames[4].flow.has_value());
  EXPECT_TRUE(s.frames[2].flow.has_value());
}
