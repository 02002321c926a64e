#pragma once

#include <cstddef>
#include <vector>

namespace uags {

// Row-major H x W x C float64 image. Render outputs, supervision maps and
// per-pixel gradients all share this layout.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return data.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t size() const { return data.size(); }

  std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int y, int x, int c = 0) { return data[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const { return data[index(y, x, c)]; }

  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

// Binary per-pixel mask; empty means "no mask".
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> data;

  Mask() = default;
  Mask(int w, int h, bool fill = false)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

  bool empty() const { return data.empty(); }
  bool at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data) n += v != 0;
    return n;
  }
};

}  // namespace uags
