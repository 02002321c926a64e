#include "uags/dataio.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace uags {

static_assert(std::endian::native == std::endian::little, "file codecs assume a little-endian host");

namespace {

std::vector<std::uint8_t> read_png_raw(const fs::path& path, std::uint32_t format, int& width,
                                       int& height) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!fs::exists(path)) throw LoadError(path.string(), "file not found");
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw LoadError(path.string(), std::string("cannot decode PNG: ") + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw LoadError(path.string(), "cannot decode PNG: " + msg);
  }
  width = static_cast<int>(img.width);
  height = static_cast<int>(img.height);
  return buf;
}

void write_png_raw(const fs::path& path, std::uint32_t format, int width, int height,
                   const void* data) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, data, 0, nullptr)) {
    throw Error(path.string() + ": cannot write PNG: " + img.message);
  }
}

std::uint8_t to_u8(double v) {
  if (!(v > 0)) return 0;
  if (v >= 1) return 255;
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), fs::exists(path) ? "cannot open file" : "file not found");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  return out;
}

template <class T>
void read_pod(std::istream& in, T& v, const fs::path& path) {
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw LoadError(path.string(), "truncated file");
}

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

Image read_png_rgb(const fs::path& path) {
  int w = 0, h = 0;
  const auto buf = read_png_raw(path, PNG_FORMAT_RGB, w, h);
  Image img(w, h, 3);
  for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i] / 255.0;
  return img;
}

void write_png_rgb(const fs::path& path, const Image& image) {
  if (image.channels != 3) throw ContractError("write_png_rgb expects 3 channels");
  std::vector<std::uint8_t> buf(image.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_u8(image.data[i]);
  write_png_raw(path, PNG_FORMAT_RGB, image.width, image.height, buf.data());
}

Mask read_png_mask(const fs::path& path) {
  int w = 0, h = 0;
  const auto buf = read_png_raw(path, PNG_FORMAT_GRAY, w, h);
  Mask m(w, h);
  for (std::size_t i = 0; i < buf.size(); ++i) m.data[i] = buf[i] != 0;
  return m;
}

void write_png_mask(const fs::path& path, const Mask& mask) {
  std::vector<std::uint8_t> buf(mask.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = mask.data[i] ? 255 : 0;
  write_png_raw(path, PNG_FORMAT_GRAY, mask.width, mask.height, buf.data());
}

void write_png_gray16(const fs::path& path, const Image& map, double scale) {
  if (map.channels != 1) throw ContractError("write_png_gray16 expects one channel");
  std::vector<std::uint16_t> buf(map.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double v = map.data[i] * scale;
    buf[i] = !(v > 0) ? 0 : v >= 65535.0 ? 65535 : static_cast<std::uint16_t>(std::lround(v));
  }
  write_png_raw(path, PNG_FORMAT_LINEAR_Y, map.width, map.height, buf.data());
}

Image read_png_gray_raw(const fs::path& path) {
  int w = 0, h = 0;
  const auto buf = read_png_raw(path, PNG_FORMAT_LINEAR_Y, w, h);
  Image img(w, h, 1);
  const auto* v = reinterpret_cast<const std::uint16_t*>(buf.data());
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = v[i];
  return img;
}

Image read_pfm(const fs::path& path) {
  auto in = open_in(path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  in >> magic >> w >> h >> scale;
  if (!in || (magic != "Pf" && magic != "PF")) throw LoadError(path.string(), "not a PFM file");
  if (w <= 0 || h <= 0) throw LoadError(path.string(), "invalid PFM dimensions");
  if (scale >= 0) throw LoadError(path.string(), "big-endian PFM is not supported");
  in.get();  // single whitespace after the header
  const int ch = magic == "PF" ? 3 : 1;
  Image img(w, h, ch);
  std::vector<float> row(static_cast<std::size_t>(w) * ch);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    if (!in) throw LoadError(path.string(), "truncated PFM data");
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) img.at(y, x, c) = row[static_cast<std::size_t>(x) * ch + c];
    }
  }
  return img;
}

void write_pfm(const fs::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw ContractError("PFM holds 1 or 3 channels");
  auto out = open_out(path);
  out << (image.channels == 3 ? "PF" : "Pf") << "\n" << image.width << " " << image.height
      << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(image.width) * image.channels);
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        row[static_cast<std::size_t>(x) * image.channels + c] = static_cast<float>(image.at(y, x, c));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
  }
  if (!out) throw Error(path.string() + ": write failed");
}

namespace {
constexpr float kFloMagic = 202021.25f;
}

Image read_flo(const fs::path& path) {
  auto in = open_in(path);
  float magic = 0;
  std::int32_t w = 0, h = 0;
  read_pod(in, magic, path);
  if (magic != kFloMagic) throw LoadError(path.string(), "bad .flo magic");
  read_pod(in, w, path);
  read_pod(in, h, path);
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) {
    throw LoadError(path.string(), "invalid .flo dimensions");
  }
  Image img(w, h, 2);
  std::vector<float> buf(img.data.size());
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!in) throw LoadError(path.string(), "truncated .flo data");
  for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i];
  return img;
}

void write_flo(const fs::path& path, const Image& flow) {
  if (flow.channels != 2) throw ContractError(".flo holds 2 channels");
  auto out = open_out(path);
  write_pod(out, kFloMagic);
  write_pod(out, static_cast<std::int32_t>(flow.width));
  write_pod(out, static_cast<std::int32_t>(flow.height));
  std::vector<float> buf(flow.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(flow.data[i]);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!out) throw Error(path.string() + ": write failed");
}

namespace {

struct PlyProperty {
  std::string name;
  std::string type;
  int size = 0;
};

int ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

double ply_value(const char* p, const std::string& t) {
  auto get = [p](auto v) {
    std::memcpy(&v, p, sizeof v);
    return static_cast<double>(v);
  };
  if (t == "char" || t == "int8") return get(std::int8_t{});
  if (t == "uchar" || t == "uint8") return get(std::uint8_t{});
  if (t == "short" || t == "int16") return get(std::int16_t{});
  if (t == "ushort" || t == "uint16") return get(std::uint16_t{});
  if (t == "int" || t == "int32") return get(std::int32_t{});
  if (t == "uint" || t == "uint32") return get(std::uint32_t{});
  if (t == "float" || t == "float32") return get(float{});
  return get(double{});
}

}  // namespace

PointCloud read_ply(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw LoadError(path.string(), "not a PLY file");
  std::size_t count = 0;
  bool in_vertex = false, binary_le = false, seen_vertex = false;
  std::vector<PlyProperty> props;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (key == "element") {
      std::string name;
      std::size_t n = 0;
      ls >> name >> n;
      if (name == "vertex") {
        if (seen_vertex) throw LoadError(path.string(), "duplicate vertex element");
        in_vertex = seen_vertex = true;
        count = n;
      } else {
        if (seen_vertex && n > 0) {
          throw LoadError(path.string(), "elements after 'vertex' are not supported");
        }
        in_vertex = false;
      }
    } else if (key == "property" && in_vertex) {
      PlyProperty p;
      ls >> p.type >> p.name;
      if (p.type == "list") throw LoadError(path.string(), "list properties are not supported");
      p.size = ply_type_size(p.type);
      if (p.size == 0) throw LoadError(path.string(), "unknown PLY property type " + p.type);
      props.push_back(p);
    } else if (key == "end_header") {
      break;
    }
  }
  if (!binary_le) throw LoadError(path.string(), "only binary_little_endian PLY is supported");
  if (!seen_vertex) throw LoadError(path.string(), "missing vertex element");
  int stride = 0;
  std::array<int, 6> offset{-1, -1, -1, -1, -1, -1};
  std::array<std::string, 6> type;
  const std::array<const char*, 6> names{"x", "y", "z", "red", "green", "blue"};
  for (const auto& p : props) {
    for (int i = 0; i < 6; ++i) {
      if (p.name == names[i]) {
        offset[i] = stride;
        type[i] = p.type;
      }
    }
    stride += p.size;
  }
  for (int i = 0; i < 3; ++i) {
    if (offset[i] < 0) throw LoadError(path.string(), std::string("missing property ") + names[i]);
  }
  PointCloud cloud;
  std::vector<char> rec(static_cast<std::size_t>(stride));
  for (std::size_t v = 0; v < count; ++v) {
    in.read(rec.data(), stride);
    if (!in) throw LoadError(path.string(), "truncated vertex data");
    Vec3 pt;
    for (int i = 0; i < 3; ++i) pt[i] = ply_value(rec.data() + offset[i], type[i]);
    std::array<std::uint8_t, 3> col{128, 128, 128};
    for (int i = 0; i < 3; ++i) {
      if (offset[3 + i] >= 0) {
        col[i] = static_cast<std::uint8_t>(
            std::clamp(ply_value(rec.data() + offset[3 + i], type[3 + i]), 0.0, 255.0));
      }
    }
    if (!pt.allFinite()) throw LoadError(path.string(), "non-finite vertex position");
    cloud.points.push_back(pt);
    cloud.colors.push_back(col);
  }
  return cloud;
}

void write_ply(const fs::path& path, const PointCloud& cloud) {
  if (cloud.colors.size() != cloud.points.size()) throw ContractError("point/color count mismatch");
  auto out = open_out(path);
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    for (int a = 0; a < 3; ++a) write_pod(out, static_cast<float>(cloud.points[i][a]));
    out.write(reinterpret_cast<const char*>(cloud.colors[i].data()), 3);
  }
  if (!out) throw Error(path.string() + ": write failed");
}

}  // namespace uags
