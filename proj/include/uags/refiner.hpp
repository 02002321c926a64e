#pragma once

#include "uags/common.hpp"
#include "uags/image.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace uags {

enum class RefinerKind { Identity, Blur, Command };

struct RefinerOptions {
  RefinerKind kind = RefinerKind::Identity;
  std::string command;  // for RefinerKind::Command, invoked as `command <manifest.json>`
  double strength = 0.3;
  std::string prompt;
  std::uint64_t seed = 0;
  double timeout_seconds = 600;
  std::filesystem::path work_dir;  // manifests and image exchange live here

  // "identity", "blur", or anything else as an external command.
  static RefinerOptions from_spec(const std::string& spec);
};

class RefinerError : public Error {
 public:
  using Error::Error;
};

// 5x5 box filter with clamp-to-edge borders.
Image box_blur5(const Image& image);

// Refines a batch. External commands follow the manifest protocol:
// {inputs, output_dir, strength, prompt, seed}; the tool writes
// `<name>.refined.png` per input and then a `DONE` marker, or an `ERROR`
// marker holding a message. Throws RefinerError on any protocol failure.
std::vector<Image> refine_images(const std::vector<Image>& inputs, const RefinerOptions& options,
                                 std::uint64_t batch);

}  // namespace uags
