#include "uags/refiner.hpp"

#include "uags/dataio.hpp"

#include <json.hpp>

#include <chrono>
#include <csignal>
#include <fstream>
#include <sstream>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

namespace uags {

RefinerOptions RefinerOptions::from_spec(const std::string& spec) {
  RefinerOptions o;
  if (spec.empty() || spec == "identity") {
    o.kind = RefinerKind::Identity;
  } else if (spec == "blur") {
    o.kind = RefinerKind::Blur;
  } else {
    o.kind = RefinerKind::Command;
    o.command = spec;
  }
  return o;
}

Image box_blur5(const Image& image) {
  Image out(image.width, image.height, image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        double sum = 0;
        for (int dy = -2; dy <= 2; ++dy) {
          const int yy = std::clamp(y + dy, 0, image.height - 1);
          for (int dx = -2; dx <= 2; ++dx) {
            sum += image.at(yy, std::clamp(x + dx, 0, image.width - 1), c);
          }
        }
        out.at(y, x, c) = sum / 25.0;
      }
    }
  }
  return out;
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char ch : s) {
    if (ch == '\'') {
      q += "'\\''";
    } else {
      q += ch;
    }
  }
  return q + "'";
}

// Runs `command manifest` through /bin/sh; returns the exit status.
int run_command(const std::string& command, const fs::path& manifest, double timeout) {
  const std::string line = command + " " + shell_quote(manifest.string());
  const pid_t pid = fork();
  if (pid < 0) throw RefinerError("refiner: fork failed");
  if (pid == 0) {
    setpgid(0, 0);
    execl("/bin/sh", "sh", "-c", line.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  const auto start = std::chrono::steady_clock::now();
  int status = 0;
  for (;;) {
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) throw RefinerError("refiner: waitpid failed");
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed > timeout) {
      kill(-pid, SIGKILL);
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      throw RefinerError("refiner timed out after " + std::to_string(timeout) + " s");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
}

}  // namespace

std::vector<Image> refine_images(const std::vector<Image>& inputs, const RefinerOptions& options,
                                 std::uint64_t batch) {
  if (options.kind == RefinerKind::Identity) return inputs;
  if (options.kind == RefinerKind::Blur) {
    std::vector<Image> out;
    out.reserve(inputs.size());
    for (const auto& img : inputs) out.push_back(box_blur5(img));
    return out;
  }
  if (options.work_dir.empty()) throw RefinerError("refiner: no work directory configured");
  const fs::path dir = options.work_dir / ("refine_" + std::to_string(batch));
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir / "in");
  fs::create_directories(dir / "out");
  nlohmann::json paths = nlohmann::json::array();
  std::vector<std::string> names;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "view_%04zu", i);
    names.emplace_back(name);
    const fs::path p = fs::absolute(dir / "in" / (names.back() + ".png"));
    write_png_rgb(p, inputs[i]);
    paths.push_back(p.string());
  }
  const nlohmann::json manifest = {{"inputs", paths},
                                   {"output_dir", fs::absolute(dir / "out").string()},
                                   {"strength", options.strength},
                                   {"prompt", options.prompt},
                                   {"seed", options.seed}};
  const fs::path manifest_path = fs::absolute(dir / "manifest.json");
  {
    std::ofstream out(manifest_path);
    out << manifest.dump(2) << "\n";
  }
  const int status = run_command(options.command, manifest_path, options.timeout_seconds);
  const fs::path out_dir = dir / "out";
  if (fs::exists(out_dir / "ERROR")) {
    std::ifstream in(out_dir / "ERROR");
    std::stringstream ss;
    ss << in.rdbuf();
    throw RefinerError("refiner reported an error: " + ss.str());
  }
  if (status != 0) throw RefinerError("refiner exited with status " + std::to_string(status));
  if (!fs::exists(out_dir / "DONE")) throw RefinerError("refiner finished without a DONE marker");
  std::vector<Image> refined;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const fs::path p = out_dir / (names[i] + ".refined.png");
    Image img;
    try {
      img = read_png_rgb(p);
    } catch (const LoadError& e) {
      throw RefinerError(std::string("refiner output unreadable: ") + e.what());
    }
    if (img.width != inputs[i].width || img.height != inputs[i].height) {
      throw RefinerError("refiner changed the size of " + p.string());
    }
    refined.push_back(std::move(img));
  }
  return refined;
}

}  // namespace uags
