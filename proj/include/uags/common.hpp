#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace uags {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Error hierarchy. Every failure surfaced to callers derives from Error so the
// CLI can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite or otherwise out-of-domain numeric argument.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

// Caller broke an API contract (shape mismatch, stale render state, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input data on disk.
class LoadError : public Error {
 public:
  LoadError(const std::string& path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Training produced a non-finite loss term.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& term, const std::string& what)
      : Error(what), term_(term) {}
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

// Global worker cap. 1 runs everything inline on the calling thread.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, n). Callers write results into per-index slots, so
// the outcome never depends on scheduling.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(num_threads()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    try {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next.store(n);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace uags
