#pragma once

#include "abnode/datagen.hpp"
#include "abnode/model.hpp"

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace abnode::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("abnode_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// Generator restricted to a few configurations with short trials.
inline GeneratorConfig small_generator(std::vector<int> ids, std::size_t spiral_lo = 200,
                                       std::size_t spiral_hi = 260) {
  GeneratorConfig g;
  g.config_ids = std::move(ids);
  g.spiral_min_samples = spiral_lo;
  g.spiral_max_samples = spiral_hi;
  g.linear_min_samples = 150;
  g.linear_max_samples = 180;
  return g;
}

inline std::vector<const Trajectory*> train_of(const Dataset& d, int id) { return d.select(id, Role::kTrain); }

inline const Trajectory& test_of(const Dataset& d, int id) { return *d.select(id, Role::kTest).front(); }

/// Gondola and envelope centroid on the body z axis, weight equal to buoyancy.
inline PhysParams neutral_params() {
  PhysParams p = default_truth_params();
  p.r_env = Vec3(0.0, 0.0, 0.02);
  p.buoyancy = (p.m + p.m_bar) * p.g;
  return p;
}

inline StateVec rest_state(double gondola_z = 0.12) {
  RigidState s;
  s.r_bar = Vec3(0.0, 0.0, gondola_z);
  return s.to_vector();
}

}  // namespace abnode::testing
