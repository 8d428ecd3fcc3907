// Copyright 2026 The cocstress Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "cocstress.hpp"

namespace testing_support
{

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
  TempDir()
  {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
      ("cocstress_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir()
  {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir & operator=(const TempDir &) = delete;

  const std::filesystem::path & path() const { return path_; }
  std::filesystem::path operator/(const std::string & s) const { return path_ / s; }

private:
  std::filesystem::path path_;
};

inline cocstress::Image random_image(int w, int h, std::uint32_t seed)
{
  std::mt19937 gen(seed);
  std::uniform_int_distribution<int> d(0, 255);
  cocstress::Image img(w, h);
  for (auto & v : img.data) v = static_cast<std::uint8_t>(d(gen));
  return img;
}

inline cocstress::Trajectory line_trajectory(double vx, double vy)
{
  cocstress::Trajectory::Points p;
  for (std::size_t i = 0; i < cocstress::kWaypointCount; ++i) {
    p[i] = {vx * 0.1 * static_cast<double>(i + 1), vy * 0.1 * static_cast<double>(i + 1)};
  }
  return cocstress::Trajectory(p);
}

inline std::string slurp(const std::filesystem::path & p) { return cocstress::read_file_bytes(p.string()); }

}  // namespace testing_support
