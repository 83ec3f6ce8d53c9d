#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "tempdens/types.hpp"

namespace test {

inline tempdens::Matrix gaussian(tempdens::Index rows, tempdens::Index cols, std::mt19937_64& rng,
                                 double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  tempdens::Matrix m(rows, cols);
  for (tempdens::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline tempdens::Vector gaussian(tempdens::Index size, std::mt19937_64& rng, double sd = 1.0) {
  return gaussian(size, 1, rng, sd);
}

/// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("tempdens_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace test
