#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "nacrf/model.hpp"
#include "nacrf/tensor.hpp"

namespace nacrf::test_util {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("nacrf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename S>
Mat<S> random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
  return m;
}

template <typename S>
CrfTransitions<S> random_transitions(int labels, int rank, std::mt19937_64& rng, double scale = 1.0) {
  return {random_matrix<S>(labels, rank, rng, scale), random_matrix<S>(labels, rank, rng, scale)};
}

}  // namespace nacrf::test_util
