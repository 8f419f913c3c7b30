#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "ccgan/envelope_image.hpp"
#include "ccgan/nn/tensor.hpp"

namespace testutil {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ccgan_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

template <class T>
ccgan::nn::Tensor<T> uniform_tensor(ccgan::nn::Shape s, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  ccgan::nn::Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

inline ccgan::EnvelopeImage uniform_frame(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                          double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  ccgan::EnvelopeImage img;
  img.samples = ccgan::Grid<double>(rows, cols);
  for (auto& v : img.samples.values()) v = u(rng);
  return img;
}

}  // namespace testutil
