#pragma once

#include <cstdint>
#include <vector>

#include "ccgan/nn/networks.hpp"

namespace ccgan {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over one network's trainable grids.
template <class T>
class Adam {
 public:
  Adam(nn::ParameterStore<T>& store, AdamSettings settings = {});

  /// Applies one update with the given learning rate to every parameter
  /// that currently holds a gradient.
  void step(double lr);

  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const AdamSettings& settings() const { return settings_; }

 private:
  nn::ParameterStore<T>* store_;
  AdamSettings settings_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace ccgan
