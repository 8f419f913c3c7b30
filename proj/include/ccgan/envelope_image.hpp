#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ccgan {

/// Dense row-major 2-D grid. Rows run axially, columns laterally.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  template <class U>
  bool same_shape(const Grid<U>& other) const {
    return rows_ == other.rows() && cols_ == other.cols();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

enum class Domain : std::uint32_t { phased = 0, linear = 1, generated = 2 };

std::string_view to_string(Domain d);
Domain domain_from_string(std::string_view s);

/// Envelope samples with physical pixel pitch. Pre-scan-conversion phased
/// frames keep the beam-line pitch in lateral_spacing.
struct EnvelopeImage {
  Grid<double> samples;
  double axial_spacing = 1.0;    // mm per sample
  double lateral_spacing = 1.0;  // mm per sample
  Domain domain = Domain::phased;
  std::uint32_t frame_index = 0;

  std::size_t rows() const { return samples.rows(); }
  std::size_t cols() const { return samples.cols(); }

  friend bool operator==(const EnvelopeImage&, const EnvelopeImage&) = default;
};

inline constexpr std::size_t kModelGridSize = 256;

}  // namespace ccgan
