#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ccgan::nn {

/// NCHW shape.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{}) : shape_(s), data_(s.size(), fill) {}
  Tensor(Shape s, std::vector<T> data) : shape_(s), data_(std::move(data)) {}

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  /// Pointer to the (n, c) plane.
  T* plane(int n, int c) { return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane(); }
  const T* plane(int n, int c) const {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  T item() const { return data_.at(0); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape shape_;
  std::vector<T> data_;
};

template <class T>
Tensor<T> scalar_tensor(T v) {
  return Tensor<T>(Shape{1, 1, 1, 1}, v);
}

}  // namespace ccgan::nn
