#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "ccgan/nn/ops.hpp"

namespace ccgan::nn {

/// Gaussian initialization of convolution kernels. Normalization gains start
/// at N(1, std); biases and shifts at zero.
struct InitRecord {
  std::string distribution = "normal";
  double mean = 0.0;
  double stddev = 0.02;
  std::uint64_t seed = 0;
};

/// Named trainable grids plus non-trainable buffers, in declaration order.
template <class T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Var<T> var;
  };
  struct Buffer {
    std::string name;
    Tensor<T>* tensor;
  };

  Var<T>& add(std::string name, Tensor<T> init) {
    entries_.push_back({std::move(name), parameter(std::move(init))});
    return entries_.back().var;
  }
  void add_buffer(std::string name, Tensor<T>* t) { buffers_.push_back({std::move(name), t}); }

  std::deque<Entry>& entries() { return entries_; }
  const std::deque<Entry>& entries() const { return entries_; }
  const std::vector<Buffer>& buffers() const { return buffers_; }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }
  void set_requires_grad(bool on) {
    for (auto& e : entries_) e.var.set_requires_grad(on);
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.var.value().size();
    return n;
  }

 private:
  std::deque<Entry> entries_;
  std::vector<Buffer> buffers_;
};

struct GeneratorSpec {
  int base_channels = 256;
  int n_modules = 5;
  int convs_per_module = 3;
  int kernel = 3;
  int in_channels = 1;

  /// Channels entering the post-concatenation convolution: the entry output
  /// plus one tensor per module.
  int concat_width() const { return base_channels * (n_modules + 1); }
  void validate() const;
  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

/// Entry conv -> ReLU, then n_modules residual modules of
/// convs_per_module x (conv -> BN -> ReLU) closed by skip-add -> ReLU. The
/// entry output and every module output are concatenated, fused back to
/// base_channels by one conv (-> ReLU), projected to one channel, and added
/// to the network input.
template <class T>
class Generator {
 public:
  Generator(const GeneratorSpec& spec, std::uint64_t seed, double init_std = 0.02);
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  /// x: (N, in_channels, H, W) with H, W >= 1. Output has x's shape.
  Var<T> forward(const Var<T>& x, bool training);

  /// Inference-mode forward without graph recording.
  Tensor<T> infer(const Tensor<T>& x);

  const GeneratorSpec& spec() const { return spec_; }
  const InitRecord& init_record() const { return init_; }
  ParameterStore<T>& store() { return store_; }
  const ParameterStore<T>& store() const { return store_; }

  /// Channel count of the concatenated tensor in the last forward pass.
  int last_concat_channels() const { return last_concat_channels_; }

  /// Zeroes the final projection so the network is exactly the identity.
  void zero_output_projection();

  /// Copies every grid and buffer from another generator of the same spec.
  void copy_from(const Generator& other);

 private:
  struct Block {
    Var<T>* weight;
    Var<T>* gamma;
    Var<T>* beta;
    BatchNormBuffers<T> bn;
  };

  GeneratorSpec spec_;
  InitRecord init_;
  ParameterStore<T> store_;
  Var<T>* entry_w_;
  Var<T>* entry_b_;
  std::deque<Block> blocks_;  // n_modules * convs_per_module, module-major
  Var<T>* fuse_w_;
  Var<T>* fuse_b_;
  Var<T>* out_w_;
  Var<T>* out_b_;
  int last_concat_channels_ = 0;
};

struct DiscriminatorSpec {
  std::vector<int> channels{64, 128, 256, 512, 1};
  std::vector<int> strides{2, 2, 2, 1, 1};
  int kernel = 4;
  int padding = 1;
  double leaky_slope = 0.2;
  int min_input = 64;
  int in_channels = 1;

  void validate() const;
  friend bool operator==(const DiscriminatorSpec&, const DiscriminatorSpec&) = default;
};

/// Receptive field of one output score, composed back to front:
/// r <- r * stride + (kernel - stride), starting from r = 1.
int receptive_field(const DiscriminatorSpec& spec);

/// Score-map extent for an input extent, layer by layer.
int discriminator_output_size(const DiscriminatorSpec& spec, int input);

/// PatchGAN: conv -> LeakyReLU, then conv -> InstanceNorm -> LeakyReLU for
/// the middle layers, then a one-channel conv producing the score map.
template <class T>
class Discriminator {
 public:
  Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed, double init_std = 0.02);
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  Var<T> forward(const Var<T>& x);

  const DiscriminatorSpec& spec() const { return spec_; }
  const InitRecord& init_record() const { return init_; }
  ParameterStore<T>& store() { return store_; }
  const ParameterStore<T>& store() const { return store_; }
  void copy_from(const Discriminator& other);

 private:
  struct Layer {
    Var<T>* weight;
    Var<T>* bias;  // null where a normalization follows
    int stride;
    bool normalize;
    bool activate;
  };

  DiscriminatorSpec spec_;
  InitRecord init_;
  ParameterStore<T> store_;
  std::vector<Layer> layers_;
};

extern template class Generator<float>;
extern template class Generator<double>;
extern template class Discriminator<float>;
extern template class Discriminator<double>;

}  // namespace ccgan::nn
