#include "ccgan/nn/networks.hpp"

#include <random>
#include <string>

#include "ccgan/errors.hpp"

namespace ccgan::nn {
namespace {

template <class T>
Tensor<T> gaussian(Shape s, double mean, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(mean, stddev);
  Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <class T>
void copy_store(ParameterStore<T>& dst, const ParameterStore<T>& src) {
  auto& de = dst.entries();
  const auto& se = src.entries();
  if (de.size() != se.size() || dst.buffers().size() != src.buffers().size()) {
    throw DataError("copy_from: parameter layouts differ");
  }
  for (std::size_t i = 0; i < de.size(); ++i) {
    if (!(de[i].var.shape() == se[i].var.shape())) throw DataError("copy_from: shape mismatch at " + de[i].name);
    de[i].var.mutable_value() = se[i].var.value();
  }
  for (std::size_t i = 0; i < dst.buffers().size(); ++i) *dst.buffers()[i].tensor = *src.buffers()[i].tensor;
}

}  // namespace

void GeneratorSpec::validate() const {
  if (base_channels < 1 || n_modules < 1 || convs_per_module < 1 || in_channels < 1) {
    throw ConfigError("generator spec: channel and module counts must be positive");
  }
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("generator spec: kernel must be odd for same padding");
}

template <class T>
Generator<T>::Generator(const GeneratorSpec& spec, std::uint64_t seed, double init_std) : spec_(spec) {
  spec_.validate();
  init_.stddev = init_std;
  init_.seed = seed;
  std::mt19937_64 rng(seed);
  const int c = spec_.base_channels;
  const int k = spec_.kernel;

  entry_w_ = &store_.add("entry.weight", gaussian<T>({c, spec_.in_channels, k, k}, 0.0, init_std, rng));
  entry_b_ = &store_.add("entry.bias", Tensor<T>({1, c, 1, 1}));
  for (int m = 0; m < spec_.n_modules; ++m) {
    for (int j = 0; j < spec_.convs_per_module; ++j) {
      const std::string prefix = "module" + std::to_string(m + 1) + ".conv" + std::to_string(j + 1);
      Block b;
      b.weight = &store_.add(prefix + ".weight", gaussian<T>({c, c, k, k}, 0.0, init_std, rng));
      b.gamma = &store_.add(prefix + ".bn.gamma", gaussian<T>({1, c, 1, 1}, 1.0, init_std, rng));
      b.beta = &store_.add(prefix + ".bn.beta", Tensor<T>({1, c, 1, 1}));
      b.bn.running_mean = Tensor<T>({1, c, 1, 1}, T(0));
      b.bn.running_var = Tensor<T>({1, c, 1, 1}, T(1));
      blocks_.push_back(std::move(b));
      store_.add_buffer(prefix + ".bn.running_mean", &blocks_.back().bn.running_mean);
      store_.add_buffer(prefix + ".bn.running_var", &blocks_.back().bn.running_var);
    }
  }
  fuse_w_ = &store_.add("fuse.weight", gaussian<T>({c, spec_.concat_width(), k, k}, 0.0, init_std, rng));
  fuse_b_ = &store_.add("fuse.bias", Tensor<T>({1, c, 1, 1}));
  out_w_ = &store_.add("output.weight", gaussian<T>({spec_.in_channels, c, k, k}, 0.0, init_std, rng));
  out_b_ = &store_.add("output.bias", Tensor<T>({1, spec_.in_channels, 1, 1}));
}

template <class T>
Var<T> Generator<T>::forward(const Var<T>& x, bool training) {
  if (x.shape().c != spec_.in_channels) {
    throw DataError("generator: input has " + std::to_string(x.shape().c) + " channels, spec expects " +
                    std::to_string(spec_.in_channels));
  }
  const Conv2dOptions same{1, spec_.kernel / 2};
  Var<T> h = relu(conv2d(x, *entry_w_, *entry_b_, same));
  std::vector<Var<T>> features{h};
  std::size_t b = 0;
  for (int m = 0; m < spec_.n_modules; ++m) {
    Var<T> branch = h;
    for (int j = 0; j < spec_.convs_per_module; ++j, ++b) {
      Block& blk = blocks_[b];
      branch = relu(batch_norm(conv2d(branch, *blk.weight, Var<T>(), same), *blk.gamma, *blk.beta, blk.bn, training));
    }
    h = relu(add(branch, h));
    features.push_back(h);
  }
  Var<T> cat = concat_channels(features);
  last_concat_channels_ = cat.shape().c;
  Var<T> fused = relu(conv2d(cat, *fuse_w_, *fuse_b_, same));
  return add(conv2d(fused, *out_w_, *out_b_, same), x);
}

template <class T>
Tensor<T> Generator<T>::infer(const Tensor<T>& x) {
  NoGradGuard guard;
  return forward(constant(x), false).value();
}

template <class T>
void Generator<T>::zero_output_projection() {
  out_w_->mutable_value().fill(T(0));
  out_b_->mutable_value().fill(T(0));
}

template <class T>
void Generator<T>::copy_from(const Generator& other) {
  if (!(other.spec_ == spec_)) throw DataError("copy_from: generator specs differ");
  copy_store(store_, other.store_);
}

void DiscriminatorSpec::validate() const {
  if (channels.empty() || channels.size() != strides.size()) {
    throw ConfigError("discriminator spec: channels and strides must be non-empty and equal length");
  }
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] < 1 || strides[i] < 1) throw ConfigError("discriminator spec: channels/strides must be positive");
  }
  if (kernel < 1 || padding < 0 || min_input < 1 || in_channels < 1) {
    throw ConfigError("discriminator spec: bad kernel/padding/min_input");
  }
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("discriminator spec: leaky_slope must be in [0, 1)");
  if (discriminator_output_size(*this, min_input) < 1) {
    throw ConfigError("discriminator spec: min_input produces an empty score map");
  }
}

int receptive_field(const DiscriminatorSpec& spec) {
  int r = 1;
  for (std::size_t i = spec.strides.size(); i-- > 0;) r = r * spec.strides[i] + (spec.kernel - spec.strides[i]);
  return r;
}

int discriminator_output_size(const DiscriminatorSpec& spec, int input) {
  int size = input;
  for (int s : spec.strides) size = conv_output_size(size, spec.kernel, s, spec.padding);
  return size;
}

template <class T>
Discriminator<T>::Discriminator(const DiscriminatorSpec& spec, std::uint64_t seed, double init_std) : spec_(spec) {
  spec_.validate();
  init_.stddev = init_std;
  init_.seed = seed;
  std::mt19937_64 rng(seed);
  const std::size_t count = spec_.channels.size();
  int in_c = spec_.in_channels;
  for (std::size_t i = 0; i < count; ++i) {
    const int out_c = spec_.channels[i];
    const std::string prefix = "layer" + std::to_string(i + 1);
    Layer layer;
    layer.stride = spec_.strides[i];
    layer.normalize = i > 0 && i + 1 < count;
    layer.activate = i + 1 < count;
    layer.weight = &store_.add(prefix + ".weight", gaussian<T>({out_c, in_c, spec_.kernel, spec_.kernel}, 0.0, init_std, rng));
    layer.bias = layer.normalize ? nullptr : &store_.add(prefix + ".bias", Tensor<T>({1, out_c, 1, 1}));
    layers_.push_back(layer);
    in_c = out_c;
  }
}

template <class T>
Var<T> Discriminator<T>::forward(const Var<T>& x) {
  const Shape s = x.shape();
  if (s.c != spec_.in_channels) throw DataError("discriminator: channel mismatch");
  if (s.h < spec_.min_input || s.w < spec_.min_input) {
    throw DataError("discriminator: input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                    " is smaller than the " + std::to_string(spec_.min_input) + "x" +
                    std::to_string(spec_.min_input) + " minimum patch");
  }
  Var<T> h = x;
  const T slope = static_cast<T>(spec_.leaky_slope);
  for (const Layer& layer : layers_) {
    h = conv2d(h, *layer.weight, layer.bias ? *layer.bias : Var<T>(), Conv2dOptions{layer.stride, spec_.padding});
    if (layer.normalize) h = instance_norm(h);
    if (layer.activate) h = leaky_relu(h, slope);
  }
  return h;
}

template <class T>
void Discriminator<T>::copy_from(const Discriminator& other) {
  if (!(other.spec_ == spec_)) throw DataError("copy_from: discriminator specs differ");
  copy_store(store_, other.store_);
}

template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace ccgan::nn
