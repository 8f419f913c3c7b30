#include "ccgan/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "ccgan/errors.hpp"

namespace ccgan::nn {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Bound on im2col scratch, in elements.
constexpr std::size_t kColBudget = std::size_t{1} << 22;

struct ConvGeometry {
  int in_c, in_h, in_w;
  int out_c, out_h, out_w;
  int k, stride, pad;
  int kdim() const { return in_c * k * k; }
  int rows_per_block() const {
    const std::size_t per_row = static_cast<std::size_t>(kdim()) * static_cast<std::size_t>(out_w);
    return std::max(1, static_cast<int>(std::min<std::size_t>(out_h, kColBudget / std::max<std::size_t>(per_row, 1))));
  }
};

// Output columns ox with 0 <= ox*s - p + kx < in_w.
inline void valid_range(int kx, const ConvGeometry& g, int& lo, int& hi) {
  const int off = kx - g.pad;
  lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  hi = g.in_w - off <= 0 ? 0 : std::min(g.out_w, (g.in_w - off - 1) / g.stride + 1);
  if (hi < lo) hi = lo;
}

template <class T>
void im2col(const T* image, const ConvGeometry& g, int oy0, int oy1, T* cols) {
  const int rows = oy1 - oy0;
  const std::size_t p = static_cast<std::size_t>(rows) * g.out_w;
  for (int ci = 0; ci < g.in_c; ++ci) {
    const T* plane = image + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = cols + (static_cast<std::size_t>(ci) * g.k * g.k + ky * g.k + kx) * p;
        int lo, hi;
        valid_range(kx, g, lo, hi);
        for (int oy = oy0; oy < oy1; ++oy) {
          T* dst = row + static_cast<std::size_t>(oy - oy0) * g.out_w;
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          std::fill(dst, dst + lo, T(0));
          if (g.stride == 1) {
            std::memcpy(dst + lo, src + lo - g.pad + kx, sizeof(T) * static_cast<std::size_t>(hi - lo));
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride - g.pad + kx];
          }
          std::fill(dst + hi, dst + g.out_w, T(0));
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvGeometry& g, int oy0, int oy1, T* image) {
  const int rows = oy1 - oy0;
  const std::size_t p = static_cast<std::size_t>(rows) * g.out_w;
  for (int ci = 0; ci < g.in_c; ++ci) {
    T* plane = image + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(ci) * g.k * g.k + ky * g.k + kx) * p;
        int lo, hi;
        valid_range(kx, g, lo, hi);
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          const T* src = row + static_cast<std::size_t>(oy - oy0) * g.out_w;
          T* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = lo; ox < hi; ++ox) dst[ox * g.stride - g.pad + kx] += src[ox];
        }
      }
    }
  }
}

// out[n] (+)= W * im2col(x[n]) for every image; out planes must match g.
template <class T>
void conv_forward_raw(const Tensor<T>& x, const T* weight, const ConvGeometry& g, Tensor<T>& out, bool accumulate) {
  const int block = g.rows_per_block();
  std::vector<T> cols(static_cast<std::size_t>(g.kdim()) * block * g.out_w);
  ConstMatMap<T> w(weight, g.out_c, g.kdim());
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  for (int n = 0; n < x.shape().n; ++n) {
    for (int oy0 = 0; oy0 < g.out_h; oy0 += block) {
      const int oy1 = std::min(g.out_h, oy0 + block);
      const int p = (oy1 - oy0) * g.out_w;
      im2col(x.plane(n, 0), g, oy0, oy1, cols.data());
      StridedMap<T> y(out.plane(n, 0) + static_cast<std::size_t>(oy0) * g.out_w, g.out_c, p,
                      Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
      if (accumulate) {
        y.noalias() += w * ConstMatMap<T>(cols.data(), g.kdim(), p);
      } else {
        y.noalias() = w * ConstMatMap<T>(cols.data(), g.kdim(), p);
      }
    }
  }
}

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw DataError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

}  // namespace

int conv_output_size(int input, int kernel, int stride, int padding) {
  const int span = input + 2 * padding - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, Conv2dOptions opt) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.h != ws.w) throw std::invalid_argument("conv2d: square kernels only");
  if (xs.c != ws.c) {
    throw DataError("conv2d: input has " + std::to_string(xs.c) + " channels, kernel expects " +
                    std::to_string(ws.c));
  }
  ConvGeometry g{xs.c, xs.h, xs.w, ws.n, 0, 0, ws.h, opt.stride, opt.padding};
  g.out_h = conv_output_size(xs.h, g.k, g.stride, g.pad);
  g.out_w = conv_output_size(xs.w, g.k, g.stride, g.pad);
  if (g.out_h <= 0 || g.out_w <= 0) {
    throw DataError("conv2d: input " + to_string(xs) + " too small for kernel " + std::to_string(g.k));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.value().size() != static_cast<std::size_t>(g.out_c)) {
    throw DataError("conv2d: bias size does not match output channels");
  }

  Tensor<T> out(Shape{xs.n, g.out_c, g.out_h, g.out_w});
  conv_forward_raw(x.value(), weight.value().data(), g, out, false);
  const std::size_t out_plane = out.shape().plane();
  for (int n = 0; n < xs.n; ++n) {
    if (has_bias) {
      for (int co = 0; co < g.out_c; ++co) {
        T* dst = out.plane(n, co);
        const T b = bias.value()[co];
        for (std::size_t i = 0; i < out_plane; ++i) dst[i] += b;
      }
    }
  }

  std::vector<std::shared_ptr<Node<T>>> inputs{x.node(), weight.node()};
  if (has_bias) inputs.push_back(bias.node());
  return make_result<T>(std::move(out), std::move(inputs), [g, has_bias](Node<T>& self) {
    Node<T>& xn = *self.inputs[0];
    Node<T>& wn = *self.inputs[1];
    const Tensor<T>& dy = self.grad;
    const Shape ys = dy.shape();
    const std::size_t out_plane = ys.plane();
    const int block = g.rows_per_block();
    std::vector<T> cols(static_cast<std::size_t>(g.kdim()) * block * g.out_w);
    ConstMatMap<T> w(wn.value.data(), g.out_c, g.kdim());
    // Stride-1 input gradients are a forward convolution of dy with the
    // spatially flipped, channel-transposed kernel.
    const bool transposed_path = g.stride == 1 && g.pad <= g.k - 1;
    if (xn.requires_grad && transposed_path) {
      const int k2 = g.k * g.k;
      std::vector<T> flipped(static_cast<std::size_t>(g.in_c) * g.out_c * k2);
      const T* src = wn.value.data();
      for (int co = 0; co < g.out_c; ++co) {
        for (int ci = 0; ci < g.in_c; ++ci) {
          for (int t = 0; t < k2; ++t) {
            flipped[(static_cast<std::size_t>(ci) * g.out_c + co) * k2 + (k2 - 1 - t)] =
                src[(static_cast<std::size_t>(co) * g.in_c + ci) * k2 + t];
          }
        }
      }
      ConvGeometry tg{g.out_c, g.out_h, g.out_w, g.in_c, g.in_h, g.in_w, g.k, 1, g.k - 1 - g.pad};
      conv_forward_raw(dy, flipped.data(), tg, xn.grad_buffer(), true);
    }
    for (int n = 0; n < ys.n; ++n) {
      for (int oy0 = 0; oy0 < g.out_h; oy0 += block) {
        const int oy1 = std::min(g.out_h, oy0 + block);
        const int p = (oy1 - oy0) * g.out_w;
        ConstStridedMap<T> dyb(dy.plane(n, 0) + static_cast<std::size_t>(oy0) * g.out_w, g.out_c, p,
                               Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
        if (wn.requires_grad) {
          im2col(xn.value.plane(n, 0), g, oy0, oy1, cols.data());
          MatMap<T> dw(wn.grad_buffer().data(), g.out_c, g.kdim());
          dw.noalias() += dyb * ConstMatMap<T>(cols.data(), g.kdim(), p).transpose();
        }
        if (xn.requires_grad && !transposed_path) {
          MatMap<T> dcols(cols.data(), g.kdim(), p);
          dcols.noalias() = w.transpose() * dyb;
          col2im_add(cols.data(), g, oy0, oy1, xn.grad_buffer().plane(n, 0));
        }
      }
    }
    if (has_bias && self.inputs[2]->requires_grad) {
      Tensor<T>& db = self.inputs[2]->grad_buffer();
      for (int n = 0; n < ys.n; ++n) {
        for (int co = 0; co < ys.c; ++co) {
          const T* src = dy.plane(n, co);
          double s = 0.0;
          for (std::size_t i = 0; i < out_plane; ++i) s += src[i];
          db[co] += static_cast<T>(s);
        }
      }
    }
  });
}

namespace {

// Shared normalize-backward for batch and instance norm: given dy scaled by
// gamma*invstd, xhat, and group size m, writes dx contributions.
template <class T>
void norm_backward_group(const T* dy, const T* xhat, std::size_t m, double scale, T* dx,
                         std::size_t stride_count, std::size_t stride, std::size_t plane) {
  // Generic over a group made of `stride_count` planes of `plane` elements
  // spaced `stride` apart.
  double sum_dy = 0.0, sum_dy_xhat = 0.0;
  for (std::size_t s = 0; s < stride_count; ++s) {
    const std::size_t off = s * stride;
    for (std::size_t i = 0; i < plane; ++i) {
      sum_dy += dy[off + i];
      sum_dy_xhat += static_cast<double>(dy[off + i]) * xhat[off + i];
    }
  }
  const double md = static_cast<double>(m);
  for (std::size_t s = 0; s < stride_count; ++s) {
    const std::size_t off = s * stride;
    for (std::size_t i = 0; i < plane; ++i) {
      dx[off + i] += static_cast<T>(scale / md * (md * dy[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat));
    }
  }
}

}  // namespace

template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormBuffers<T>& buf,
                  bool training) {
  const Shape s = x.shape();
  if (gamma.value().size() != static_cast<std::size_t>(s.c) || beta.value().size() != static_cast<std::size_t>(s.c)) {
    throw DataError("batch_norm: affine parameters do not match channel count");
  }
  const std::size_t plane = s.plane();
  const std::size_t chw = static_cast<std::size_t>(s.c) * plane;
  const std::size_t m = static_cast<std::size_t>(s.n) * plane;
  Tensor<T> out(s);
  auto xhat = std::make_shared<Tensor<T>>(s);
  std::vector<double> invstd(s.c);

  for (int c = 0; c < s.c; ++c) {
    double mean, var;
    if (training) {
      double sum = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = x.value().plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      mean = sum / static_cast<double>(m);
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = x.value().plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(m);
      const double unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var;
      const double mom = buf.momentum;
      buf.running_mean[c] = static_cast<T>((1.0 - mom) * buf.running_mean[c] + mom * mean);
      buf.running_var[c] = static_cast<T>((1.0 - mom) * buf.running_var[c] + mom * unbiased);
    } else {
      mean = buf.running_mean[c];
      var = buf.running_var[c];
    }
    invstd[c] = 1.0 / std::sqrt(var + static_cast<double>(buf.eps));
    const double g = gamma.value()[c];
    const double b = beta.value()[c];
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.value().plane(n, c);
      T* xh = xhat->plane(n, c);
      T* o = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = (p[i] - mean) * invstd[c];
        xh[i] = static_cast<T>(v);
        o[i] = static_cast<T>(g * v + b);
      }
    }
  }

  return make_result<T>(std::move(out), {x.node(), gamma.node(), beta.node()},
                        [xhat, invstd, training, plane, chw, m](Node<T>& self) {
                          Node<T>& xn = *self.inputs[0];
                          Node<T>& gn = *self.inputs[1];
                          Node<T>& bn = *self.inputs[2];
                          const Shape s = self.grad.shape();
                          for (int c = 0; c < s.c; ++c) {
                            double sum_dy = 0.0, sum_dy_xhat = 0.0;
                            for (int n = 0; n < s.n; ++n) {
                              const T* dy = self.grad.plane(n, c);
                              const T* xh = xhat->plane(n, c);
                              for (std::size_t i = 0; i < plane; ++i) {
                                sum_dy += dy[i];
                                sum_dy_xhat += static_cast<double>(dy[i]) * xh[i];
                              }
                            }
                            if (gn.requires_grad) gn.grad_buffer()[c] += static_cast<T>(sum_dy_xhat);
                            if (bn.requires_grad) bn.grad_buffer()[c] += static_cast<T>(sum_dy);
                            if (!xn.requires_grad) continue;
                            const double scale = gn.value[c] * invstd[c];
                            const std::size_t offset = static_cast<std::size_t>(c) * plane;
                            if (training) {
                              norm_backward_group(self.grad.data() + offset, xhat->data() + offset, m, scale,
                                                  xn.grad_buffer().data() + offset, static_cast<std::size_t>(s.n),
                                                  chw, plane);
                            } else {
                              for (int n = 0; n < s.n; ++n) {
                                const T* dy = self.grad.plane(n, c);
                                T* dx = xn.grad_buffer().plane(n, c);
                                for (std::size_t i = 0; i < plane; ++i) dx[i] += static_cast<T>(scale * dy[i]);
                              }
                            }
                          }
                        });
}

template <class T>
Var<T> instance_norm(const Var<T>& x, T eps) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Tensor<T> out(s);
  auto xhat = std::make_shared<Tensor<T>>(s);
  std::vector<double> invstd(static_cast<std::size_t>(s.n) * s.c);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.value().plane(n, c);
      double sum = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      const double mean = sum / static_cast<double>(plane);
      double sq = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
      const double is = 1.0 / std::sqrt(sq / static_cast<double>(plane) + static_cast<double>(eps));
      invstd[static_cast<std::size_t>(n) * s.c + c] = is;
      T* xh = xhat->plane(n, c);
      T* o = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = static_cast<T>((p[i] - mean) * is);
        o[i] = xh[i];
      }
    }
  }
  return make_result<T>(std::move(out), {x.node()}, [xhat, invstd, plane](Node<T>& self) {
    Node<T>& xn = *self.inputs[0];
    const Shape s = self.grad.shape();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        norm_backward_group(self.grad.plane(n, c), xhat->plane(n, c), plane,
                            invstd[static_cast<std::size_t>(n) * s.c + c], xn.grad_buffer().plane(n, c), 1, 0,
                            plane);
      }
    }
  });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* in = x.value().data();
  T* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
  return make_result<T>(std::move(out), {x.node()}, [](Node<T>& self) {
    Node<T>& xn = *self.inputs[0];
    const T* in = xn.value.data();
    const T* dy = self.grad.data();
    T* dx = xn.grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (in[i] > T(0)) dx[i] += dy[i];
    }
  });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> out(x.shape());
  const T* in = x.value().data();
  T* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] = in[i] > T(0) ? in[i] : slope * in[i];
  return make_result<T>(std::move(out), {x.node()}, [slope](Node<T>& self) {
    Node<T>& xn = *self.inputs[0];
    const T* in = xn.value.data();
    const T* dy = self.grad.data();
    T* dx = xn.grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += in[i] > T(0) ? dy[i] : slope * dy[i];
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result<T>(std::move(out), {a.node(), b.node()}, [](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      T* dx = in->grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
    }
  });
}

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: nothing to concatenate");
  Shape s = xs.front().shape();
  int channels = 0;
  for (const auto& x : xs) {
    const Shape xsh = x.shape();
    if (xsh.n != s.n || xsh.h != s.h || xsh.w != s.w) throw DataError("concat_channels: spatial/batch mismatch");
    channels += xsh.c;
  }
  s.c = channels;
  Tensor<T> out(s);
  const std::size_t plane = s.plane();
  std::vector<std::shared_ptr<Node<T>>> inputs;
  for (int n = 0; n < s.n; ++n) {
    int c0 = 0;
    for (const auto& x : xs) {
      const int xc = x.shape().c;
      std::memcpy(out.plane(n, c0), x.value().plane(n, 0), sizeof(T) * plane * static_cast<std::size_t>(xc));
      c0 += xc;
    }
  }
  for (const auto& x : xs) inputs.push_back(x.node());
  return make_result<T>(std::move(out), std::move(inputs), [plane](Node<T>& self) {
    const Shape s = self.grad.shape();
    int c0 = 0;
    for (auto& in : self.inputs) {
      const int xc = in->value.shape().c;
      if (in->requires_grad) {
        Tensor<T>& g = in->grad_buffer();
        for (int n = 0; n < s.n; ++n) {
          const T* src = self.grad.plane(n, c0);
          T* dst = g.plane(n, 0);
          for (std::size_t i = 0; i < plane * static_cast<std::size_t>(xc); ++i) dst[i] += src[i];
        }
      }
      c0 += xc;
    }
  });
}

template <class T>
Var<T> mean_squared_to(const Var<T>& x, T target) {
  const auto& v = x.value();
  if (v.empty()) throw DataError("mean_squared_to: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = static_cast<double>(v[i]) - target;
    acc += d * d;
  }
  const double m = static_cast<double>(v.size());
  return make_result<T>(scalar_tensor<T>(static_cast<T>(acc / m)), {x.node()}, [target, m](Node<T>& self) {
    Node<T>& xn = *self.inputs[0];
    const double g = self.grad[0];
    T* dx = xn.grad_buffer().data();
    for (std::size_t i = 0; i < xn.value.size(); ++i) {
      dx[i] += static_cast<T>(g * 2.0 * (static_cast<double>(xn.value[i]) - target) / m);
    }
  });
}

template <class T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mean_abs_diff");
  if (a.value().empty()) throw DataError("mean_abs_diff: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    acc += std::abs(static_cast<double>(a.value()[i]) - b.value()[i]);
  }
  const double m = static_cast<double>(a.value().size());
  return make_result<T>(scalar_tensor<T>(static_cast<T>(acc / m)), {a.node(), b.node()}, [m](Node<T>& self) {
    Node<T>& an = *self.inputs[0];
    Node<T>& bn = *self.inputs[1];
    const double g = self.grad[0] / m;
    for (std::size_t i = 0; i < an.value.size(); ++i) {
      const T d = an.value[i] - bn.value[i];
      const double sgn = d > T(0) ? 1.0 : (d < T(0) ? -1.0 : 0.0);
      if (an.requires_grad) an.grad_buffer()[i] += static_cast<T>(g * sgn);
      if (bn.requires_grad) bn.grad_buffer()[i] -= static_cast<T>(g * sgn);
    }
  });
}

template <class T>
Var<T> one_minus_pearson(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "one_minus_pearson");
  const Shape s = a.shape();
  const std::size_t frame = static_cast<std::size_t>(s.c) * s.plane();
  if (s.n == 0 || frame < 2) throw DataError("one_minus_pearson: frames need at least two samples");

  struct FrameStats {
    double mean_a, mean_b, norm_a, norm_b, cc;
  };
  auto stats = std::make_shared<std::vector<FrameStats>>(s.n);
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    const T* pa = a.value().plane(n, 0);
    const T* pb = b.value().plane(n, 0);
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < frame; ++i) {
      sa += pa[i];
      sb += pb[i];
    }
    const double ma = sa / static_cast<double>(frame);
    const double mb = sb / static_cast<double>(frame);
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < frame; ++i) {
      const double da = pa[i] - ma;
      const double db = pb[i] - mb;
      saa += da * da;
      sbb += db * db;
      sab += da * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) throw MetricError("constant frame has undefined correlation");
    const double na = std::sqrt(saa);
    const double nb = std::sqrt(sbb);
    const double cc = sab / (na * nb);
    (*stats)[n] = {ma, mb, na, nb, cc};
    total += 1.0 - cc;
  }
  const double frames = static_cast<double>(s.n);
  return make_result<T>(scalar_tensor<T>(static_cast<T>(total / frames)), {a.node(), b.node()},
                        [stats, frame, frames](Node<T>& self) {
                          Node<T>& an = *self.inputs[0];
                          Node<T>& bn = *self.inputs[1];
                          const double g = -self.grad[0] / frames;
                          for (std::size_t n = 0; n < stats->size(); ++n) {
                            const FrameStats& st = (*stats)[n];
                            const T* pa = an.value.plane(static_cast<int>(n), 0);
                            const T* pb = bn.value.plane(static_cast<int>(n), 0);
                            const double inv_ab = 1.0 / (st.norm_a * st.norm_b);
                            const double inv_aa = st.cc / (st.norm_a * st.norm_a);
                            const double inv_bb = st.cc / (st.norm_b * st.norm_b);
                            T* da = an.requires_grad ? an.grad_buffer().plane(static_cast<int>(n), 0) : nullptr;
                            T* db = bn.requires_grad ? bn.grad_buffer().plane(static_cast<int>(n), 0) : nullptr;
                            for (std::size_t i = 0; i < frame; ++i) {
                              const double ca = pa[i] - st.mean_a;
                              const double cb = pb[i] - st.mean_b;
                              if (da) da[i] += static_cast<T>(g * (cb * inv_ab - ca * inv_aa));
                              if (db) db[i] += static_cast<T>(g * (ca * inv_ab - cb * inv_bb));
                            }
                          }
                        });
}

template <class T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights) {
  if (terms.size() != weights.size()) throw std::invalid_argument("weighted_sum: size mismatch");
  double acc = 0.0;
  std::vector<std::shared_ptr<Node<T>>> inputs;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].value().size() != 1) throw std::invalid_argument("weighted_sum: terms must be scalars");
    acc += static_cast<double>(weights[i]) * terms[i].value()[0];
    inputs.push_back(terms[i].node());
  }
  return make_result<T>(scalar_tensor<T>(static_cast<T>(acc)), std::move(inputs), [weights](Node<T>& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      if (self.inputs[i]->requires_grad) self.inputs[i]->grad_buffer()[0] += weights[i] * self.grad[0];
    }
  });
}

#define CCGAN_INSTANTIATE_OPS(T)                                                                         \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, Conv2dOptions);                \
  template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormBuffers<T>&, bool); \
  template Var<T> instance_norm<T>(const Var<T>&, T);                                                   \
  template Var<T> relu<T>(const Var<T>&);                                                               \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                                      \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                 \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                                       \
  template Var<T> mean_squared_to<T>(const Var<T>&, T);                                                 \
  template Var<T> mean_abs_diff<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> one_minus_pearson<T>(const Var<T>&, const Var<T>&);                                   \
  template Var<T> weighted_sum<T>(const std::vector<Var<T>>&, const std::vector<T>&);

CCGAN_INSTANTIATE_OPS(float)
CCGAN_INSTANTIATE_OPS(double)

}  // namespace ccgan::nn
