#include "ccgan/losses.hpp"

#include <cmath>
#include <string>

#include "ccgan/errors.hpp"

namespace ccgan {

void LossWeights::validate() const {
  for (double l : {lambda1, lambda2, lambda3}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

template <class T>
void require_finite(const nn::Tensor<T>& t, const char* what) {
  for (const T v : t.values()) {
    if (!std::isfinite(static_cast<double>(v))) throw DivergenceError(std::string("non-finite values in ") + what);
  }
}

namespace graph {

template <class T>
nn::Var<T> generator_adversarial(const nn::Var<T>& d_fake) {
  require_finite(d_fake.value(), "discriminator scores");
  return nn::mean_squared_to(d_fake, T(1));
}

template <class T>
nn::Var<T> discriminator_adversarial(const nn::Var<T>& d_real, const nn::Var<T>& d_fake) {
  require_finite(d_real.value(), "discriminator scores");
  require_finite(d_fake.value(), "discriminator scores");
  return nn::weighted_sum<T>({nn::mean_squared_to(d_real, T(1)), nn::mean_squared_to(d_fake, T(0))}, {T(1), T(1)});
}

template <class T>
nn::Var<T> l1_pair(const nn::Var<T>& x1, const nn::Var<T>& y1, const nn::Var<T>& x2, const nn::Var<T>& y2) {
  return nn::weighted_sum<T>({nn::mean_abs_diff(y1, x1), nn::mean_abs_diff(y2, x2)}, {T(1), T(1)});
}

template <class T>
nn::Var<T> correlation_pair(const nn::Var<T>& a, const nn::Var<T>& g_of_a, const nn::Var<T>& b,
                            const nn::Var<T>& g_of_b) {
  return nn::weighted_sum<T>({nn::one_minus_pearson(g_of_a, a), nn::one_minus_pearson(g_of_b, b)}, {T(1), T(1)});
}

}  // namespace graph

template <class T>
AdversarialTerms adversarial_losses(const nn::Tensor<T>& d_real, const nn::Tensor<T>& d_fake) {
  nn::NoGradGuard guard;
  const auto real = nn::constant(d_real);
  const auto fake = nn::constant(d_fake);
  AdversarialTerms out;
  out.discriminator = graph::discriminator_adversarial(real, fake).value().item();
  out.generator = graph::generator_adversarial(fake).value().item();
  return out;
}

template <class T>
double cycle_loss(const nn::Tensor<T>& a, const nn::Tensor<T>& reconstructed_a, const nn::Tensor<T>& b,
                  const nn::Tensor<T>& reconstructed_b) {
  nn::NoGradGuard guard;
  return graph::l1_pair(nn::constant(a), nn::constant(reconstructed_a), nn::constant(b), nn::constant(reconstructed_b))
      .value()
      .item();
}

template <class T>
double identical_loss(const nn::Tensor<T>& b, const nn::Tensor<T>& g_a_of_b, const nn::Tensor<T>& a,
                      const nn::Tensor<T>& g_b_of_a) {
  nn::NoGradGuard guard;
  return graph::l1_pair(nn::constant(b), nn::constant(g_a_of_b), nn::constant(a), nn::constant(g_b_of_a))
      .value()
      .item();
}

template <class T>
double correlation_loss(const nn::Tensor<T>& a, const nn::Tensor<T>& g_of_a, const nn::Tensor<T>& b,
                        const nn::Tensor<T>& g_of_b) {
  nn::NoGradGuard guard;
  return graph::correlation_pair(nn::constant(a), nn::constant(g_of_a), nn::constant(b), nn::constant(g_of_b))
      .value()
      .item();
}

double total_generator_objective(const LossReport& p, const LossWeights& w) {
  return p.adv_g + w.lambda1 * p.cyc + w.lambda2 * p.idt + w.lambda3 * p.cc;
}

#define CCGAN_INSTANTIATE_LOSSES(T)                                                                              \
  template void require_finite<T>(const nn::Tensor<T>&, const char*);                                          \
  template AdversarialTerms adversarial_losses<T>(const nn::Tensor<T>&, const nn::Tensor<T>&);                 \
  template double cycle_loss<T>(const nn::Tensor<T>&, const nn::Tensor<T>&, const nn::Tensor<T>&,              \
                                const nn::Tensor<T>&);                                                         \
  template double identical_loss<T>(const nn::Tensor<T>&, const nn::Tensor<T>&, const nn::Tensor<T>&,          \
                                    const nn::Tensor<T>&);                                                     \
  template double correlation_loss<T>(const nn::Tensor<T>&, const nn::Tensor<T>&, const nn::Tensor<T>&,        \
                                      const nn::Tensor<T>&);                                                   \
  template nn::Var<T> graph::generator_adversarial<T>(const nn::Var<T>&);                                      \
  template nn::Var<T> graph::discriminator_adversarial<T>(const nn::Var<T>&, const nn::Var<T>&);               \
  template nn::Var<T> graph::l1_pair<T>(const nn::Var<T>&, const nn::Var<T>&, const nn::Var<T>&,               \
                                        const nn::Var<T>&);                                                    \
  template nn::Var<T> graph::correlation_pair<T>(const nn::Var<T>&, const nn::Var<T>&, const nn::Var<T>&,      \
                                                 const nn::Var<T>&);

CCGAN_INSTANTIATE_LOSSES(float)
CCGAN_INSTANTIATE_LOSSES(double)

}  // namespace ccgan
