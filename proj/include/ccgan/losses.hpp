#pragma once

#include "ccgan/nn/ops.hpp"

namespace ccgan {

struct LossWeights {
  double lambda1 = 10.0;  // cycle
  double lambda2 = 5.0;   // identical
  double lambda3 = 5.0;   // correlation

  void validate() const;
  /// Adversarial + cycle only.
  bool is_vanilla() const { return lambda2 == 0.0 && lambda3 == 0.0; }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// One step's scalars. total is the generator objective.
struct LossReport {
  double adv_g = 0.0;
  double adv_d = 0.0;
  double cyc = 0.0;
  double idt = 0.0;
  double cc = 0.0;
  double total = 0.0;
};

struct AdversarialTerms {
  double generator = 0.0;
  double discriminator = 0.0;
};

/// Least-squares adversarial terms over patch-score maps:
/// discriminator = mean((real - 1)^2) + mean(fake^2), generator = mean((fake - 1)^2).
template <class T>
AdversarialTerms adversarial_losses(const nn::Tensor<T>& d_real, const nn::Tensor<T>& d_fake);

/// mean|rec_a - a| + mean|rec_b - b|.
template <class T>
double cycle_loss(const nn::Tensor<T>& a, const nn::Tensor<T>& reconstructed_a, const nn::Tensor<T>& b,
                  const nn::Tensor<T>& reconstructed_b);

/// mean|G_A(B) - B| + mean|G_B(A) - A|.
template <class T>
double identical_loss(const nn::Tensor<T>& b, const nn::Tensor<T>& g_a_of_b, const nn::Tensor<T>& a,
                      const nn::Tensor<T>& g_b_of_a);

/// (1 - cc(G(A), A)) + (1 - cc(G(B), B)), each Pearson coefficient taken per
/// frame and averaged over the batch.
template <class T>
double correlation_loss(const nn::Tensor<T>& a, const nn::Tensor<T>& g_of_a, const nn::Tensor<T>& b,
                        const nn::Tensor<T>& g_of_b);

/// adv_g + lambda1 * cyc + lambda2 * idt + lambda3 * cc.
double total_generator_objective(const LossReport& parts, const LossWeights& w);

namespace graph {

// Differentiable forms of the terms above, used by the trainer.

template <class T>
nn::Var<T> generator_adversarial(const nn::Var<T>& d_fake);

template <class T>
nn::Var<T> discriminator_adversarial(const nn::Var<T>& d_real, const nn::Var<T>& d_fake);

template <class T>
nn::Var<T> l1_pair(const nn::Var<T>& x1, const nn::Var<T>& y1, const nn::Var<T>& x2, const nn::Var<T>& y2);

template <class T>
nn::Var<T> correlation_pair(const nn::Var<T>& a, const nn::Var<T>& g_of_a, const nn::Var<T>& b,
                            const nn::Var<T>& g_of_b);

}  // namespace graph

/// Throws DivergenceError if any element is NaN or infinite.
template <class T>
void require_finite(const nn::Tensor<T>& t, const char* what);

}  // namespace ccgan
