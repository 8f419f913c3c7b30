#include "ccgan/optimizer.hpp"

#include <cmath>

namespace ccgan {

template <class T>
Adam<T>::Adam(nn::ParameterStore<T>& store, AdamSettings settings) : store_(&store), settings_(settings) {
  for (const auto& e : store.entries()) {
    m_.emplace_back(e.var.value().size(), T(0));
    v_.emplace_back(e.var.value().size(), T(0));
  }
}

template <class T>
void Adam<T>::step(double lr) {
  ++steps_;
  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  auto& entries = store_->entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto& var = entries[p].var;
    if (var.grad().empty()) continue;
    T* w = var.mutable_value().data();
    const T* g = var.grad().data();
    T* m = m_[p].data();
    T* v = v_[p].data();
    for (std::size_t i = 0; i < m_[p].size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      w[i] = static_cast<T>(w[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + settings_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace ccgan
