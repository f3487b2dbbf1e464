// SPDX-License-Identifier: Apache-2.0
#include "btrnn/btd.hpp"

#include <cmath>

#include "btrnn/contract.hpp"
#include "btrnn/errors.hpp"
#include "btrnn/rng.hpp"

namespace btrnn {

namespace {

std::uint64_t ipow(std::uint64_t base, std::size_t exp) {
  std::uint64_t r = 1;
  for (std::size_t e = 0; e < exp; ++e) r *= base;
  return r;
}

std::vector<Mode> mode_range(std::size_t first, std::size_t last, std::size_t step = 1) {
  std::vector<Mode> modes;
  for (std::size_t m = first; m <= last; m += step) modes.push_back(Mode{m});
  return modes;
}

void check_length(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionMismatch(std::string(what) + " has length " + std::to_string(got) + ", expected " +
                            std::to_string(want));
  }
}

// Core-first materialization of term n as a (J_1..J_d, I_1..I_d) tensor.
template <typename T>
Tensor<T> materialize_term(const BTDecomposition<T>& btd, std::size_t n) {
  const std::size_t d = btd.order();
  // t: (r_{k+1}..r_d, i_1, j_1, ..., i_k, j_k) after k factors.
  Tensor<T> t = btd.core(n);
  for (std::size_t k = 0; k < d; ++k) t = mode_product(t, btd.factor(n, k), Mode{1}, Mode{3});
  std::vector<std::size_t> order(2 * d);
  for (std::size_t k = 0; k < d; ++k) {
    order[k] = 2 * k + 1;
    order[d + k] = 2 * k;
  }
  return permute(t, order);
}

}  // namespace

template <typename T>
BTDecomposition<T>::BTDecomposition(FactorizedShape shape, std::size_t cp_rank, std::size_t tucker_rank)
    : shape_(std::move(shape)), cp_rank_(cp_rank), tucker_rank_(tucker_rank) {
  if (cp_rank_ < 1) throw std::invalid_argument("CP rank N must be >= 1");
  if (tucker_rank_ < 1) throw std::invalid_argument("Tucker rank R must be >= 1");
  const std::size_t d = shape_.order();
  cores_.reserve(cp_rank_);
  factors_.reserve(cp_rank_ * d);
  for (std::size_t n = 0; n < cp_rank_; ++n) cores_.emplace_back(Shape(d, tucker_rank_));
  for (std::size_t n = 0; n < cp_rank_; ++n) {
    for (std::size_t k = 0; k < d; ++k) {
      factors_.emplace_back(Shape{shape_.input_dims()[k], shape_.output_dims()[k], tucker_rank_});
    }
  }
}

template <typename T>
std::size_t BTDecomposition<T>::stored_scalars() const noexcept {
  std::size_t total = 0;
  for (const auto& c : cores_) total += c.size();
  for (const auto& f : factors_) total += f.size();
  return total;
}

template <typename T>
std::vector<std::span<T>> BTDecomposition<T>::parameters() {
  std::vector<std::span<T>> out;
  for (auto& c : cores_) out.push_back(c.data());
  for (auto& f : factors_) out.push_back(f.data());
  return out;
}

template <typename T>
std::vector<std::span<const T>> BTDecomposition<T>::parameters() const {
  std::vector<std::span<const T>> out;
  for (const auto& c : cores_) out.push_back(c.data());
  for (const auto& f : factors_) out.push_back(f.data());
  return out;
}

template <typename T>
BTDecomposition<T> BTDecomposition<T>::term(std::size_t n) const {
  BTDecomposition out(shape_, 1, tucker_rank_);
  out.cores_[0] = cores_.at(n);
  for (std::size_t k = 0; k < order(); ++k) out.factors_[k] = factor(n, k);
  return out;
}

std::uint64_t param_count(const FactorizedShape& shape, std::size_t cp_rank, std::size_t tucker_rank) {
  std::uint64_t per_term = ipow(tucker_rank, shape.order());
  for (std::size_t k = 0; k < shape.order(); ++k) {
    per_term += static_cast<std::uint64_t>(shape.input_dims()[k]) * shape.output_dims()[k] * tucker_rank;
  }
  return cp_rank * per_term;
}

std::vector<std::string> validate_ranks(const FactorizedShape& shape, std::size_t tucker_rank) {
  std::vector<std::string> warnings;
  for (std::size_t k = 0; k < shape.order(); ++k) {
    const auto limit = std::min(shape.input_dims()[k], shape.output_dims()[k]);
    if (tucker_rank > limit) {
      warnings.push_back("mode " + std::to_string(k + 1) + ": Tucker rank " + std::to_string(tucker_rank) +
                         " exceeds min(I_k, J_k) = " + std::to_string(limit));
    }
  }
  return warnings;
}

template <typename T>
BTDecomposition<T> init_btd(const FactorizedShape& shape, std::size_t cp_rank, std::size_t tucker_rank,
                            std::uint64_t seed) {
  BTDecomposition<T> btd(shape, cp_rank, tucker_rank);
  const double d = static_cast<double>(shape.order());
  const double target = 2.0 / static_cast<double>(shape.input_size() + shape.output_size());
  const double core_std =
      1.0 / std::sqrt(static_cast<double>(cp_rank) * std::pow(static_cast<double>(tucker_rank), d));
  const double factor_std = std::pow(target, 1.0 / (2.0 * d));

  Rng rng(seed);
  for (std::size_t n = 0; n < cp_rank; ++n) {
    for (auto& v : btd.core(n).data()) v = static_cast<T>(rng.normal(0.0, core_std));
  }
  for (std::size_t n = 0; n < cp_rank; ++n) {
    for (std::size_t k = 0; k < shape.order(); ++k) {
      for (auto& v : btd.factor(n, k).data()) v = static_cast<T>(rng.normal(0.0, factor_std));
    }
  }
  return btd;
}

template <typename T>
Tensor<T> reconstruct_dense(const BTDecomposition<T>& btd) {
  const std::size_t rows = btd.output_size(), cols = btd.input_size();
  std::vector<T> w(rows * cols, T{0});
  for (std::size_t n = 0; n < btd.cp_rank(); ++n) {
    const auto term = materialize_term(btd, n);
    const auto values = term.data();
    for (std::size_t e = 0; e < w.size(); ++e) w[e] += values[e];
  }
  return Tensor<T>(Shape{rows, cols}, std::move(w));
}

template <typename T>
std::vector<T> forward(const BTDecomposition<T>& btd, std::span<const T> x) {
  check_length(x.size(), btd.input_size(), "forward input");
  const std::size_t d = btd.order();
  const auto x_tensor = tensorize(x, btd.shape().input_dims());
  const auto z_rank_modes = mode_range(2, 2 * d, 2);
  const auto core_modes = mode_range(1, d);

  std::vector<T> y(btd.output_size(), T{0});
  for (std::size_t n = 0; n < btd.cp_rank(); ++n) {
    // z: (I_{k+1}..I_d, J_1, R, ..., J_k, R) after k factors.
    Tensor<T> z = x_tensor;
    for (std::size_t k = 0; k < d; ++k) z = mode_product(z, btd.factor(n, k), Mode{1}, Mode{1});
    const auto yn = contract(z, btd.core(n), z_rank_modes, core_modes);
    const auto values = yn.data();
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += values[j];
  }
  return y;
}

template <typename T>
std::vector<T> forward_naive(const BTDecomposition<T>& btd, std::span<const T> x) {
  check_length(x.size(), btd.input_size(), "forward input");
  const std::size_t d = btd.order();
  const auto x_tensor = tensorize(x, btd.shape().input_dims());
  const auto w_input_modes = mode_range(d + 1, 2 * d);
  const auto x_modes = mode_range(1, d);
  std::vector<T> y(btd.output_size(), T{0});
  for (std::size_t n = 0; n < btd.cp_rank(); ++n) {
    const auto yn = contract(materialize_term(btd, n), x_tensor, w_input_modes, x_modes);
    const auto values = yn.data();
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += values[j];
  }
  return y;
}

template <typename T>
BTGradients<T> zero_gradients(const BTDecomposition<T>& btd, bool with_input) {
  BTGradients<T> g;
  for (std::size_t n = 0; n < btd.cp_rank(); ++n) g.d_cores.emplace_back(btd.core(n).shape());
  for (std::size_t n = 0; n < btd.cp_rank(); ++n) {
    for (std::size_t k = 0; k < btd.order(); ++k) g.d_factors.emplace_back(btd.factor(n, k).shape());
  }
  if (with_input) g.d_input.assign(btd.input_size(), T{0});
  return g;
}

template <typename T>
void accumulate_backward(const BTDecomposition<T>& btd, std::span<const T> x, std::span<const T> dy,
                         BTGradients<T>& grads, bool want_input) {
  check_length(x.size(), btd.input_size(), "backward input");
  check_length(dy.size(), btd.output_size(), "backward upstream gradient");
  if (want_input) check_length(grads.d_input.size(), btd.input_size(), "input gradient buffer");
  const std::size_t d = btd.order();
  const auto x_tensor = tensorize(x, btd.shape().input_dims());
  const auto dy_tensor = tensorize(dy, btd.shape().output_dims());
  const auto z_output_modes = mode_range(1, 2 * d - 1, 2);
  const auto dy_modes = mode_range(1, d);

  // Interleave (J_1..J_d, R_1..R_d) into (J_1, R_1, ..., J_d, R_d).
  std::vector<std::size_t> interleave(2 * d);
  for (std::size_t k = 0; k < d; ++k) {
    interleave[2 * k] = k;
    interleave[2 * k + 1] = d + k;
  }

  for (std::size_t n = 0; n < btd.cp_rank(); ++n) {
    // Replay the forward sweep, keeping every intermediate.
    std::vector<Tensor<T>> z;
    z.reserve(d + 1);
    z.push_back(x_tensor);
    for (std::size_t k = 0; k < d; ++k) z.push_back(mode_product(z[k], btd.factor(n, k), Mode{1}, Mode{1}));

    // dL/dG_n = Z_d contracted with dY over all output modes.
    const auto dg = contract(z[d], dy_tensor, z_output_modes, dy_modes);
    auto dcore = grads.d_cores[n].data();
    for (std::size_t e = 0; e < dcore.size(); ++e) dcore[e] += dg[e];

    // dL/dZ_d[j_1, r_1, ..., j_d, r_d] = dY[j] * G_n[r].
    Tensor<T> dz = permute(contract<T>(dy_tensor, btd.core(n), {}, {}), interleave);

    for (std::size_t k = d; k-- > 0;) {
      const std::size_t zo = z[k].order();
      const std::size_t dzo = dz.order();
      const auto zk_rest = mode_range(2, zo);
      const auto dz_rest = mode_range(1, dzo - 2);
      const auto da = contract(z[k], dz, zk_rest, dz_rest);
      auto dfactor = grads.d_factors[n * d + k].data();
      for (std::size_t e = 0; e < dfactor.size(); ++e) dfactor[e] += da[e];

      if (k == 0 && !want_input) break;
      dz = contract(btd.factor(n, k), dz, {Mode{2}, Mode{3}}, {Mode{dzo - 1}, Mode{dzo}});
    }
    if (want_input) {
      const auto dx = dz.data();
      for (std::size_t i = 0; i < grads.d_input.size(); ++i) grads.d_input[i] += dx[i];
    }
  }
}

template <typename T>
BTGradients<T> backward(const BTDecomposition<T>& btd, std::span<const T> x, std::span<const T> dy) {
  auto grads = zero_gradients(btd, true);
  accumulate_backward(btd, x, dy, grads, true);
  return grads;
}

ForwardFlops forward_flops_breakdown(const FactorizedShape& shape, std::size_t cp_rank, std::size_t tucker_rank) {
  const std::size_t d = shape.order();
  ForwardFlops f;
  for (std::size_t k = 0; k < d; ++k) {
    std::uint64_t step = ipow(tucker_rank, k + 1);
    for (std::size_t m = k; m < d; ++m) step *= shape.input_dims()[m];
    for (std::size_t m = 0; m <= k; ++m) step *= shape.output_dims()[m];
    f.factor_stage += step;
  }
  f.core_stage = static_cast<std::uint64_t>(shape.output_size()) * ipow(tucker_rank, d);
  f.factor_stage *= cp_rank;
  f.core_stage *= cp_rank;
  return f;
}

std::uint64_t flops_forward(const FactorizedShape& shape, std::size_t cp_rank, std::size_t tucker_rank) {
  return forward_flops_breakdown(shape, cp_rank, tucker_rank).total();
}

std::uint64_t flops_naive(const FactorizedShape& shape, std::size_t cp_rank, std::size_t tucker_rank) {
  const std::size_t d = shape.order();
  std::uint64_t per_term = static_cast<std::uint64_t>(shape.input_size()) * shape.output_size();
  std::uint64_t prefix = 1;
  for (std::size_t k = 0; k < d; ++k) {
    prefix *= static_cast<std::uint64_t>(shape.input_dims()[k]) * shape.output_dims()[k];
    per_term += ipow(tucker_rank, d - k) * prefix;
  }
  return cp_rank * per_term;
}

#define BTRNN_INSTANTIATE(T)                                                                            \
  template class BTDecomposition<T>;                                                                    \
  template BTDecomposition<T> init_btd(const FactorizedShape&, std::size_t, std::size_t, std::uint64_t); \
  template Tensor<T> reconstruct_dense(const BTDecomposition<T>&);                                      \
  template std::vector<T> forward(const BTDecomposition<T>&, std::span<const T>);                       \
  template std::vector<T> forward_naive(const BTDecomposition<T>&, std::span<const T>);                 \
  template BTGradients<T> zero_gradients(const BTDecomposition<T>&, bool);                              \
  template BTGradients<T> backward(const BTDecomposition<T>&, std::span<const T>, std::span<const T>);  \
  template void accumulate_backward(const BTDecomposition<T>&, std::span<const T>, std::span<const T>,  \
                                    BTGradients<T>&, bool);

BTRNN_INSTANTIATE(float)
BTRNN_INSTANTIATE(double)
#undef BTRNN_INSTANTIATE

}  // namespace btrnn
