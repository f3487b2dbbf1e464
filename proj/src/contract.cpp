// SPDX-License-Identifier: Apache-2.0
#include "btrnn/contract.hpp"

#include "btrnn/kernels.hpp"

namespace btrnn {

namespace {

Backend& backend_slot() noexcept {
  thread_local Backend backend = Backend::parallel;
  return backend;
}

std::vector<std::size_t> zero_based(std::span<const Mode> modes) {
  std::vector<std::size_t> out;
  out.reserve(modes.size());
  for (auto m : modes) {
    if (m.k == 0) throw std::out_of_range("mode indices are 1-based");
    out.push_back(m.k - 1);
  }
  return out;
}

}  // namespace

Backend current_backend() noexcept { return backend_slot(); }

ScopedBackend::ScopedBackend(Backend b) noexcept : saved_(backend_slot()) { backend_slot() = b; }
ScopedBackend::~ScopedBackend() { backend_slot() = saved_; }

ScopedMacCounter::ScopedMacCounter() noexcept
    : saved_slot_(kernels::mac_counter_slot()), serial_(Backend::serial) {
  kernels::mac_counter_slot() = &count_;
}
ScopedMacCounter::~ScopedMacCounter() { kernels::mac_counter_slot() = saved_slot_; }

template <typename T>
Tensor<T> contract(const Tensor<T>& a, const Tensor<T>& b, std::span<const Mode> modes_a,
                   std::span<const Mode> modes_b) {
  const auto ma = zero_based(modes_a);
  const auto mb = zero_based(modes_b);
  const auto plan = kernels::plan_contraction(a.shape(), b.shape(), ma, mb);
  Tensor<T> out(plan.out_shape);
  if (current_backend() == Backend::serial) {
    kernels::contract_serial<T>(plan, a.data(), b.data(), out.data());
  } else {
    kernels::contract_parallel<T>(plan, a.data(), b.data(), out.data());
  }
  return out;
}

template <typename T>
Tensor<T> mode_product(const Tensor<T>& a, const Tensor<T>& b, Mode ka, Mode kb) {
  const Mode ma[] = {ka};
  const Mode mb[] = {kb};
  return contract(a, b, std::span<const Mode>(ma), std::span<const Mode>(mb));
}

template Tensor<float> contract(const Tensor<float>&, const Tensor<float>&, std::span<const Mode>,
                                std::span<const Mode>);
template Tensor<double> contract(const Tensor<double>&, const Tensor<double>&, std::span<const Mode>,
                                 std::span<const Mode>);
template Tensor<float> mode_product(const Tensor<float>&, const Tensor<float>&, Mode, Mode);
template Tensor<double> mode_product(const Tensor<double>&, const Tensor<double>&, Mode, Mode);

}  // namespace btrnn
