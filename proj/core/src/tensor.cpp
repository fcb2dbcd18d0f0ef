// SPDX-License-Identifier: Apache-2.0
#include "vicmae/tensor.hpp"

#include <algorithm>

#include "vicmae/error.hpp"

namespace vicmae {

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h = (h ^ p[i]) * 0x100000001b3ULL;
  }
  return h;
}

Parameter& ParameterStore::add(const std::string& name, Matrix value, bool trainable, bool decay) {
  if (params_.contains(name)) {
    throw ValidationError("duplicate parameter: " + name);
  }
  Parameter p;
  p.grad = Matrix::Zero(value.rows(), value.cols());
  p.value = std::move(value);
  p.trainable = trainable;
  p.decay = decay;
  order_.push_back(name);
  return params_.emplace(name, std::move(p)).first->second;
}

void ParameterStore::erase(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    return;
  }
  params_.erase(it);
  order_.erase(std::find(order_.begin(), order_.end(), name));
}

Parameter& ParameterStore::at(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw ValidationError("unknown parameter: " + std::string(name));
  }
  return it->second;
}

const Parameter& ParameterStore::at(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw ValidationError("unknown parameter: " + std::string(name));
  }
  return it->second;
}

bool ParameterStore::contains(std::string_view name) const { return params_.find(name) != params_.end(); }

void ParameterStore::zero_grad() {
  for (auto& [name, p] : params_) {
    p.grad.setZero(p.value.rows(), p.value.cols());
  }
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) {
    if (p.trainable) {
      n += static_cast<std::size_t>(p.value.size());
    }
  }
  return n;
}

std::uint64_t ParameterStore::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& name : order_) {
    const Parameter& p = params_.find(name)->second;
    h = fnv1a(name.data(), name.size(), h);
    const std::int64_t shape[2] = {p.value.rows(), p.value.cols()};
    h = fnv1a(shape, sizeof(shape), h);
    h = fnv1a(p.value.data(), sizeof(double) * static_cast<std::size_t>(p.value.size()), h);
  }
  return h;
}

void ParameterStore::for_each(const std::function<void(const std::string&, Parameter&)>& fn) {
  for (const auto& name : order_) {
    fn(name, params_.find(name)->second);
  }
}

void ParameterStore::for_each(const std::function<void(const std::string&, const Parameter&)>& fn) const {
  for (const auto& name : order_) {
    fn(name, params_.find(name)->second);
  }
}

}  // namespace vicmae
