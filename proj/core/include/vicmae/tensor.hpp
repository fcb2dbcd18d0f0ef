// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace vicmae {

/// Row-major dense matrix. Token batches are stored as [batch * length, width].
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vector = Eigen::VectorXd;

struct Parameter {
  Matrix value;
  Matrix grad;
  bool trainable = true;
  /// Participates in decoupled weight decay.
  bool decay = true;
};

/// Named parameters in insertion order. Addresses are stable for the lifetime
/// of the store, so graphs may hold raw pointers into it.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Matrix value, bool trainable = true, bool decay = true);
  void erase(std::string_view name);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

  void zero_grad();
  /// Number of trainable scalars.
  std::size_t trainable_count() const;
  /// FNV-1a over names, shapes and value bytes.
  std::uint64_t checksum() const;

  void for_each(const std::function<void(const std::string&, Parameter&)>& fn);
  void for_each(const std::function<void(const std::string&, const Parameter&)>& fn) const;

 private:
  std::map<std::string, Parameter, std::less<>> params_;
  std::vector<std::string> order_;
};

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace vicmae
