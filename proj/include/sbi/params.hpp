#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sbi/tensor.hpp"

namespace sbi::models {

/// Named, ordered collection of trainable tensors.
template <class T>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    ad::Tensor<T> tensor;
  };

  /// Registers a trainable tensor; names must be unique.
  ad::Tensor<T> add(std::string name, ad::Shape shape, std::vector<T> values);
  const ad::Tensor<T>& get(std::string_view name) const;
  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

  /// Number of scalar parameters.
  std::size_t count() const;
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <class T>
std::vector<T> xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);
template <class T>
std::vector<T> normal_values(std::size_t n, double stddev, std::mt19937_64& rng);

}  // namespace sbi::models
