#include "sbi/params.hpp"

#include <cmath>

namespace sbi::models {

template <class T>
ad::Tensor<T> ParameterSet<T>::add(std::string name, ad::Shape shape, std::vector<T> values) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name " + name);
  auto t = ad::Tensor<T>::from(std::move(shape), std::move(values), true);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), t});
  return t;
}

template <class T>
const ad::Tensor<T>& ParameterSet<T>::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return entries_[it->second].tensor;
}

template <class T>
std::size_t ParameterSet<T>::count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

template <class T>
void ParameterSet<T>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <class T>
std::vector<T> xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<T> v(fan_in * fan_out);
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return v;
}

template <class T>
std::vector<T> normal_values(std::size_t n, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return v;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template std::vector<float> xavier_uniform<float>(std::size_t, std::size_t, std::mt19937_64&);
template std::vector<double> xavier_uniform<double>(std::size_t, std::size_t, std::mt19937_64&);
template std::vector<float> normal_values<float>(std::size_t, double, std::mt19937_64&);
template std::vector<double> normal_values<double>(std::size_t, double, std::mt19937_64&);

}  // namespace sbi::models
