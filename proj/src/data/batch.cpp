#include <algorithm>
#include <numeric>

#include "sbi/data.hpp"

namespace sbi::data {

std::vector<Batch> batchify(std::span<const TrainingTriple> corpus, std::size_t batch_size, bool sort_by_length) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  if (sort_by_length) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto& x = corpus[a];
      const auto& y = corpus[b];
      if (x.source.size() != y.source.size()) return x.source.size() < y.source.size();
      return x.forward.size() < y.forward.size();
    });
  }

  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    Batch b;
    b.size = end - begin;
    b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end));
    for (std::size_t idx : b.indices) {
      b.source_len = std::max(b.source_len, corpus[idx].source.size());
      b.target_len = std::max(b.target_len, corpus[idx].forward.size());
    }
    b.source.assign(b.size * b.source_len, kPad);
    b.source_mask.assign(b.size * b.source_len, 0);
    b.forward.assign(b.size * b.target_len, kPad);
    b.backward.assign(b.size * b.target_len, kPad);
    b.target_mask.assign(b.size * b.target_len, 0);
    for (std::size_t r = 0; r < b.size; ++r) {
      const auto& t = corpus[b.indices[r]];
      std::copy(t.source.begin(), t.source.end(), b.source.begin() + static_cast<std::ptrdiff_t>(r * b.source_len));
      std::fill_n(b.source_mask.begin() + static_cast<std::ptrdiff_t>(r * b.source_len), t.source.size(), 1);
      std::copy(t.forward.begin(), t.forward.end(), b.forward.begin() + static_cast<std::ptrdiff_t>(r * b.target_len));
      std::copy(t.backward.begin(), t.backward.end(),
                b.backward.begin() + static_cast<std::ptrdiff_t>(r * b.target_len));
      std::fill_n(b.target_mask.begin() + static_cast<std::ptrdiff_t>(r * b.target_len), t.forward.size(), 1);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace sbi::data
