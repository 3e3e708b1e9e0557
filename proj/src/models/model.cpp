#include "sbi/model.hpp"

#include <algorithm>
#include <limits>

namespace sbi::models {

template <class T>
std::size_t Stream<T>::row_length(std::size_t b) const {
  const std::size_t len = length();
  std::size_t n = 0;
  for (std::size_t t = 0; t < len; ++t) n += valid[b * len + t] != 0;
  return n;
}

template <class T>
Stream<T> make_stream(const Seq2SeqModel<T>& model, const std::vector<std::vector<TokenId>>& tokens,
                      Direction direction) {
  std::size_t len = 0;
  for (const auto& row : tokens) len = std::max(len, row.size() + 1);
  const std::size_t batch = tokens.size();
  std::vector<TokenId> ids(batch * len, data::kPad);
  Stream<T> s;
  s.valid.assign(batch * len, 0);
  s.direction = direction;
  for (std::size_t b = 0; b < batch; ++b) {
    ids[b * len] = search::direction_tag(direction);
    std::copy(tokens[b].begin(), tokens[b].end(), ids.begin() + static_cast<std::ptrdiff_t>(b * len + 1));
    std::fill_n(s.valid.begin() + static_cast<std::ptrdiff_t>(b * len), tokens[b].size() + 1, 1);
  }
  s.embedded = model.embed(ids, batch, len);
  return s;
}

std::vector<TokenId> stream_targets(const std::vector<std::vector<TokenId>>& tokens, std::size_t length) {
  std::vector<TokenId> out(tokens.size() * length, data::kPad);
  for (std::size_t b = 0; b < tokens.size(); ++b) {
    if (tokens[b].size() + 1 > length) throw std::invalid_argument("stream_targets: row longer than stream");
    std::copy(tokens[b].begin(), tokens[b].end(), out.begin() + static_cast<std::ptrdiff_t>(b * length));
    out[b * length + tokens[b].size()] = data::kEos;
  }
  return out;
}

double sequence_log_prob(search::Scorer& scorer, Direction direction, std::span<const TokenId> tokens) {
  search::Hypothesis h;
  h.direction = direction;
  h.tokens = {search::direction_tag(direction)};
  h.cache = scorer.start(direction);
  double total = 0.0;
  for (std::size_t i = 0; i <= tokens.size(); ++i) {
    const search::Hypothesis* hp = &h;
    const search::Hypothesis* none = nullptr;
    auto out = scorer.step(std::span(&hp, 1), std::span(&none, 1));
    const TokenId next = i < tokens.size() ? tokens[i] : data::kEos;
    total += out[0].log_probs.at(static_cast<std::size_t>(next));
    h.tokens.push_back(next);
    h.cache = out[0].cache;
  }
  return total;
}

template struct Stream<float>;
template struct Stream<double>;
template Stream<float> make_stream(const Seq2SeqModel<float>&, const std::vector<std::vector<TokenId>>&, Direction);
template Stream<double> make_stream(const Seq2SeqModel<double>&, const std::vector<std::vector<TokenId>>&, Direction);

}  // namespace sbi::models
