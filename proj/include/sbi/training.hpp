#pragma once

// Objectives, optimizer and training strategies for the bidirectional models.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbi/lstm.hpp"
#include "sbi/model.hpp"
#include "sbi/search.hpp"
#include "sbi/transformer.hpp"

namespace sbi::train {

using data::TokenId;
using data::TrainingTriple;
using search::Direction;

/// Invalid or inconsistent training setup.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainingConfig {
  double beta1 = 0.9;
  double beta2 = 0.998;
  double epsilon = 1e-9;
  std::size_t warmup = 400;
  double lr_scale = 1.0;  // multiplies the warmup/decay schedule
  double label_smoothing = 0.1;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 20;
  std::size_t max_steps = 0;      // 0: no limit
  std::size_t stage2_epochs = 0;  // epochs of the interactive stage; 0: max_epochs
  std::size_t eval_every = 0;     // steps between validations; 0: once per epoch
  std::size_t patience = 3;       // evaluations without improvement before stopping
  double fine_tune_fraction = 0.1;
  std::size_t pseudo_beam = 1;
  std::size_t pseudo_max_len = 0;  // 0: 2 * |source| + 10
  bool from_scratch = false;       // two-pass: reinitialize before the second pass
  double max_seconds = 0.0;        // wall budget per stage; 0: none
  std::uint64_t seed = 7;

  void validate() const;
};

/// Which model to build.
struct ModelSpec {
  std::string architecture = "transformer";  // "transformer" or "lstm"
  models::TransformerConfig transformer;
  models::LstmConfig lstm;

  std::size_t vocab_size() const;
  /// Width used by the learning-rate schedule.
  std::size_t model_dim() const;
};

template <class T>
std::unique_ptr<models::Seq2SeqModel<T>> make_model(const ModelSpec& spec);

/// Copies parameter values by name; both sets must hold the same names and shapes.
template <class T>
void copy_parameters(const models::Seq2SeqModel<T>& from, models::Seq2SeqModel<T>& to);

/// d^-0.5 * min(step^-0.5, step * warmup^-1.5), scaled by lr_scale.
double learning_rate(std::size_t step, std::size_t model_dim, const TrainingConfig& config);

template <class T>
struct AdamState {
  std::size_t step = 0;
  double lr = 0.0;
  std::vector<std::vector<T>> m, v;  // one per parameter, in registration order
};

/// One Adam update with bias correction from the gradients currently stored
/// on the parameters. Returns the learning rate used.
template <class T>
double adam_step(models::ParameterSet<T>& params, AdamState<T>& state, std::size_t model_dim,
                 const TrainingConfig& config);

/// Which opposite-direction sequences condition each directional term.
enum class Context {
  kNone,    // future context forced empty
  kGold,    // the other direction's reference
  kPseudo,  // the other direction's decoded output
};

template <class T>
struct LossTerms {
  ad::Tensor<T> total;  // forward + backward
  double forward = 0.0;
  double backward = 0.0;
  std::size_t tokens = 0;  // target positions per direction
};

/// -[log p(y> | x, ctx<) + log p(y< | x, ctx>)], each term the mean
/// label-smoothed token cross entropy of its direction.
template <class T>
LossTerms<T> bidirectional_loss(const models::Seq2SeqModel<T>& model, std::span<const TrainingTriple* const> batch,
                                Context context, double label_smoothing, const models::RunMode& mode);

/// Both directions with an empty future context.
template <class T>
LossTerms<T> no_interaction_loss(const models::Seq2SeqModel<T>& model, std::span<const TrainingTriple* const> batch,
                                 double label_smoothing, const models::RunMode& mode);

/// Max |gradient| per context position that the position-`position` loss of
/// the `primary` stream sends to the context embeddings.
template <class T>
std::vector<double> context_gradient_profile(models::Seq2SeqModel<T>& model, const TrainingTriple& triple,
                                             Direction primary, std::size_t position, Context context);

/// Largest entry of the profile at context positions >= `position`; zero when
/// the visibility rule holds.
template <class T>
double context_gradient_beyond(models::Seq2SeqModel<T>& model, const TrainingTriple& triple, Direction primary,
                               std::size_t position, Context context);

struct PseudoResult {
  std::vector<TrainingTriple> triples;
  std::size_t skipped = 0;
};

/// Decodes every source once per direction without interaction. pseudo_backward
/// keeps right-to-left generation order.
template <class T>
PseudoResult generate_pseudo_targets(const models::Seq2SeqModel<T>& model, std::span<const TrainingTriple> corpus,
                                     const TrainingConfig& config);

struct LogRow {
  std::string stage;
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double seconds = 0.0;
};

struct TrainingLog {
  std::vector<LogRow> rows;
  /// Called after every evaluation when set.
  std::function<void(const LogRow&)> on_row;
  void add(const LogRow& row);
  /// Tab-separated: step, lr, train loss, validation loss, wall seconds.
  void write(std::ostream& out) const;
};

enum class Objective { kNoInteraction, kBidirectional };

struct StageResult {
  std::size_t steps = 0;
  std::size_t epochs = 0;
  double best_valid_loss = 0.0;
  bool early_stopped = false;
};

/// Minibatch training with validation, early stopping and best-weights restore.
template <class T>
StageResult train_stage(models::Seq2SeqModel<T>& model, std::span<const TrainingTriple> train,
                        std::span<const TrainingTriple> valid, Objective objective, std::size_t epochs,
                        const TrainingConfig& config, std::size_t model_dim, TrainingLog& log,
                        const std::string& stage);

/// Uniform sample without replacement of round(fraction * n) indices, at least one, sorted.
std::vector<std::size_t> sample_subset(std::size_t n, double fraction, std::uint64_t seed);

template <class T>
struct TrainedModels {
  std::unique_ptr<models::Seq2SeqModel<T>> bidirectional;
  std::unique_ptr<models::Seq2SeqModel<T>> no_interaction;  // the first-stage model
  TrainingLog log;
  std::size_t pseudo_skipped = 0;
  std::size_t stage2_examples = 0;
};

/// First stage only: a shared-weights model trained without interaction.
template <class T>
TrainedModels<T> train_no_interaction(const ModelSpec& spec, std::span<const TrainingTriple> train,
                                      std::span<const TrainingTriple> valid, const TrainingConfig& config);

template <class T>
struct SecondStage {
  std::unique_ptr<models::Seq2SeqModel<T>> model;
  std::size_t pseudo_skipped = 0;
  std::size_t examples = 0;
};

/// Interactive stage on top of a trained first-stage model: pseudo targets
/// from `first_stage`, then training with pseudo contexts. With `subset` it is
/// the fine-tuning stage on a sampled fraction; otherwise the second pass of
/// two-pass training over all of `train`.
template <class T>
SecondStage<T> second_stage(const ModelSpec& spec, const models::Seq2SeqModel<T>& first_stage,
                            std::span<const TrainingTriple> train, std::span<const TrainingTriple> valid,
                            const TrainingConfig& config, bool subset, TrainingLog& log);

/// Pass 1 without interaction, pseudo-targets for the whole corpus, pass 2
/// with pseudo contexts.
template <class T>
TrainedModels<T> two_pass_train(const ModelSpec& spec, std::span<const TrainingTriple> train,
                                std::span<const TrainingTriple> valid, const TrainingConfig& config);

/// Stage 1 without interaction on everything, stage 2 with pseudo contexts on
/// a sampled subset.
template <class T>
TrainedModels<T> fine_tune(const ModelSpec& spec, std::span<const TrainingTriple> train,
                           std::span<const TrainingTriple> valid, const TrainingConfig& config);

}  // namespace sbi::train
