#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "medqc/model.hpp"

namespace medqc {

inline constexpr double kLossEpsilon = 1e-12;

// -log p[gold], with p[gold] clamped to at least 1e-12.
double cross_entropy(const Vector& probabilities, std::size_t gold);
// Mean over labels of -[y log p + (1-y) log(1-p)], p clamped to [eps, 1-eps].
double binary_cross_entropy(const Vector& probabilities, const std::vector<double>& gold);

struct LossAndGrad {
  double loss = 0.0;
  Vector grad_logits;
};

// Loss for the task mode and its gradient w.r.t. the logits.
LossAndGrad loss_and_grad(const Classification& output, const std::vector<double>& target,
                          TaskMode mode);

struct BatchResult {
  double loss = 0.0;  // mean over the batch
  std::size_t correct = 0;
};

// Mean-loss gradient over the batch, accumulated into grads (which is
// zeroed first). Example i draws dropout from derive(dropout_seed, i).
BatchResult compute_gradients(const ModelParameters& params, const std::vector<const EncodedPair*>& batch,
                              bool train, std::uint64_t dropout_seed, Gradients& grads);

// Mean loss of a batch without gradients.
double batch_loss(const ModelParameters& params, const std::vector<const EncodedPair*>& batch);

// base_lr * (1 - t/T), floored at 0.
double lr_schedule(double base_lr, std::size_t step, std::size_t total_steps);

// Adam with beta1 0.9, beta2 0.999, eps 1e-8 and bias correction.
class AdamState {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit AdamState(std::size_t size) : m_(size, 0.0), v_(size, 0.0) {}

  // t is the 1-based step number.
  void step(std::vector<double>& params, const std::vector<double>& grads, std::size_t t, double lr);

 private:
  std::vector<double> m_;
  std::vector<double> v_;
};

struct TrainConfig {
  std::size_t batch_size = 16;
  double base_lr = 5e-5;
  std::size_t epochs = 2;
  std::uint64_t seed = 13;
  bool oversample = false;
  double train_fraction = 1.0;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // from the dropout-on training passes
  bool has_validation = false;
  double validation_accuracy = 0.0;
  double validation_macro_f1 = 0.0;
};

struct TrainHistory {
  std::vector<double> step_loss;
  std::vector<double> lr_trace;
  std::vector<EpochMetrics> epochs;
  std::size_t examples_seen = 0;  // after oversampling
};

// Exact-match correctness of a prediction against its target.
bool prediction_correct(const Vector& probabilities, const std::vector<double>& target, TaskMode mode);

// Seeded mini-batch training with Adam on a linear decay over
// T = epochs * ceil(N / batch_size) steps. Oversampling, when enabled,
// is applied to the examples before the first epoch.
TrainHistory train(ModelParameters& params, const std::vector<EncodedPair>& examples,
                   const TrainConfig& config, const std::vector<EncodedPair>* validation = nullptr);

// History file: `step<TAB>lr<TAB>loss` lines, then a `# final` footer of
// `key<TAB>value` lines.
std::string format_history(const TrainHistory& history, const std::map<std::string, std::string>& footer);

}  // namespace medqc
