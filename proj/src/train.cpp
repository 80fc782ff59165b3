#include "medqc/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "medqc/data.hpp"
#include "medqc/error.hpp"
#include "medqc/eval.hpp"
#include "medqc/io.hpp"

namespace medqc {

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::size_t argmax(const Vector& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<std::size_t>(i);
}

std::vector<std::size_t> target_labels(const std::vector<double>& target) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k] >= 0.5) out.push_back(k);
  }
  return out;
}

}  // namespace

double cross_entropy(const Vector& probabilities, std::size_t gold) {
  if (gold >= static_cast<std::size_t>(probabilities.size())) {
    throw InputError("gold label " + std::to_string(gold) + " out of range");
  }
  return -std::log(std::max(probabilities(static_cast<Eigen::Index>(gold)), kLossEpsilon));
}

double binary_cross_entropy(const Vector& probabilities, const std::vector<double>& gold) {
  if (gold.size() != static_cast<std::size_t>(probabilities.size())) {
    throw InputError("multi-hot target width does not match the label count");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    const double y = gold[k];
    if (y != 0.0 && y != 1.0) throw InputError("multi-hot target entries must be 0 or 1");
    const double p = std::clamp(probabilities(static_cast<Eigen::Index>(k)), kLossEpsilon, 1.0 - kLossEpsilon);
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return total / static_cast<double>(gold.size());
}

LossAndGrad loss_and_grad(const Classification& output, const std::vector<double>& target, TaskMode mode) {
  LossAndGrad r;
  const Vector& p = output.probabilities;
  const auto n = p.size();
  if (static_cast<std::size_t>(n) != target.size()) throw InputError("target width does not match the label count");
  if (mode == TaskMode::kSingleLabel) {
    const auto gold = target_labels(target);
    if (gold.size() != 1) throw InputError("single-label target must be one-hot");
    r.loss = cross_entropy(p, gold[0]);
    const auto g = static_cast<Eigen::Index>(gold[0]);
    if (p(g) < kLossEpsilon) {
      r.grad_logits = Vector::Zero(n);  // clamped region is flat
    } else {
      r.grad_logits = p;
      r.grad_logits(g) -= 1.0;
    }
  } else {
    r.loss = binary_cross_entropy(p, target);
    r.grad_logits.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const bool clamped = p(k) < kLossEpsilon || p(k) > 1.0 - kLossEpsilon;
      r.grad_logits(k) = clamped ? 0.0 : (p(k) - target[static_cast<std::size_t>(k)]) / static_cast<double>(n);
    }
  }
  return r;
}

bool prediction_correct(const Vector& probabilities, const std::vector<double>& target, TaskMode mode) {
  if (mode == TaskMode::kSingleLabel) {
    const auto gold = target_labels(target);
    return gold.size() == 1 && argmax(probabilities) == gold[0];
  }
  for (std::size_t k = 0; k < target.size(); ++k) {
    if ((probabilities(static_cast<Eigen::Index>(k)) >= 0.5) != (target[k] >= 0.5)) return false;
  }
  return true;
}

BatchResult compute_gradients(const ModelParameters& params, const std::vector<const EncodedPair*>& batch,
                              bool train, std::uint64_t dropout_seed, Gradients& grads) {
  if (batch.empty()) throw InputError("empty batch");
  grads.set_zero();
  BatchResult r;
  const double scale = 1.0 / static_cast<double>(batch.size());
  ForwardCache cache;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const EncodedPair& ex = *batch[i];
    const auto fwd = forward(params, ex, train, mix_seed(dropout_seed, i), &cache);
    const auto lg = loss_and_grad(fwd.output, ex.labels, params.config().task_mode);
    if (!std::isfinite(lg.loss)) throw NumericError("non-finite loss");
    r.loss += lg.loss * scale;
    if (prediction_correct(fwd.output.probabilities, ex.labels, params.config().task_mode)) ++r.correct;
    backward(params, ex, cache, lg.grad_logits, scale, grads);
  }
  for (std::size_t t = 0; t < grads.tensor_count(); ++t) {
    if (!grads.tensor(t).allFinite()) throw NumericError("non-finite gradient in tensor '" + grads.spec(t).name + "'");
  }
  return r;
}

double batch_loss(const ModelParameters& params, const std::vector<const EncodedPair*>& batch) {
  if (batch.empty()) throw InputError("empty batch");
  double total = 0.0;
  for (const auto* ex : batch) {
    const auto fwd = forward(params, *ex, false);
    total += loss_and_grad(fwd.output, ex->labels, params.config().task_mode).loss;
  }
  return total / static_cast<double>(batch.size());
}

double lr_schedule(double base_lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) throw InputError("total_steps must be >= 1");
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return std::max(0.0, base_lr * (1.0 - frac));
}

void AdamState::step(std::vector<double>& params, const std::vector<double>& grads, std::size_t t, double lr) {
  if (t < 1) throw InputError("Adam step numbers start at 1");
  if (params.size() != m_.size() || grads.size() != m_.size()) throw InputError("Adam state size mismatch");
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g * g;
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + kEps);
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  if (!(base_lr > 0.0)) throw InputError("base_lr must be positive");
  if (epochs < 1) throw InputError("epochs must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw InputError("train_fraction must be in (0,1]");
}

TrainHistory train(ModelParameters& params, const std::vector<EncodedPair>& examples, const TrainConfig& config,
                   const std::vector<EncodedPair>* validation) {
  config.validate();
  if (examples.empty()) throw InputError("no training examples");
  const auto mode = params.config().task_mode;
  const std::size_t labels = params.config().num_labels;

  std::vector<std::size_t> pool(examples.size());
  std::iota(pool.begin(), pool.end(), 0);
  if (config.oversample) {
    std::vector<std::vector<std::size_t>> sets;
    sets.reserve(examples.size());
    for (const auto& ex : examples) sets.push_back(target_labels(ex.labels));
    pool = oversample_indices(sets, labels, mix_seed(config.seed, 101));
  }

  const std::size_t per_epoch = (pool.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = per_epoch * config.epochs;
  TrainHistory history;
  history.examples_seen = pool.size();
  history.step_loss.reserve(total_steps);
  history.lr_trace.reserve(total_steps);

  Gradients grads = params.store().zeros_like();
  AdamState adam(params.parameter_count());
  std::mt19937_64 shuffle_rng(mix_seed(config.seed, 202));
  std::size_t step = 0;
  std::vector<const EncodedPair*> batch;
  batch.reserve(config.batch_size);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(pool.begin(), pool.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t epoch_correct = 0;
    for (std::size_t start = 0; start < pool.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t j = start; j < std::min(pool.size(), start + config.batch_size); ++j) {
        batch.push_back(&examples[pool[j]]);
      }
      const double lr = lr_schedule(config.base_lr, step, total_steps);
      const auto r = compute_gradients(params, batch, true, mix_seed(config.seed, 1000 + step), grads);
      ++step;
      adam.step(params.store().values(), grads.values(), step, lr);
      history.step_loss.push_back(r.loss);
      history.lr_trace.push_back(lr);
      epoch_loss += r.loss * static_cast<double>(batch.size());
      epoch_correct += r.correct;
    }
    EpochMetrics m;
    m.epoch = epoch + 1;
    m.train_loss = epoch_loss / static_cast<double>(pool.size());
    m.train_accuracy = static_cast<double>(epoch_correct) / static_cast<double>(pool.size());
    if (validation && !validation->empty()) {
      m.has_validation = true;
      if (mode == TaskMode::kSingleLabel) {
        std::vector<std::size_t> preds, gold;
        for (const auto& ex : *validation) {
          preds.push_back(argmax(forward(params, ex, false).output.probabilities));
          gold.push_back(target_labels(ex.labels).at(0));
        }
        const auto rep = single_label_report(preds, gold, labels);
        m.validation_accuracy = rep.accuracy;
        m.validation_macro_f1 = rep.macro_f1;
      } else {
        std::vector<std::vector<double>> preds, gold;
        for (const auto& ex : *validation) {
          const Vector p = forward(params, ex, false).output.probabilities;
          preds.emplace_back(p.data(), p.data() + p.size());
          gold.push_back(ex.labels);
        }
        const auto rep = multi_label_report(preds, gold);
        m.validation_accuracy = rep.all_accuracy;
        m.validation_macro_f1 = rep.all_f1;
      }
    }
    history.epochs.push_back(m);
  }
  return history;
}

std::string format_history(const TrainHistory& history, const std::map<std::string, std::string>& footer) {
  std::ostringstream out;
  out << "# step\tlr\tloss\n";
  for (std::size_t i = 0; i < history.step_loss.size(); ++i) {
    out << (i + 1) << '\t' << io::format_double(history.lr_trace[i]) << '\t'
        << io::format_double(history.step_loss[i]) << '\n';
  }
  out << "# epochs\n";
  for (const auto& e : history.epochs) {
    out << "# epoch\t" << e.epoch << "\ttrain_loss\t" << io::format_double(e.train_loss) << "\ttrain_accuracy\t"
        << io::format_double(e.train_accuracy);
    if (e.has_validation) {
      out << "\tvalidation_accuracy\t" << io::format_double(e.validation_accuracy) << "\tvalidation_macro_f1\t"
          << io::format_double(e.validation_macro_f1);
    }
    out << '\n';
  }
  out << "# final\n";
  for (const auto& [k, v] : footer) out << k << '\t' << v << '\n';
  return out.str();
}

}  // namespace medqc
