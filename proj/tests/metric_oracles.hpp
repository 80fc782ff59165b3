#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "medqc/eval.hpp"

namespace testutil {

inline bool close(double a, double b) { return std::fabs(a - b) <= 1e-12; }

// Direct-count metrics for one class.
struct CountedClass {
  double precision, recall, f1;
  std::size_t support, predicted;
};

inline CountedClass count_class(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& gold,
                                std::size_t k) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (pred[i] == k && gold[i] == k) ++tp;
    if (pred[i] == k && gold[i] != k) ++fp;
    if (pred[i] != k && gold[i] == k) ++fn;
  }
  CountedClass c{};
  c.support = tp + fn;
  c.predicted = tp + fp;
  c.precision = tp + fp ? double(tp) / double(tp + fp) : 0.0;
  c.recall = tp + fn ? double(tp) / double(tp + fn) : 0.0;
  c.f1 = tp ? 2.0 * double(tp) / double(2 * tp + fp + fn) : 0.0;
  return c;
}

inline bool single_label_matches(const medqc::SingleLabelReport& r, const std::vector<std::size_t>& pred,
                                 const std::vector<std::size_t>& gold, std::size_t labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += pred[i] == gold[i];
  if (r.total != gold.size() || !close(r.accuracy, double(hits) / double(gold.size()))) return false;
  double f1_sum = 0.0;
  std::size_t trace = 0;
  for (std::size_t k = 0; k < labels; ++k) {
    const auto c = count_class(pred, gold, k);
    const auto& m = r.per_class[k];
    if (m.support != c.support || m.predicted != c.predicted) return false;
    if (!close(m.precision, c.precision) || !close(m.recall, c.recall) || !close(m.f1, c.f1)) return false;
    if (m.defined != (c.support + c.predicted > 0)) return false;
    f1_sum += c.f1;
    for (std::size_t j = 0; j < labels; ++j) {
      std::size_t n = 0;
      for (std::size_t i = 0; i < gold.size(); ++i) n += gold[i] == k && pred[i] == j;
      if (r.confusion[k][j] != n) return false;
    }
    trace += r.confusion[k][k];
  }
  if (!close(r.accuracy, double(trace) / double(r.total))) return false;
  return close(r.macro_f1, f1_sum / double(labels));
}

struct ExhaustiveResult {
  std::size_t checked = 0;
  std::size_t mismatches = 0;
};

// Every (gold, pred) pair of lengths 1..max_len over `labels` classes.
inline ExhaustiveResult exhaustive_single_label(std::size_t max_len, std::size_t labels) {
  ExhaustiveResult out;
  for (std::size_t n = 1; n <= max_len; ++n) {
    std::vector<std::size_t> digits(2 * n, 0);
    std::vector<std::size_t> gold(n), pred(n);
    while (true) {
      for (std::size_t i = 0; i < n; ++i) {
        gold[i] = digits[i];
        pred[i] = digits[n + i];
      }
      ++out.checked;
      if (!single_label_matches(medqc::single_label_report(pred, gold, labels), pred, gold, labels)) {
        ++out.mismatches;
      }
      std::size_t d = 0;
      while (d < digits.size() && ++digits[d] == labels) digits[d++] = 0;
      if (d == digits.size()) break;
    }
  }
  return out;
}

inline bool multi_label_matches(const medqc::MultiLabelReport& r, const std::vector<std::vector<double>>& pred,
                                const std::vector<std::vector<double>>& gold) {
  const std::size_t labels = gold.front().size();
  double acc_sum = 0.0, f1_sum = 0.0;
  for (std::size_t k = 0; k < labels; ++k) {
    std::size_t tp = 0, fp = 0, fn = 0, same = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const bool g = gold[i][k] == 1.0;
      const bool p = pred[i][k] >= 0.5;
      tp += g && p;
      fp += !g && p;
      fn += g && !p;
      same += g == p;
    }
    const double acc = double(same) / double(gold.size());
    const double f1 = tp ? 2.0 * double(tp) / double(2 * tp + fp + fn) : 0.0;
    const auto& m = r.per_label[k];
    if (!close(m.accuracy, acc) || !close(m.f1, f1) || m.positives != tp + fn) return false;
    acc_sum += acc;
    f1_sum += f1;
  }
  return close(r.all_accuracy, acc_sum / double(labels)) && close(r.all_f1, f1_sum / double(labels));
}

// Random multi-hot instances; predictions are probabilities in [0, 1).
inline ExhaustiveResult random_multi_label(std::size_t instances, std::uint64_t seed) {
  ExhaustiveResult out;
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t rows = 1 + rng() % 40, labels = 1 + rng() % 6;
    std::vector<std::vector<double>> gold(rows, std::vector<double>(labels)), pred = gold;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t k = 0; k < labels; ++k) {
        gold[i][k] = rng() % 3 == 0 ? 1.0 : 0.0;
        pred[i][k] = rng() % 4 == 0 ? 0.5 : u(rng);
      }
    }
    ++out.checked;
    if (!multi_label_matches(medqc::multi_label_report(pred, gold), pred, gold)) ++out.mismatches;
  }
  return out;
}

// Two-sided exact binomial(n, 1/2) p-value by enumerating all 2^n outcomes.
inline double enumerated_binomial_p(std::size_t b, std::size_t c) {
  const std::size_t n = b + c;
  std::vector<double> mass(n + 1, 0.0);
  for (std::uint64_t outcome = 0; outcome < (std::uint64_t{1} << n); ++outcome) {
    mass[static_cast<std::size_t>(__builtin_popcountll(outcome))] += std::ldexp(1.0, -static_cast<int>(n));
  }
  double p = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    if (mass[k] <= mass[b] * (1.0 + 1e-12)) p += mass[k];
  }
  return std::min(1.0, p);
}

}  // namespace testutil
