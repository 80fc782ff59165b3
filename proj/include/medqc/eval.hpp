#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace medqc {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold count
  std::size_t predicted = 0;
  // False when the class is neither predicted nor present in gold; its
  // metrics are reported as 0.
  bool defined = true;
};

struct SingleLabelReport {
  std::size_t total = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][pred]
};

struct LabelMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t positives = 0;
};

struct MultiLabelReport {
  std::size_t total = 0;
  std::vector<LabelMetrics> per_label;
  double all_accuracy = 0.0;  // unweighted mean of per-label accuracy
  double all_f1 = 0.0;        // unweighted mean of per-label F1
};

SingleLabelReport single_label_report(const std::vector<std::size_t>& preds,
                                      const std::vector<std::size_t>& gold, std::size_t num_labels);

// Scores (probabilities or 0/1) are binarized with score >= threshold.
MultiLabelReport multi_label_report(const std::vector<std::vector<double>>& preds,
                                    const std::vector<std::vector<double>>& gold,
                                    double threshold = 0.5);

struct McNemarResult {
  std::size_t b = 0;  // A correct, B wrong
  std::size_t c = 0;  // A wrong, B correct
  double statistic = 0.0;
  double chi2_p = 1.0;
  std::optional<double> exact_p;  // reported when b + c < 25
  double p_value = 1.0;           // exact_p when present, else chi2_p
};

inline constexpr std::size_t kExactMcNemarBelow = 25;

McNemarResult mcnemar(const std::vector<bool>& correct_a, const std::vector<bool>& correct_b);
McNemarResult mcnemar_from_counts(std::size_t b, std::size_t c);

template <typename Label>
McNemarResult mcnemar(const std::vector<Label>& preds_a, const std::vector<Label>& preds_b,
                      const std::vector<Label>& gold);

// Survival function of the chi-square distribution with one degree of freedom.
double chi2_sf_1dof(double x);
// Two-sided exact binomial(b + c, 1/2) p-value, capped at 1.
double binomial_two_sided_p(std::size_t b, std::size_t c);

// Plain-text grid with a class-wise accuracy column.
std::string render_confusion_text(const SingleLabelReport& report, const std::vector<std::string>& labels);
// CSV: header `gold\pred,<labels...>,accuracy`, one row per gold class.
std::string render_confusion_csv(const SingleLabelReport& report, const std::vector<std::string>& labels);
// Reads back the count grid written by render_confusion_csv.
std::vector<std::vector<std::size_t>> parse_confusion_csv(const std::string& csv);

std::string render_report_text(const SingleLabelReport& report, const std::vector<std::string>& labels);
std::string render_report_csv(const SingleLabelReport& report, const std::vector<std::string>& labels);
std::string render_report_text(const MultiLabelReport& report, const std::vector<std::string>& labels);
std::string render_report_csv(const MultiLabelReport& report, const std::vector<std::string>& labels);

// `doc_id<TAB>label[,label...]` records.
using PredictionRecord = std::pair<std::string, std::vector<std::string>>;
std::vector<PredictionRecord> read_predictions(const std::string& path);
std::string format_predictions(const std::vector<PredictionRecord>& records);

}  // namespace medqc
