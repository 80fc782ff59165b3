#include "medqc/eval.hpp"

#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "medqc/error.hpp"
#include "medqc/io.hpp"
#include "medqc/utf8.hpp"

namespace medqc {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1_score(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

std::string fixed(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

}  // namespace

SingleLabelReport single_label_report(const std::vector<std::size_t>& preds,
                                      const std::vector<std::size_t>& gold, std::size_t num_labels) {
  if (preds.size() != gold.size()) throw InputError("prediction and gold lengths differ");
  if (preds.empty()) throw InputError("cannot score an empty prediction set");
  SingleLabelReport r;
  r.total = gold.size();
  r.confusion.assign(num_labels, std::vector<std::size_t>(num_labels, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= num_labels || preds[i] >= num_labels) {
      throw InputError("label index out of range at position " + std::to_string(i));
    }
    ++r.confusion[gold[i]][preds[i]];
    if (gold[i] == preds[i]) ++correct;
  }
  r.accuracy = ratio(correct, r.total);
  r.per_class.resize(num_labels);
  double f1_sum = 0.0;
  for (std::size_t k = 0; k < num_labels; ++k) {
    auto& m = r.per_class[k];
    const std::size_t tp = r.confusion[k][k];
    for (std::size_t j = 0; j < num_labels; ++j) {
      m.support += r.confusion[k][j];
      m.predicted += r.confusion[j][k];
    }
    m.precision = ratio(tp, m.predicted);
    m.recall = ratio(tp, m.support);
    m.f1 = f1_score(m.precision, m.recall);
    m.defined = m.support > 0 || m.predicted > 0;
    f1_sum += m.f1;
  }
  r.macro_f1 = f1_sum / static_cast<double>(num_labels);
  return r;
}

MultiLabelReport multi_label_report(const std::vector<std::vector<double>>& preds,
                                    const std::vector<std::vector<double>>& gold, double threshold) {
  if (preds.size() != gold.size()) throw InputError("prediction and gold row counts differ");
  if (gold.empty()) throw InputError("cannot score an empty prediction set");
  const std::size_t labels = gold.front().size();
  MultiLabelReport r;
  r.total = gold.size();
  std::vector<std::size_t> tp(labels, 0), fp(labels, 0), fn(labels, 0), tn(labels, 0);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != labels || preds[i].size() != labels) {
      throw InputError("multi-hot row " + std::to_string(i) + " has the wrong width");
    }
    for (std::size_t k = 0; k < labels; ++k) {
      const bool g = gold[i][k] >= 0.5;
      const bool p = preds[i][k] >= threshold;
      if (g && p) ++tp[k];
      else if (!g && p) ++fp[k];
      else if (g && !p) ++fn[k];
      else ++tn[k];
    }
  }
  r.per_label.resize(labels);
  for (std::size_t k = 0; k < labels; ++k) {
    auto& m = r.per_label[k];
    m.accuracy = ratio(tp[k] + tn[k], r.total);
    m.precision = ratio(tp[k], tp[k] + fp[k]);
    m.recall = ratio(tp[k], tp[k] + fn[k]);
    m.f1 = f1_score(m.precision, m.recall);
    m.positives = tp[k] + fn[k];
    r.all_accuracy += m.accuracy;
    r.all_f1 += m.f1;
  }
  if (labels > 0) {
    r.all_accuracy /= static_cast<double>(labels);
    r.all_f1 /= static_cast<double>(labels);
  }
  return r;
}

double chi2_sf_1dof(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(x / 2.0));
}

double binomial_two_sided_p(std::size_t b, std::size_t c) {
  const std::size_t n = b + c;
  if (n == 0) return 1.0;
  const std::size_t k = std::min(b, c);
  // P(X <= k) for X ~ Binomial(n, 1/2), summed in log space.
  const double log_half_n = static_cast<double>(n) * std::log(0.5);
  const double lgn = std::lgamma(static_cast<double>(n) + 1.0);
  double tail = 0.0;
  for (std::size_t i = 0; i <= k; ++i) {
    const double log_choose = lgn - std::lgamma(static_cast<double>(i) + 1.0) -
                              std::lgamma(static_cast<double>(n - i) + 1.0);
    tail += std::exp(log_choose + log_half_n);
  }
  return std::min(1.0, 2.0 * tail);
}

McNemarResult mcnemar_from_counts(std::size_t b, std::size_t c) {
  McNemarResult r;
  r.b = b;
  r.c = c;
  const std::size_t n = b + c;
  if (n > 0) {
    const double diff = std::fabs(static_cast<double>(b) - static_cast<double>(c)) - 1.0;
    r.statistic = diff * diff / static_cast<double>(n);
  }
  r.chi2_p = n > 0 ? chi2_sf_1dof(r.statistic) : 1.0;
  r.p_value = r.chi2_p;
  if (n < kExactMcNemarBelow) {
    r.exact_p = binomial_two_sided_p(b, c);
    r.p_value = *r.exact_p;
  }
  return r;
}

McNemarResult mcnemar(const std::vector<bool>& correct_a, const std::vector<bool>& correct_b) {
  if (correct_a.size() != correct_b.size()) throw InputError("McNemar inputs differ in length");
  std::size_t b = 0, c = 0;
  for (std::size_t i = 0; i < correct_a.size(); ++i) {
    if (correct_a[i] && !correct_b[i]) ++b;
    if (!correct_a[i] && correct_b[i]) ++c;
  }
  return mcnemar_from_counts(b, c);
}

template <typename Label>
McNemarResult mcnemar(const std::vector<Label>& preds_a, const std::vector<Label>& preds_b,
                      const std::vector<Label>& gold) {
  if (preds_a.size() != gold.size() || preds_b.size() != gold.size()) {
    throw InputError("McNemar inputs differ in length");
  }
  std::vector<bool> ca(gold.size()), cb(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ca[i] = preds_a[i] == gold[i];
    cb[i] = preds_b[i] == gold[i];
  }
  return mcnemar(ca, cb);
}

template McNemarResult mcnemar(const std::vector<std::size_t>&, const std::vector<std::size_t>&,
                               const std::vector<std::size_t>&);
template McNemarResult mcnemar(const std::vector<std::set<std::string>>&,
                               const std::vector<std::set<std::string>>&,
                               const std::vector<std::set<std::string>>&);

std::string render_confusion_text(const SingleLabelReport& report, const std::vector<std::string>& labels) {
  std::size_t width = 8;
  for (const auto& l : labels) width = std::max(width, l.size() + 2);
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "gold\\pred";
  for (const auto& l : labels) out << std::right << std::setw(static_cast<int>(width)) << l;
  out << std::right << std::setw(10) << "acc" << '\n';
  for (std::size_t g = 0; g < report.confusion.size(); ++g) {
    out << std::left << std::setw(static_cast<int>(width)) << labels.at(g);
    for (std::size_t p = 0; p < report.confusion[g].size(); ++p) {
      out << std::right << std::setw(static_cast<int>(width)) << report.confusion[g][p];
    }
    out << std::right << std::setw(10) << fixed(report.per_class[g].recall) << '\n';
  }
  return out.str();
}

std::string render_confusion_csv(const SingleLabelReport& report, const std::vector<std::string>& labels) {
  std::ostringstream out;
  out << "gold\\pred";
  for (const auto& l : labels) out << ',' << l;
  out << ",accuracy\n";
  for (std::size_t g = 0; g < report.confusion.size(); ++g) {
    out << labels.at(g);
    for (std::size_t count : report.confusion[g]) out << ',' << count;
    out << ',' << io::format_double(report.per_class[g].recall) << '\n';
  }
  return out.str();
}

std::vector<std::vector<std::size_t>> parse_confusion_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty confusion CSV");
  const std::size_t labels = utf8::split(line, ',').size() - 2;
  std::vector<std::vector<std::size_t>> grid;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = utf8::split(line, ',');
    if (fields.size() != labels + 2) throw InputError("confusion CSV row has the wrong width");
    std::vector<std::size_t> row;
    for (std::size_t j = 1; j <= labels; ++j) row.push_back(std::stoul(fields[j]));
    grid.push_back(std::move(row));
  }
  return grid;
}

std::string render_report_text(const SingleLabelReport& r, const std::vector<std::string>& labels) {
  std::ostringstream out;
  out << "examples   " << r.total << '\n';
  out << "accuracy   " << fixed(r.accuracy) << '\n';
  out << "macro-F1   " << fixed(r.macro_f1) << "\n\n";
  out << std::left << std::setw(10) << "class" << std::right << std::setw(10) << "precision"
      << std::setw(10) << "recall" << std::setw(10) << "f1" << std::setw(10) << "support" << '\n';
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const auto& m = r.per_class[k];
    out << std::left << std::setw(10) << labels.at(k) << std::right << std::setw(10) << fixed(m.precision)
        << std::setw(10) << fixed(m.recall) << std::setw(10) << fixed(m.f1) << std::setw(10) << m.support;
    if (!m.defined) out << "  (undefined: never predicted, absent in gold)";
    out << '\n';
  }
  out << '\n' << render_confusion_text(r, labels);
  return out.str();
}

std::string render_report_csv(const SingleLabelReport& r, const std::vector<std::string>& labels) {
  std::ostringstream out;
  out << "label,precision,recall,f1,support,defined\n";
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const auto& m = r.per_class[k];
    out << labels.at(k) << ',' << io::format_double(m.precision) << ',' << io::format_double(m.recall)
        << ',' << io::format_double(m.f1) << ',' << m.support << ',' << (m.defined ? 1 : 0) << '\n';
  }
  out << "ALL,accuracy=" << io::format_double(r.accuracy) << ",macro_f1=" << io::format_double(r.macro_f1)
      << ',' << r.total << ",1\n";
  return out.str();
}

std::string render_report_text(const MultiLabelReport& r, const std::vector<std::string>& labels) {
  std::ostringstream out;
  out << "examples   " << r.total << "\n\n";
  out << std::left << std::setw(10) << "label" << std::right << std::setw(10) << "acc" << std::setw(10)
      << "f1" << std::setw(10) << "positives" << '\n';
  for (std::size_t k = 0; k < r.per_label.size(); ++k) {
    const auto& m = r.per_label[k];
    out << std::left << std::setw(10) << labels.at(k) << std::right << std::setw(10) << fixed(m.accuracy)
        << std::setw(10) << fixed(m.f1) << std::setw(10) << m.positives << '\n';
  }
  out << std::left << std::setw(10) << "ALL" << std::right << std::setw(10) << fixed(r.all_accuracy)
      << std::setw(10) << fixed(r.all_f1) << '\n';
  return out.str();
}

std::string render_report_csv(const MultiLabelReport& r, const std::vector<std::string>& labels) {
  std::ostringstream out;
  out << "label,accuracy,precision,recall,f1,positives\n";
  for (std::size_t k = 0; k < r.per_label.size(); ++k) {
    const auto& m = r.per_label[k];
    out << labels.at(k) << ',' << io::format_double(m.accuracy) << ',' << io::format_double(m.precision)
        << ',' << io::format_double(m.recall) << ',' << io::format_double(m.f1) << ',' << m.positives << '\n';
  }
  out << "ALL," << io::format_double(r.all_accuracy) << ",,," << io::format_double(r.all_f1) << ','
      << r.total << '\n';
  return out.str();
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::istringstream in(io::read_file(path));
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = utf8::split(line, '\t');
    if (fields.size() != 2) throw ParseError(path, line_no, "expected doc_id<TAB>labels");
    std::vector<std::string> labels;
    if (!fields[1].empty()) labels = utf8::split(fields[1], ',');
    out.emplace_back(fields[0], std::move(labels));
  }
  return out;
}

std::string format_predictions(const std::vector<PredictionRecord>& records) {
  std::ostringstream out;
  for (const auto& [id, labels] : records) {
    out << id << '\t';
    for (std::size_t i = 0; i < labels.size(); ++i) out << (i ? "," : "") << labels[i];
    out << '\n';
  }
  return out.str();
}

}  // namespace medqc
