#pragma once

// Per-label and support-weighted precision / recall / F1 with a confusion
// matrix.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "plcbinx/common.hpp"

namespace plcbinx {

struct LabelRow {
  std::string label;
  std::size_t support = 0;
  double precision = 0, recall = 0, f1 = 0;
};

struct Metrics {
  std::vector<std::string> labels;
  std::vector<LabelRow> per_label;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction]
  std::size_t total = 0;
  double weighted_precision = 0, weighted_recall = 0, weighted_f1 = 0, accuracy = 0;
};

inline double safe_div(double a, double b) { return b == 0 ? 0 : a / b; }

// `labels` fixes the row order; labels seen in the data but not listed are
// appended in sorted order.
inline Metrics metrics(const std::vector<std::string>& predictions, const std::vector<std::string>& truths,
                       std::vector<std::string> labels = {}) {
  if (predictions.size() != truths.size())
    throw Error(ErrorKind::LengthMismatch, std::to_string(predictions.size()) + " predictions vs " +
                                               std::to_string(truths.size()) + " truths");
  std::vector<std::string> extra;
  for (const auto* v : {&predictions, &truths})
    for (const auto& l : *v)
      if (std::find(labels.begin(), labels.end(), l) == labels.end()) extra.push_back(l);
  std::sort(extra.begin(), extra.end());
  extra.erase(std::unique(extra.begin(), extra.end()), extra.end());
  labels.insert(labels.end(), extra.begin(), extra.end());

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index.emplace(labels[i], i);

  Metrics m;
  m.labels = labels;
  m.total = truths.size();
  m.confusion.assign(labels.size(), std::vector<std::size_t>(labels.size(), 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    ++m.confusion[index.at(truths[i])][index.at(predictions[i])];
    correct += truths[i] == predictions[i];
  }
  for (std::size_t l = 0; l < labels.size(); ++l) {
    std::size_t tp = m.confusion[l][l], row = 0, col = 0;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      row += m.confusion[l][k];
      col += m.confusion[k][l];
    }
    LabelRow r{labels[l], row};
    r.precision = safe_div(static_cast<double>(tp), static_cast<double>(col));
    r.recall = safe_div(static_cast<double>(tp), static_cast<double>(row));
    r.f1 = safe_div(2 * r.precision * r.recall, r.precision + r.recall);
    m.per_label.push_back(r);
  }
  double sp = 0, sr = 0, sf = 0;
  for (const auto& r : m.per_label) {
    sp += static_cast<double>(r.support) * r.precision;
    sr += static_cast<double>(r.support) * r.recall;
    sf += static_cast<double>(r.support) * r.f1;
  }
  const double n = static_cast<double>(m.total);
  m.weighted_precision = safe_div(sp, n);
  m.weighted_recall = safe_div(sr, n);
  m.weighted_f1 = safe_div(sf, n);
  m.accuracy = safe_div(static_cast<double>(correct), n);
  return m;
}

inline double weighted_f1(const std::vector<std::string>& predictions, const std::vector<std::string>& truths) {
  return metrics(predictions, truths).weighted_f1;
}

}  // namespace plcbinx
