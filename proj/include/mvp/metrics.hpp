// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvp {

namespace detail {

inline void check_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels, const char* what) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument(std::string(what) + ": score and label counts differ");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument(std::string(what) + ": non-finite score");
  }
}

/// Indices sorted by descending score; ties keep index order.
inline std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

struct Counts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

inline Counts count_labels(std::span<const std::uint8_t> labels) {
  Counts c;
  for (auto l : labels) (l ? c.pos : c.neg)++;
  return c;
}

}  // namespace detail

/// Mann-Whitney AUROC with half credit for ties. Throws unless both classes occur.
inline double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  detail::check_inputs(scores, labels, "auroc");
  const auto c = detail::count_labels(labels);
  if (c.pos == 0 || c.neg == 0) throw std::invalid_argument("auroc: undefined unless both classes are present");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Count (positive > negative) pairs plus half the tied pairs, group by group.
  double wins = 0.0;
  std::size_t neg_below = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::size_t gpos = 0, gneg = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] ? gpos : gneg)++;
      ++j;
    }
    wins += static_cast<double>(gpos) * (static_cast<double>(neg_below) + 0.5 * static_cast<double>(gneg));
    neg_below += gneg;
    i = j;
  }
  return wins / (static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

/// Step-wise AP over descending thresholds, tied scores forming one threshold.
inline double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  detail::check_inputs(scores, labels, "average_precision");
  const auto c = detail::count_labels(labels);
  if (c.pos == 0) throw std::invalid_argument("average_precision: undefined without positives");
  const auto idx = detail::descending_order(scores);
  double ap = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i, gpos = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      gpos += labels[idx[j]] ? 1 : 0;
      ++j;
    }
    tp += gpos;
    seen = j;
    if (gpos > 0) {
      ap += (static_cast<double>(gpos) / static_cast<double>(c.pos)) *
            (static_cast<double>(tp) / static_cast<double>(seen));
    }
    i = j;
  }
  return ap;
}

/// Best F1 over thresholds at observed scores, predicting positive when score >= threshold.
inline double max_f1(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  detail::check_inputs(scores, labels, "max_f1");
  const auto c = detail::count_labels(labels);
  if (c.pos == 0) throw std::invalid_argument("max_f1: undefined without positives");
  const auto idx = detail::descending_order(scores);
  double best = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      tp += labels[idx[j]] ? 1 : 0;
      ++j;
    }
    const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(j + c.pos);
    best = std::max(best, f1);
    i = j;
  }
  return best;
}

// ---- evaluation -----------------------------------------------------------------

struct CloudOutcome {
  std::string category;
  double score = 0.5;                  // predicted object score
  int object_label = 0;                // ground truth
  std::vector<double> map;             // predicted per-point scores
  std::vector<std::uint8_t> labels;    // ground-truth per-point labels
  std::vector<std::uint8_t> foreground;  // empty means every point is foreground
};

struct MetricSet {
  double o_auroc = 0.0, o_maxf1 = 0.0, o_ap = 0.0;
  double p_auroc = 0.0, p_maxf1 = 0.0, p_ap = 0.0;
};

struct CategoryReport {
  std::string category;
  MetricSet metrics;
  std::size_t n_objects = 0;
  std::size_t n_points = 0;
};

struct EvalReport {
  std::vector<CategoryReport> categories;  // sorted by name
  MetricSet mean;                          // macro average over categories
  std::size_t n_objects = 0;
  std::size_t n_points = 0;

  std::string to_table() const;
  std::string to_kv() const;
};

/// Per-category object metrics and pooled foreground point metrics, macro-averaged.
inline EvalReport evaluate(const std::vector<CloudOutcome>& results) {
  if (results.empty()) throw std::invalid_argument("evaluate: no results");
  std::map<std::string, std::vector<const CloudOutcome*>> by_cat;
  for (const auto& r : results) by_cat[r.category].push_back(&r);

  EvalReport report;
  for (const auto& [cat, clouds] : by_cat) {
    std::vector<double> oscore, pscore;
    std::vector<std::uint8_t> olabel, plabel;
    for (const auto* c : clouds) {
      if (c->map.size() != c->labels.size()) {
        throw std::invalid_argument("evaluate: map/label length mismatch in category '" + cat + "'");
      }
      if (!c->foreground.empty() && c->foreground.size() != c->labels.size()) {
        throw std::invalid_argument("evaluate: foreground mask length mismatch in category '" + cat + "'");
      }
      oscore.push_back(c->score);
      olabel.push_back(c->object_label ? 1 : 0);
      for (std::size_t i = 0; i < c->map.size(); ++i) {
        if (!c->foreground.empty() && !c->foreground[i]) continue;
        pscore.push_back(c->map[i]);
        plabel.push_back(c->labels[i] ? 1 : 0);
      }
    }
    CategoryReport cr;
    cr.category = cat;
    cr.n_objects = oscore.size();
    cr.n_points = pscore.size();
    try {
      cr.metrics.o_auroc = auroc(oscore, olabel);
      cr.metrics.o_maxf1 = max_f1(oscore, olabel);
      cr.metrics.o_ap = average_precision(oscore, olabel);
      cr.metrics.p_auroc = auroc(pscore, plabel);
      cr.metrics.p_maxf1 = max_f1(pscore, plabel);
      cr.metrics.p_ap = average_precision(pscore, plabel);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("category '" + cat + "': " + e.what());
    }
    report.n_objects += cr.n_objects;
    report.n_points += cr.n_points;
    report.categories.push_back(cr);
  }
  const double k = static_cast<double>(report.categories.size());
  for (const auto& c : report.categories) {
    report.mean.o_auroc += c.metrics.o_auroc / k;
    report.mean.o_maxf1 += c.metrics.o_maxf1 / k;
    report.mean.o_ap += c.metrics.o_ap / k;
    report.mean.p_auroc += c.metrics.p_auroc / k;
    report.mean.p_maxf1 += c.metrics.p_maxf1 / k;
    report.mean.p_ap += c.metrics.p_ap / k;
  }
  return report;
}

inline std::string EvalReport::to_table() const {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %8s %8s %8s %8s %8s %8s %8s %9s\n", "category", "O-R", "O-F", "O-P", "P-R",
                "P-F", "P-P", "objects", "points");
  out += buf;
  auto row = [&](const std::string& name, const MetricSet& m, std::size_t no, std::size_t np) {
    std::snprintf(buf, sizeof buf, "%-14s %8.1f %8.1f %8.1f %8.1f %8.1f %8.1f %8zu %9zu\n", name.c_str(),
                  100 * m.o_auroc, 100 * m.o_maxf1, 100 * m.o_ap, 100 * m.p_auroc, 100 * m.p_maxf1, 100 * m.p_ap, no,
                  np);
    out += buf;
  };
  for (const auto& c : categories) row(c.category, c.metrics, c.n_objects, c.n_points);
  row("Mean", mean, n_objects, n_points);
  return out;
}

inline std::string EvalReport::to_kv() const {
  std::string out;
  char buf[160];
  auto put = [&](const std::string& prefix, const MetricSet& m) {
    const std::pair<const char*, double> items[] = {{"o_auroc", m.o_auroc}, {"o_maxf1", m.o_maxf1},
                                                    {"o_ap", m.o_ap},       {"p_auroc", m.p_auroc},
                                                    {"p_maxf1", m.p_maxf1}, {"p_ap", m.p_ap}};
    for (const auto& [k, v] : items) {
      std::snprintf(buf, sizeof buf, "%s.%s = %.17g\n", prefix.c_str(), k, v);
      out += buf;
    }
  };
  put("mean", mean);
  out += "mean.objects = " + std::to_string(n_objects) + "\n";
  out += "mean.points = " + std::to_string(n_points) + "\n";
  for (const auto& c : categories) {
    put(c.category, c.metrics);
    out += c.category + ".objects = " + std::to_string(c.n_objects) + "\n";
    out += c.category + ".points = " + std::to_string(c.n_points) + "\n";
  }
  return out;
}

}  // namespace mvp
