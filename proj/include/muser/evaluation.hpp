#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "muser/datamodel.hpp"
#include "muser/errors.hpp"
#include "muser/features.hpp"
#include "muser/jsonio.hpp"
#include "muser/model.hpp"
#include "muser/tensor.hpp"

namespace muser {

// Single-label ROC-AUC via the rank formulation; tied scores share their
// average rank, which counts tied pairs as one half. Callers guarantee both
// classes are present.
inline double roc_auc_binary(const std::vector<double>& scores,
                             const std::vector<uint8_t>& labels) {
  size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;  // 1-based
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double rank_sum = 0.0;
  size_t pos = 0;
  for (size_t k = 0; k < n; ++k)
    if (labels[k]) {
      rank_sum += rank[k];
      ++pos;
    }
  size_t neg = n - pos;
  return (rank_sum - static_cast<double>(pos) * (pos + 1) / 2.0) /
         (static_cast<double>(pos) * static_cast<double>(neg));
}

// Average precision: descending score, ties kept in original order; precision
// is summed at each positive rank and averaged over the positives.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<uint8_t>& labels) {
  size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  size_t seen_pos = 0;
  for (size_t k = 0; k < n; ++k) {
    if (labels[order[k]]) {
      ++seen_pos;
      ap += static_cast<double>(seen_pos) / static_cast<double>(k + 1);
    }
  }
  return ap / static_cast<double>(seen_pos);
}

struct MacroAuc {
  double value = 0.0;
  size_t used_labels = 0;
  size_t skipped_labels = 0;  // columns lacking a positive or a negative
};

namespace detail {

template <typename PerColumn>
MacroAuc macro_over_columns(const Tensor& scores, const Tensor& labels, PerColumn fn) {
  require_same_shape(scores, labels, "macro AUC");
  if (scores.rows == 0 || scores.cols == 0) throw EvalError("empty score matrix");
  MacroAuc out;
  double acc = 0.0;
  for (size_t c = 0; c < scores.cols; ++c) {
    std::vector<double> col_scores(scores.rows);
    std::vector<uint8_t> col_labels(scores.rows);
    size_t pos = 0;
    for (size_t r = 0; r < scores.rows; ++r) {
      col_scores[r] = scores.at(r, c);
      double y = labels.at(r, c);
      if (y != 0.0 && y != 1.0) throw EvalError("labels must be binary");
      col_labels[r] = y == 1.0;
      pos += col_labels[r];
    }
    if (pos == 0 || pos == scores.rows) {
      ++out.skipped_labels;
      continue;
    }
    acc += fn(col_scores, col_labels);
    ++out.used_labels;
  }
  if (out.used_labels == 0)
    throw EvalError("no label column has both a positive and a negative example");
  out.value = acc / static_cast<double>(out.used_labels);
  return out;
}

}  // namespace detail

inline MacroAuc roc_auc_macro(const Tensor& scores, const Tensor& labels) {
  return detail::macro_over_columns(scores, labels, roc_auc_binary);
}

inline MacroAuc pr_auc_macro(const Tensor& scores, const Tensor& labels) {
  return detail::macro_over_columns(scores, labels, average_precision);
}

inline double r2(const std::vector<double>& preds, const std::vector<double>& targets) {
  if (preds.size() != targets.size()) throw InputError("r2: length mismatch");
  if (preds.size() < 2) throw EvalError("r2 needs at least two points");
  double mean = 0.0;
  for (double t : targets) mean += t;
  mean /= static_cast<double>(targets.size());
  double sse = 0.0, sst = 0.0;
  for (size_t i = 0; i < targets.size(); ++i) {
    sse += (targets[i] - preds[i]) * (targets[i] - preds[i]);
    sst += (targets[i] - mean) * (targets[i] - mean);
  }
  if (sst == 0.0) throw EvalError("r2 undefined for constant targets");
  return 1.0 - sse / sst;
}

struct DatasetMetrics {
  Dataset dataset = Dataset::jamendo;
  LabelKind kind = LabelKind::categorical;
  size_t n_tracks = 0;
  // categorical
  double pr_auc = 0.0;
  double roc_auc = 0.0;
  size_t used_labels = 0;
  size_t skipped_labels = 0;
  // dimensional
  double r2_valence = 0.0;
  double r2_arousal = 0.0;

  json to_json() const {
    json j = {{"dataset", std::string(to_string(dataset))},
              {"kind", kind == LabelKind::categorical ? "categorical" : "dimensional"},
              {"n_tracks", n_tracks}};
    if (kind == LabelKind::categorical) {
      j["pr_auc_macro"] = pr_auc;
      j["roc_auc_macro"] = roc_auc;
      j["used_labels"] = used_labels;
      j["skipped_labels"] = skipped_labels;
    } else {
      j["r2_valence"] = r2_valence;
      j["r2_arousal"] = r2_arousal;
    }
    return j;
  }
};

struct EvalReport {
  std::string checkpoint_fingerprint;
  std::string split;
  std::vector<DatasetMetrics> datasets;

  json to_json() const {
    json arr = json::array();
    for (const auto& d : datasets) arr.push_back(d.to_json());
    return {{"checkpoint", checkpoint_fingerprint}, {"split", split}, {"datasets", arr}};
  }

  // One row per dataset in the report, blank cells where a metric does not
  // apply to the label kind.
  std::string to_csv() const {
    std::string out = "dataset,split,n_tracks,pr_auc_macro,roc_auc_macro,r2_valence,r2_arousal,"
                      "used_labels,skipped_labels\n";
    auto num = [](double v) {
      char buf[32];
      snprintf(buf, sizeof(buf), "%.6f", v);
      return std::string(buf);
    };
    for (const auto& d : datasets) {
      out += std::string(to_string(d.dataset)) + "," + split + "," + std::to_string(d.n_tracks);
      if (d.kind == LabelKind::categorical)
        out += "," + num(d.pr_auc) + "," + num(d.roc_auc) + ",,," +
               std::to_string(d.used_labels) + "," + std::to_string(d.skipped_labels);
      else
        out += ",,," + num(d.r2_valence) + "," + num(d.r2_arousal) + ",,";
      out += "\n";
    }
    return out;
  }
};

// Deterministic inference over one dataset's split with whole-track mean
// features.
inline DatasetMetrics evaluate_dataset(const Model& model, const DatasetManifest& manifest,
                                       Split split, const FeatureStore& store,
                                       const TagVocabulary* vocabulary) {
  std::vector<const TrackRecord*> records = manifest.split_records(split);
  if (records.empty())
    throw EvalError("no records in requested split for dataset " +
                    std::string(to_string(manifest.dataset)));
  auto missing = store.missing(records);
  if (!missing.empty()) {
    std::string list;
    for (size_t i = 0; i < missing.size(); ++i) list += (i ? ", " : "") + missing[i];
    throw InputError("missing cached features for: " + list);
  }

  DatasetMetrics m;
  m.dataset = manifest.dataset;
  m.kind = label_kind_of(manifest.dataset);
  m.n_tracks = records.size();

  if (m.kind == LabelKind::categorical) {
    if (!vocabulary) throw ConfigError("categorical evaluation requires the tag vocabulary");
    if (!model.branches().classification)
      throw ConfigError("model has no classification branch for a categorical dataset");
    Tensor scores(records.size(), vocabulary->size());
    Tensor labels(records.size(), vocabulary->size());
    for (size_t i = 0; i < records.size(); ++i) {
      ForwardOutput out = model.forward_eval(store.eval_input(records[i]->track_id));
      const std::vector<uint8_t>& hot = records[i]->label.tags;
      if (hot.size() != vocabulary->size())
        throw ValidationError("label vector length does not match the vocabulary");
      for (size_t c = 0; c < hot.size(); ++c) {
        scores.at(i, c) = out.tag_probs[c];
        labels.at(i, c) = hot[c] ? 1.0 : 0.0;
      }
    }
    MacroAuc pr = pr_auc_macro(scores, labels);
    MacroAuc roc = roc_auc_macro(scores, labels);
    m.pr_auc = pr.value;
    m.roc_auc = roc.value;
    m.used_labels = pr.used_labels;
    m.skipped_labels = pr.skipped_labels;
  } else {
    if (!model.branches().regression)
      throw ConfigError("model has no regression branch for a dimensional dataset");
    std::vector<double> pv, pa, tv, ta;
    for (const TrackRecord* r : records) {
      ForwardOutput out = model.forward_eval(store.eval_input(r->track_id));
      pv.push_back(out.va[0]);
      pa.push_back(out.va[1]);
      tv.push_back(r->label.valence);
      ta.push_back(r->label.arousal);
    }
    m.r2_valence = r2(pv, tv);
    m.r2_arousal = r2(pa, ta);
  }
  return m;
}

}  // namespace muser
