#pragma once

// Multi-label evaluation: per-class P/R/F1 with N/A, exact and partial match
// ratios, Hamming loss, the multi-label subset and label-pair analysis.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dysfluency/labels.hpp"
#include "dysfluency/numerics.hpp"

namespace dysfluency {

struct EvalPair {
  std::string clip_id;
  LabelVector reference;
  LabelVector prediction;
};

struct ClassCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct PerClassResult {
  std::vector<ClassCounts> counts;
  std::vector<std::optional<ClassScore>> scores;  // nullopt = N/A
};

PerClassResult per_class_prf(std::span<const EvalPair> pairs);
// Mean F1 over classes that are not N/A; 0 when every class is N/A.
double macro_f1(const PerClassResult& result);

double emr(std::span<const EvalPair> pairs);

enum class PmrDenominator {
  kPositiveReferences,  // clips with at least one positive reference label
  kAllClips,
};
std::optional<double> pmr(std::span<const EvalPair> pairs,
                          PmrDenominator denominator = PmrDenominator::kPositiveReferences);

double hamming_loss(std::span<const EvalPair> pairs);

// Which classes count as dysfluency-relevant for subsetting and pair
// selection: everything except No-Df, optionally also excluding Mod.
std::vector<bool> relevance_mask(const ClassVocabulary& vocab, bool include_mod = true);

std::vector<EvalPair> multi_subset(std::span<const EvalPair> pairs, const std::vector<bool>& relevant);

struct PairAnalysisRow {
  std::size_t label_1 = 0;  // class indices, label_1 < label_2
  std::size_t label_2 = 0;
  std::size_t count = 0;
  double emr = 0.0;
  double pmr = 0.0;
  double recall_l1 = 0.0;
  double recall_l2 = 0.0;
};

// Rows ordered by count (descending), then by class indices.
std::vector<PairAnalysisRow> pair_analysis(std::span<const EvalPair> pairs, const std::vector<bool>& relevant,
                                           std::size_t min_count = 50);

struct SubsetMetrics {
  std::size_t clips = 0;
  double emr = 0.0;
  std::optional<double> pmr;
  double hamming_loss = 0.0;
};

struct MetricsReport {
  ClassVocabulary vocabulary;
  PerClassResult per_class;
  double macro_f1 = 0.0;
  SubsetMetrics full;
  SubsetMetrics multi;
  std::vector<PairAnalysisRow> pairs;
};

SubsetMetrics subset_metrics(std::span<const EvalPair> pairs);

struct ReportOptions {
  std::size_t min_pair_count = 50;
  bool include_mod_as_relevant = true;
  PmrDenominator pmr_denominator = PmrDenominator::kPositiveReferences;
};

MetricsReport evaluate(std::span<const EvalPair> pairs, const ClassVocabulary& vocab, const ReportOptions& opts = {});

// Machine-readable report at full precision.
std::string report_to_json(const MetricsReport& report);
// Human summary with ratios rounded to two decimals.
std::string report_to_text(const MetricsReport& report);

// Predictions CSV: clip_id, one probability column per class, then one 0/1
// column per class, both in vocabulary order.
struct PredictionRow {
  std::string clip_id;
  std::vector<double> probabilities;
  LabelVector prediction;
};

void write_predictions(const std::filesystem::path& path, const ClassVocabulary& vocab,
                       std::span<const PredictionRow> rows);
std::vector<PredictionRow> read_predictions(const std::filesystem::path& path, const ClassVocabulary& vocab);

}  // namespace dysfluency
