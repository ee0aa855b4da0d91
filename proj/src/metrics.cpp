#include "dysfluency/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dysfluency/error.hpp"
#include "json.hpp"

namespace dysfluency {

namespace {

void check_widths(std::span<const EvalPair> pairs) {
  if (pairs.empty()) return;
  const std::size_t width = pairs.front().reference.size();
  for (const auto& p : pairs) {
    if (p.reference.size() != width || p.prediction.size() != width) {
      throw ShapeError("evaluation pair '" + p.clip_id + "' has mismatched label widths");
    }
  }
}

void require_nonempty(std::span<const EvalPair> pairs, const char* what) {
  if (pairs.empty()) throw InvalidArgument(std::string(what) + ": no evaluation pairs");
}

bool any_overlap(const LabelVector& a, const LabelVector& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] && b[i]) return true;
  }
  return false;
}

std::size_t relevant_count(const LabelVector& v, const std::vector<bool>& relevant) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.size(); ++i) n += (v[i] && relevant[i]) ? 1 : 0;
  return n;
}

}  // namespace

PerClassResult per_class_prf(std::span<const EvalPair> pairs) {
  require_nonempty(pairs, "per_class_prf");
  check_widths(pairs);
  const std::size_t width = pairs.front().reference.size();
  PerClassResult out;
  out.counts.resize(width);
  for (const auto& p : pairs) {
    for (std::size_t c = 0; c < width; ++c) {
      const bool ref = p.reference[c];
      const bool pred = p.prediction[c];
      out.counts[c].tp += (ref && pred) ? 1 : 0;
      out.counts[c].fp += (!ref && pred) ? 1 : 0;
      out.counts[c].fn += (ref && !pred) ? 1 : 0;
    }
  }
  out.scores.resize(width);
  for (std::size_t c = 0; c < width; ++c) {
    const auto& k = out.counts[c];
    if (k.tp + k.fn == 0 && k.tp + k.fp == 0) continue;
    ClassScore s;
    s.precision = (k.tp + k.fp) ? static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fp) : 0.0;
    s.recall = (k.tp + k.fn) ? static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fn) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    out.scores[c] = s;
  }
  return out;
}

double macro_f1(const PerClassResult& result) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : result.scores) {
    if (s) {
      sum += s->f1;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double emr(std::span<const EvalPair> pairs) {
  require_nonempty(pairs, "emr");
  check_widths(pairs);
  const auto exact = std::count_if(pairs.begin(), pairs.end(),
                                   [](const EvalPair& p) { return p.reference == p.prediction; });
  return static_cast<double>(exact) / static_cast<double>(pairs.size());
}

std::optional<double> pmr(std::span<const EvalPair> pairs, PmrDenominator denominator) {
  check_widths(pairs);
  std::size_t eligible = 0;
  std::size_t matched = 0;
  for (const auto& p : pairs) {
    if (denominator == PmrDenominator::kPositiveReferences && p.reference.count() == 0) continue;
    ++eligible;
    matched += any_overlap(p.reference, p.prediction) ? 1 : 0;
  }
  if (eligible == 0) return std::nullopt;
  return static_cast<double>(matched) / static_cast<double>(eligible);
}

double hamming_loss(std::span<const EvalPair> pairs) {
  require_nonempty(pairs, "hamming_loss");
  check_widths(pairs);
  const std::size_t width = pairs.front().reference.size();
  if (width == 0) throw InvalidArgument("hamming_loss: zero-width labels");
  std::size_t wrong = 0;
  for (const auto& p : pairs) {
    for (std::size_t c = 0; c < width; ++c) wrong += (p.reference[c] != p.prediction[c]) ? 1 : 0;
  }
  return static_cast<double>(wrong) / static_cast<double>(pairs.size() * width);
}

std::vector<bool> relevance_mask(const ClassVocabulary& vocab, bool include_mod) {
  std::vector<bool> mask(vocab.size(), true);
  if (auto i = vocab.no_dysfluency_index()) mask[*i] = false;
  if (!include_mod) {
    if (auto i = vocab.modified_index()) mask[*i] = false;
  }
  return mask;
}

std::vector<EvalPair> multi_subset(std::span<const EvalPair> pairs, const std::vector<bool>& relevant) {
  check_widths(pairs);
  std::vector<EvalPair> out;
  for (const auto& p : pairs) {
    if (p.reference.size() != relevant.size()) throw ShapeError("multi_subset: relevance mask width mismatch");
    if (relevant_count(p.reference, relevant) >= 2) out.push_back(p);
  }
  return out;
}

std::vector<PairAnalysisRow> pair_analysis(std::span<const EvalPair> pairs, const std::vector<bool>& relevant,
                                           std::size_t min_count) {
  check_widths(pairs);
  struct Acc {
    std::size_t count = 0, exact = 0, partial = 0, hit1 = 0, hit2 = 0;
  };
  std::map<std::pair<std::size_t, std::size_t>, Acc> acc;
  for (const auto& p : pairs) {
    if (p.reference.size() != relevant.size()) throw ShapeError("pair_analysis: relevance mask width mismatch");
    if (relevant_count(p.reference, relevant) != 2) continue;
    std::size_t l1 = 0, l2 = 0;
    bool first = true;
    for (std::size_t c = 0; c < relevant.size(); ++c) {
      if (!(relevant[c] && p.reference[c])) continue;
      if (first) {
        l1 = c;
        first = false;
      } else {
        l2 = c;
      }
    }
    Acc& a = acc[{l1, l2}];
    ++a.count;
    a.exact += (p.reference == p.prediction) ? 1 : 0;
    a.partial += any_overlap(p.reference, p.prediction) ? 1 : 0;
    a.hit1 += p.prediction[l1] ? 1 : 0;
    a.hit2 += p.prediction[l2] ? 1 : 0;
  }
  std::vector<PairAnalysisRow> rows;
  for (const auto& [key, a] : acc) {
    if (a.count < min_count || a.count == 0) continue;
    const double n = static_cast<double>(a.count);
    rows.push_back({key.first, key.second, a.count, static_cast<double>(a.exact) / n,
                    static_cast<double>(a.partial) / n, static_cast<double>(a.hit1) / n,
                    static_cast<double>(a.hit2) / n});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const PairAnalysisRow& x, const PairAnalysisRow& y) { return x.count > y.count; });
  return rows;
}

SubsetMetrics subset_metrics(std::span<const EvalPair> pairs) {
  SubsetMetrics m;
  m.clips = pairs.size();
  if (pairs.empty()) return m;
  m.emr = emr(pairs);
  m.pmr = pmr(pairs);
  m.hamming_loss = hamming_loss(pairs);
  return m;
}

MetricsReport evaluate(std::span<const EvalPair> pairs, const ClassVocabulary& vocab, const ReportOptions& opts) {
  require_nonempty(pairs, "evaluate");
  if (pairs.front().reference.size() != vocab.size()) throw ShapeError("evaluate: label width differs from vocabulary");
  MetricsReport r;
  r.vocabulary = vocab;
  r.per_class = per_class_prf(pairs);
  r.macro_f1 = macro_f1(r.per_class);
  r.full = subset_metrics(pairs);
  r.full.pmr = pmr(pairs, opts.pmr_denominator);
  const auto relevant = relevance_mask(vocab, opts.include_mod_as_relevant);
  const auto multi = multi_subset(pairs, relevant);
  r.multi = subset_metrics(multi);
  if (!multi.empty()) r.multi.pmr = pmr(multi, opts.pmr_denominator);
  r.pairs = pair_analysis(pairs, relevant, opts.min_pair_count);
  return r;
}

namespace {

nlohmann::ordered_json subset_json(const SubsetMetrics& m) {
  nlohmann::ordered_json j;
  j["clips"] = m.clips;
  if (m.clips == 0) {
    j["emr"] = "N/A";
    j["pmr"] = "N/A";
    j["hamming_loss"] = "N/A";
    return j;
  }
  j["emr"] = m.emr;
  if (m.pmr) {
    j["pmr"] = *m.pmr;
  } else {
    j["pmr"] = "N/A";
  }
  j["hamming_loss"] = m.hamming_loss;
  return j;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string report_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json per_class;
  for (std::size_t c = 0; c < report.vocabulary.size(); ++c) {
    const auto& name = report.vocabulary.names()[c];
    const auto& s = report.per_class.scores[c];
    if (!s) {
      per_class[name] = "N/A";
      continue;
    }
    per_class[name] = {{"precision", s->precision}, {"recall", s->recall}, {"f1", s->f1}};
  }
  j["per_class"] = per_class;
  j["macro_f1"] = report.macro_f1;
  const auto full = subset_json(report.full);
  j["clips"] = full["clips"];
  j["emr"] = full["emr"];
  j["pmr"] = full["pmr"];
  j["hamming_loss"] = full["hamming_loss"];
  j["multi"] = subset_json(report.multi);
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : report.pairs) {
    rows.push_back({{"label_1", report.vocabulary.names()[row.label_1]},
                    {"label_2", report.vocabulary.names()[row.label_2]},
                    {"count", row.count},
                    {"emr", row.emr},
                    {"pmr", row.pmr},
                    {"recall_l1", row.recall_l1},
                    {"recall_l2", row.recall_l2}});
  }
  j["pair_analysis"] = rows;
  return j.dump(2) + "\n";
}

std::string report_to_text(const MetricsReport& report) {
  std::ostringstream out;
  out << "class    P     R     F1\n";
  for (std::size_t c = 0; c < report.vocabulary.size(); ++c) {
    char name[16];
    std::snprintf(name, sizeof(name), "%-8s", report.vocabulary.names()[c].c_str());
    out << name;
    const auto& s = report.per_class.scores[c];
    if (s) {
      out << fixed2(s->precision) << "  " << fixed2(s->recall) << "  " << fixed2(s->f1) << '\n';
    } else {
      out << "N/A\n";
    }
  }
  out << "macro-F1 " << fixed2(report.macro_f1) << '\n';
  auto line = [&](const char* label, const SubsetMetrics& m) {
    out << label << " (" << m.clips << " clips): ";
    if (m.clips == 0) {
      out << "N/A\n";
      return;
    }
    out << "EMR " << fixed2(m.emr) << "  PMR " << (m.pmr ? fixed2(*m.pmr) : std::string("N/A")) << "  HL "
        << fixed2(m.hamming_loss) << '\n';
  };
  line("test", report.full);
  line("test-multi", report.multi);
  for (const auto& row : report.pairs) {
    out << report.vocabulary.names()[row.label_1] << " & " << report.vocabulary.names()[row.label_2] << " ("
        << row.count << "): EMR " << fixed2(row.emr) << "  PMR " << fixed2(row.pmr) << "  Re L1 "
        << fixed2(row.recall_l1) << "  Re L2 " << fixed2(row.recall_l2) << '\n';
  }
  return out.str();
}

namespace {

std::string probability_column(const std::string& cls) { return "p_" + cls; }
std::string prediction_column(const std::string& cls) { return "y_" + cls; }

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

void write_predictions(const std::filesystem::path& path, const ClassVocabulary& vocab,
                       std::span<const PredictionRow> rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write predictions: " + path.string());
  out << "clip_id";
  for (const auto& n : vocab.names()) out << ',' << probability_column(n);
  for (const auto& n : vocab.names()) out << ',' << prediction_column(n);
  out << '\n';
  char buf[40];
  for (const auto& row : rows) {
    if (row.probabilities.size() != vocab.size() || row.prediction.size() != vocab.size()) {
      throw ShapeError("write_predictions: row '" + row.clip_id + "' width differs from vocabulary");
    }
    out << row.clip_id;
    for (double p : row.probabilities) {
      std::snprintf(buf, sizeof(buf), "%.17g", p);
      out << ',' << buf;
    }
    for (std::size_t c = 0; c < vocab.size(); ++c) out << ',' << (row.prediction[c] ? '1' : '0');
    out << '\n';
  }
}

std::vector<PredictionRow> read_predictions(const std::filesystem::path& path, const ClassVocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open predictions: " + path.string());
  std::string line;
  std::vector<std::string> expected{"clip_id"};
  for (const auto& n : vocab.names()) expected.push_back(probability_column(n));
  for (const auto& n : vocab.names()) expected.push_back(prediction_column(n));
  if (!std::getline(in, line)) throw FormatError("predictions: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (split_cells(line) != expected) throw FormatError("predictions: header does not match the vocabulary");
  std::vector<PredictionRow> rows;
  std::size_t row_no = 1;
  const std::size_t c = vocab.size();
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_cells(line);
    if (cells.size() != 1 + 2 * c) throw FormatError("predictions: row " + std::to_string(row_no) + " has wrong width");
    PredictionRow r;
    r.clip_id = cells[0];
    for (std::size_t i = 0; i < c; ++i) {
      const auto& s = cells[1 + i];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size() || !(v >= 0.0 && v <= 1.0)) {
        throw FormatError("predictions: row " + std::to_string(row_no) + " has a bad probability '" + s + "'");
      }
      r.probabilities.push_back(v);
    }
    r.prediction = LabelVector(c);
    for (std::size_t i = 0; i < c; ++i) {
      const auto& s = cells[1 + c + i];
      if (s != "0" && s != "1") {
        throw FormatError("predictions: row " + std::to_string(row_no) + " has a bad prediction cell '" + s + "'");
      }
      r.prediction.set(i, s == "1");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace dysfluency
