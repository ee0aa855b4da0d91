#pragma once

// Brute-force multi-label metrics over label sets, written independently of
// the library (std::set arithmetic instead of bit loops).

#include <algorithm>
#include <iterator>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "dysfluency/metrics.hpp"

namespace oracle {

using LabelSet = std::set<int>;

inline LabelSet to_set(const dysfluency::LabelVector& v) {
  LabelSet s;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i]) s.insert(static_cast<int>(i));
  return s;
}

inline LabelSet intersection(const LabelSet& a, const LabelSet& b) {
  LabelSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  return out;
}

inline LabelSet symmetric_difference(const LabelSet& a, const LabelSet& b) {
  LabelSet out;
  std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  return out;
}

struct Scores {
  bool na = false;
  double p = 0, r = 0, f1 = 0;
};

inline std::vector<Scores> per_class(const std::vector<dysfluency::EvalPair>& pairs, int width) {
  std::vector<Scores> out(static_cast<std::size_t>(width));
  for (int c = 0; c < width; ++c) {
    double ref_pos = 0, pred_pos = 0, both = 0;
    for (const auto& p : pairs) {
      const bool r = to_set(p.reference).count(c) > 0;
      const bool q = to_set(p.prediction).count(c) > 0;
      ref_pos += r;
      pred_pos += q;
      both += r && q;
    }
    Scores& s = out[static_cast<std::size_t>(c)];
    if (ref_pos == 0 && pred_pos == 0) {
      s.na = true;
      continue;
    }
    s.p = pred_pos > 0 ? both / pred_pos : 0.0;
    s.r = ref_pos > 0 ? both / ref_pos : 0.0;
    s.f1 = s.p + s.r > 0 ? 2 * s.p * s.r / (s.p + s.r) : 0.0;
  }
  return out;
}

inline double emr(const std::vector<dysfluency::EvalPair>& pairs) {
  double n = 0;
  for (const auto& p : pairs) n += to_set(p.reference) == to_set(p.prediction);
  return n / static_cast<double>(pairs.size());
}

inline std::optional<double> pmr(const std::vector<dysfluency::EvalPair>& pairs, bool all_clips = false) {
  double eligible = 0, hit = 0;
  for (const auto& p : pairs) {
    const LabelSet r = to_set(p.reference);
    if (r.empty() && !all_clips) continue;
    eligible += 1;
    hit += !intersection(r, to_set(p.prediction)).empty();
  }
  if (eligible == 0) return std::nullopt;
  return hit / eligible;
}

inline double hamming(const std::vector<dysfluency::EvalPair>& pairs, int width) {
  double wrong = 0;
  for (const auto& p : pairs) wrong += static_cast<double>(symmetric_difference(to_set(p.reference), to_set(p.prediction)).size());
  return wrong / (static_cast<double>(pairs.size()) * width);
}

// Random evaluation set. References always carry at least one label, as every
// manifest row does (No-Df marks the otherwise empty case); predictions are
// unconstrained. Label density varies per set so that N/A classes, perfect
// sets and fully wrong sets all occur.
inline std::vector<dysfluency::EvalPair> random_set(std::mt19937_64& rng, int width) {
  std::uniform_int_distribution<int> size_dist(1, 40);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = size_dist(rng);
  const double density = u(rng) * 0.6;
  const double copy = u(rng);  // probability a prediction copies the reference bit
  std::vector<dysfluency::EvalPair> out;
  for (int i = 0; i < n; ++i) {
    dysfluency::EvalPair p;
    p.clip_id = std::to_string(i);
    p.reference = dysfluency::LabelVector(static_cast<std::size_t>(width));
    p.prediction = dysfluency::LabelVector(static_cast<std::size_t>(width));
    do {
      for (int c = 0; c < width; ++c) p.reference.set(static_cast<std::size_t>(c), u(rng) < density);
      if (p.reference.count() == 0 && density < 0.05) p.reference.set(static_cast<std::size_t>(rng() % width));
    } while (p.reference.count() == 0);
    for (int c = 0; c < width; ++c) {
      const bool bit = u(rng) < copy ? p.reference[static_cast<std::size_t>(c)] : u(rng) < density;
      p.prediction.set(static_cast<std::size_t>(c), bit);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace oracle
