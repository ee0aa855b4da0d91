#pragma once

// Focal loss, its multi-label mean, weighted cross-entropy for the auxiliary
// branch and the weighted multi-task sum. Scalar functions plus tape nodes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "dysfluency/error.hpp"
#include "dysfluency/labels.hpp"
#include "dysfluency/numerics.hpp"

namespace dysfluency {

struct LossConfig {
  double alpha = 0.7;  // weight on positives; negatives get 1 - alpha
  double gamma = 3.0;
  double w_main = 0.9;
  std::array<double, 2> aux_class_weights{1.0, 1.0};

  void validate() const;
};

inline constexpr double kProbabilityClamp = 1e-12;

template <typename Scalar>
Scalar clamp_probability(Scalar p) {
  return std::clamp(p, Scalar(kProbabilityClamp), Scalar(1) - Scalar(kProbabilityClamp));
}

// -alpha_t * (1 - p_t)^gamma * ln(p_t), with p_t = p for y = 1 and 1 - p
// otherwise.
template <typename Scalar>
Scalar focal_term(Scalar p, int y, Scalar alpha, Scalar gamma) {
  const Scalar pc = clamp_probability(p);
  const Scalar pt = y ? pc : Scalar(1) - pc;
  const Scalar at = y ? alpha : Scalar(1) - alpha;
  return -at * std::pow(Scalar(1) - pt, gamma) * std::log(pt);
}

// d focal_term / d p. Zero where the clamp is active.
template <typename Scalar>
Scalar focal_term_derivative(Scalar p, int y, Scalar alpha, Scalar gamma) {
  if (p <= Scalar(kProbabilityClamp) || p >= Scalar(1) - Scalar(kProbabilityClamp)) return Scalar(0);
  const Scalar pt = y ? p : Scalar(1) - p;
  const Scalar at = y ? alpha : Scalar(1) - alpha;
  const Scalar q = Scalar(1) - pt;
  Scalar d_pt = -at * std::pow(q, gamma) / pt;
  if (gamma != Scalar(0)) d_pt += at * gamma * std::pow(q, gamma - Scalar(1)) * std::log(pt);
  return y ? d_pt : -d_pt;
}

template <typename Derived>
typename Derived::Scalar focal_multi(const Eigen::MatrixBase<Derived>& probs, const LabelVector& targets,
                                     typename Derived::Scalar alpha, typename Derived::Scalar gamma) {
  using Scalar = typename Derived::Scalar;
  if (static_cast<std::size_t>(probs.size()) != targets.size()) {
    throw ShapeError("focal_multi: " + std::to_string(probs.size()) + " probabilities vs " +
                     std::to_string(targets.size()) + " targets");
  }
  if (targets.size() == 0) throw InvalidArgument("focal_multi: empty label vector");
  Scalar sum = 0;
  for (Eigen::Index c = 0; c < probs.size(); ++c) {
    sum += focal_term(probs(c), targets[static_cast<std::size_t>(c)] ? 1 : 0, alpha, gamma);
  }
  return sum / static_cast<Scalar>(probs.size());
}

template <typename Derived>
void require_probability_vector(const Eigen::MatrixBase<Derived>& p, const char* what) {
  using Scalar = typename Derived::Scalar;
  if (p.size() == 0 || !all_finite(p) || (p.array() < Scalar(0)).any() || (p.array() > Scalar(1)).any() ||
      std::abs(p.sum() - Scalar(1)) > Scalar(1e-9)) {
    throw InvalidArgument(std::string(what) + ": input is not a probability vector");
  }
}

// -weights[target] * ln(p[target])
template <typename Derived>
typename Derived::Scalar weighted_ce(const Eigen::MatrixBase<Derived>& aux_probs, int target,
                                     const std::array<double, 2>& weights) {
  using Scalar = typename Derived::Scalar;
  if (aux_probs.size() != 2) throw ShapeError("weighted_ce: expected 2 probabilities");
  require_probability_vector(aux_probs, "weighted_ce");
  if (target != 0 && target != 1) throw InvalidArgument("weighted_ce: target must be 0 or 1");
  return -Scalar(weights[static_cast<std::size_t>(target)]) * std::log(clamp_probability(aux_probs(target)));
}

template <typename Scalar>
Scalar mtl_loss(Scalar l_main, Scalar l_aux, Scalar w_main) {
  return w_main * l_main + (Scalar(1) - w_main) * l_aux;
}

// --- tape nodes --------------------------------------------------------------

template <typename Scalar>
Var focal_multi(Tape<Scalar>& t, Var probs, const LabelVector& targets, Scalar alpha, Scalar gamma) {
  const auto& p = t.value(probs);
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = focal_multi(p, targets, alpha, gamma);
  return t.record(std::move(out), {probs}, [probs, targets, alpha, gamma](const auto& g, Tape<Scalar>& tp) {
    const auto& pv = tp.value(probs);
    MatrixX<Scalar> d(pv.rows(), pv.cols());
    const Scalar n = static_cast<Scalar>(pv.size());
    for (Eigen::Index c = 0; c < pv.size(); ++c) {
      d(c) = g(0, 0) * focal_term_derivative(pv(c), targets[static_cast<std::size_t>(c)] ? 1 : 0, alpha, gamma) / n;
    }
    tp.accumulate(probs, d);
  });
}

template <typename Scalar>
Var weighted_ce(Tape<Scalar>& t, Var aux_probs, int target, const std::array<double, 2>& weights) {
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = weighted_ce(t.value(aux_probs), target, weights);
  return t.record(std::move(out), {aux_probs}, [aux_probs, target, weights](const auto& g, Tape<Scalar>& tp) {
    const auto& pv = tp.value(aux_probs);
    MatrixX<Scalar> d = MatrixX<Scalar>::Zero(pv.rows(), pv.cols());
    const Scalar p = pv(target);
    if (p > Scalar(kProbabilityClamp) && p < Scalar(1) - Scalar(kProbabilityClamp)) {
      d(target) = -g(0, 0) * Scalar(weights[static_cast<std::size_t>(target)]) / p;
    }
    tp.accumulate(aux_probs, d);
  });
}

template <typename Scalar>
Var mtl_loss(Tape<Scalar>& t, Var l_main, Var l_aux, Scalar w_main) {
  return linear_combination(t, {{l_main, w_main}, {l_aux, Scalar(1) - w_main}});
}

// Inverse class frequency of the binary auxiliary labels, normalized to mean
// one. Falls back to {1, 1} when either class is absent.
std::array<double, 2> inverse_frequency_weights(std::span<const int> aux_labels);

}  // namespace dysfluency
