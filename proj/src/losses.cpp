#include "dysfluency/losses.hpp"

namespace dysfluency {

void LossConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("loss config: alpha must lie in (0,1)");
  if (!(gamma >= 0.0)) throw InvalidArgument("loss config: gamma must be >= 0");
  if (!(w_main >= 0.0 && w_main <= 1.0)) throw InvalidArgument("loss config: w_main must lie in [0,1]");
  for (double w : aux_class_weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw InvalidArgument("loss config: aux class weights must be positive");
  }
}

std::array<double, 2> inverse_frequency_weights(std::span<const int> aux_labels) {
  std::array<double, 2> counts{0.0, 0.0};
  for (int y : aux_labels) {
    if (y != 0 && y != 1) throw InvalidArgument("inverse_frequency_weights: labels must be 0 or 1");
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  if (counts[0] == 0.0 || counts[1] == 0.0) return {1.0, 1.0};
  const double inv0 = 1.0 / counts[0];
  const double inv1 = 1.0 / counts[1];
  const double mean = 0.5 * (inv0 + inv1);
  return {inv0 / mean, inv1 / mean};
}

}  // namespace dysfluency
