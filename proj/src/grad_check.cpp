#include "dysfluency/grad_check.hpp"

#include <random>

namespace dysfluency {

double head_gradient_error(const HeadParams& params, std::span<const Example> batch, const LossConfig& loss_cfg,
                           double eps) {
  const LossAndGrads lg = forward_backward(params, batch, loss_cfg, std::nullopt);
  HeadParams probe = params;
  const auto result = grad_check(
      [&](const Vector& x) {
        probe.assign_flat(x);
        return batch_loss(probe, batch, loss_cfg);
      },
      params.flatten(), lg.grads.flatten(), eps);
  return result.max_relative_error;
}

GradCheckSummary run_head_grad_checks(std::size_t trials, std::uint64_t seed, double eps) {
  static constexpr int kFrames[] = {1, 5, 150};
  GradCheckSummary summary;
  summary.trials = trials;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    HeadConfig cfg;
    cfg.feature_dim = 8;
    cfg.projector_dim = 4;
    cfg.num_classes = trial % 2 == 0 ? 6 : 7;
    cfg.dropout_rate = 0.0;
    cfg.seed = rng();
    HeadParams params = init_head(cfg);
    // Nonzero biases so their gradients are exercised away from the origin.
    params.b_proj = Matrix::NullaryExpr(1, cfg.projector_dim, [&] { return 0.1 * normal(rng); });
    params.b_main = Matrix::NullaryExpr(1, cfg.num_classes, [&] { return 0.1 * normal(rng); });
    params.b_aux = Matrix::NullaryExpr(1, 2, [&] { return 0.1 * normal(rng); });

    LossConfig loss;
    loss.alpha = 0.1 + 0.8 * unit(rng);
    loss.gamma = static_cast<double>(rng() % 4);
    loss.w_main = unit(rng);
    loss.aux_class_weights = {0.5 + unit(rng), 0.5 + unit(rng)};

    const int t = kFrames[(trial / 2) % 3];
    std::vector<Matrix> features;
    for (int b = 0; b < 2; ++b) features.push_back(Matrix::NullaryExpr(t, cfg.feature_dim, [&] { return normal(rng); }));
    std::vector<Example> batch;
    for (int b = 0; b < 2; ++b) {
      LabelVector labels(static_cast<std::size_t>(cfg.num_classes));
      for (std::size_t c = 0; c < labels.size(); ++c) labels.set(c, unit(rng) < 0.4);
      batch.push_back({&features[static_cast<std::size_t>(b)], labels, static_cast<int>(rng() % 2)});
    }
    const double err = head_gradient_error(params, batch, loss, eps);
    if (trial == 0 || err > summary.max_relative_error) {
      summary.max_relative_error = err;
      summary.worst_trial = trial;
    }
  }
  return summary;
}

}  // namespace dysfluency
