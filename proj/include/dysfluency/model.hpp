#pragma once

// Attention-pooled multi-task classification head over a t x d feature
// sequence: mean-query attention, tanh projector, a sigmoid main branch over
// the class vocabulary and a two-way softmax auxiliary branch.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dysfluency/labels.hpp"
#include "dysfluency/losses.hpp"
#include "dysfluency/numerics.hpp"

namespace dysfluency {

using FeatureSequence = Matrix;  // t x d, one 20 ms frame per row

enum class PoolingMode : std::uint8_t {
  kAttention = 0,       // K, V per frame; Q from the temporal mean
  kMean = 1,            // uniform weights over frames (mean-pool ablation)
  kMeanKeyValue = 2,    // K and V collapsed to their temporal mean (degenerate reading)
};

std::string_view to_string(PoolingMode mode);
PoolingMode pooling_mode_from_string(std::string_view name);

struct HeadConfig {
  int feature_dim = 1024;
  int projector_dim = 256;
  int num_classes = 7;
  int aux_outputs = 2;
  double dropout_rate = 0.1;
  std::uint64_t seed = 0;
  PoolingMode pooling = PoolingMode::kAttention;
  bool query_projection = true;  // false: raw temporal mean is the query

  void validate() const;
};

struct HeadParams {
  HeadConfig config;
  Matrix w_q, w_k, w_v;  // d x d
  Matrix w_proj, b_proj;  // d x p, 1 x p
  Matrix w_main, b_main;  // p x C, 1 x C
  Matrix w_aux, b_aux;    // p x 2, 1 x 2

  static constexpr std::size_t kTensorCount = 9;
  static const std::array<std::string_view, kTensorCount>& tensor_names();

  std::array<Matrix*, kTensorCount> tensors();
  std::array<const Matrix*, kTensorCount> tensors() const;

  // Same shapes, all zeros.
  HeadParams zeros_like() const;

  std::size_t parameter_count() const;
  Vector flatten() const;
  void assign_flat(const Vector& flat);
};

struct ForwardOutput {
  Matrix main_probs;    // 1 x C
  Matrix aux_probs;     // 1 x 2
  Matrix attn_weights;  // 1 x t
};

HeadParams init_head(const HeadConfig& cfg);

// Dropout is applied to the projected vector only when `train_mode` is set.
ForwardOutput forward(const HeadParams& params, const FeatureSequence& features, bool train_mode = false,
                      std::uint64_t dropout_seed = 0);

LabelVector predict(const Matrix& main_probs, double threshold = 0.5);

struct Example {
  const FeatureSequence* features = nullptr;
  LabelVector labels;
  std::optional<int> aux_label;  // nullopt: clip excluded from the auxiliary loss
};

struct LossAndGrads {
  double loss = 0.0;
  HeadParams grads;
};

// Mean multi-task loss over the batch and its gradient. With a dropout seed
// the projected vectors are masked as in training; nullopt disables dropout.
LossAndGrads forward_backward(const HeadParams& params, std::span<const Example> batch, const LossConfig& loss_cfg,
                              std::optional<std::uint64_t> dropout_seed = std::nullopt);

// Loss only, evaluation mode.
double batch_loss(const HeadParams& params, std::span<const Example> batch, const LossConfig& loss_cfg);

// Binary checkpoint ("DYSH"), little-endian.
void save_checkpoint(const HeadParams& params, const std::filesystem::path& path);
HeadParams load_checkpoint(const std::filesystem::path& path);

}  // namespace dysfluency
