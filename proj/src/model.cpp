#include "dysfluency/model.hpp"

#include <cmath>
#include <random>
#include <string>

namespace dysfluency {

std::string_view to_string(PoolingMode mode) {
  switch (mode) {
    case PoolingMode::kAttention: return "attention";
    case PoolingMode::kMean: return "mean";
    case PoolingMode::kMeanKeyValue: return "mean_kv";
  }
  return "attention";
}

PoolingMode pooling_mode_from_string(std::string_view name) {
  if (name == "attention") return PoolingMode::kAttention;
  if (name == "mean") return PoolingMode::kMean;
  if (name == "mean_kv") return PoolingMode::kMeanKeyValue;
  throw InvalidArgument("unknown pooling mode '" + std::string(name) + "'");
}

void HeadConfig::validate() const {
  if (feature_dim < 1 || projector_dim < 1 || num_classes < 1) {
    throw InvalidArgument("head config: feature_dim, projector_dim and num_classes must be >= 1");
  }
  if (aux_outputs != 2) throw InvalidArgument("head config: the auxiliary branch has exactly 2 outputs");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("head config: dropout_rate must be in [0,1)");
}

const std::array<std::string_view, HeadParams::kTensorCount>& HeadParams::tensor_names() {
  static const std::array<std::string_view, kTensorCount> names{"w_q",    "w_k",    "w_v",   "w_proj", "b_proj",
                                                                "w_main", "b_main", "w_aux", "b_aux"};
  return names;
}

std::array<Matrix*, HeadParams::kTensorCount> HeadParams::tensors() {
  return {&w_q, &w_k, &w_v, &w_proj, &b_proj, &w_main, &b_main, &w_aux, &b_aux};
}

std::array<const Matrix*, HeadParams::kTensorCount> HeadParams::tensors() const {
  return {&w_q, &w_k, &w_v, &w_proj, &b_proj, &w_main, &b_main, &w_aux, &b_aux};
}

HeadParams HeadParams::zeros_like() const {
  HeadParams z = *this;
  for (Matrix* m : z.tensors()) m->setZero();
  return z;
}

std::size_t HeadParams::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* m : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

Vector HeadParams::flatten() const {
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index offset = 0;
  for (const Matrix* m : tensors()) {
    flat.segment(offset, m->size()) = m->reshaped<Eigen::RowMajor>();
    offset += m->size();
  }
  return flat;
}

void HeadParams::assign_flat(const Vector& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw ShapeError("assign_flat: expected " + std::to_string(parameter_count()) + " values, got " +
                     std::to_string(flat.size()));
  }
  Eigen::Index offset = 0;
  for (Matrix* m : tensors()) {
    m->reshaped<Eigen::RowMajor>() = flat.segment(offset, m->size());
    offset += m->size();
  }
}

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

struct HeadGraph {
  Var main_probs;
  Var aux_probs;
  Var attn_weights;
};

struct ParamVars {
  Var w_q, w_k, w_v, w_proj, b_proj, w_main, b_main, w_aux, b_aux;
};

ParamVars register_params(Tape<double>& tape, const HeadParams& p, bool trainable) {
  auto reg = [&](const Matrix& m) { return trainable ? tape.parameter_ref(m) : tape.constant_ref(m); };
  return {reg(p.w_q), reg(p.w_k), reg(p.w_v), reg(p.w_proj), reg(p.b_proj),
          reg(p.w_main), reg(p.b_main), reg(p.w_aux), reg(p.b_aux)};
}

Matrix dropout_mask(Eigen::Index cols, double rate, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix m(1, cols);
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index j = 0; j < cols; ++j) m(0, j) = keep(rng) ? scale : 0.0;
  return m;
}

HeadGraph build_graph(Tape<double>& tape, const HeadConfig& cfg, const ParamVars& pv, const FeatureSequence& features,
                      std::mt19937_64* dropout_rng) {
  if (features.cols() != cfg.feature_dim) {
    throw ShapeError("forward: feature sequence has " + std::to_string(features.cols()) + " columns, head expects " +
                     std::to_string(cfg.feature_dim));
  }
  if (features.rows() < 1) throw InvalidArgument("forward: empty feature sequence");

  const Var h = tape.constant_ref(features);
  const Var mean = mean_over_rows(tape, h);
  Var context;
  Var weights;
  switch (cfg.pooling) {
    case PoolingMode::kAttention: {
      const Var q = cfg.query_projection ? matmul(tape, mean, pv.w_q) : mean;
      const Var k = matmul(tape, h, pv.w_k);
      const Var v = matmul(tape, h, pv.w_v);
      const auto att = scaled_dot_product_attention(tape, q, k, v);
      context = att.context;
      weights = att.weights;
      break;
    }
    case PoolingMode::kMean: {
      const Matrix uniform = Matrix::Constant(1, features.rows(), 1.0 / static_cast<double>(features.rows()));
      weights = tape.constant(uniform);
      context = matmul(tape, mean, pv.w_v);
      break;
    }
    case PoolingMode::kMeanKeyValue: {
      const Var q = cfg.query_projection ? matmul(tape, mean, pv.w_q) : mean;
      const Var k = matmul(tape, mean, pv.w_k);
      const Var v = matmul(tape, mean, pv.w_v);
      const auto att = scaled_dot_product_attention(tape, q, k, v);
      context = att.context;
      weights = att.weights;
      break;
    }
  }

  Var projected = tanh(tape, add_row(tape, matmul(tape, context, pv.w_proj), pv.b_proj));
  if (dropout_rng != nullptr && cfg.dropout_rate > 0.0) {
    projected = mask(tape, projected, dropout_mask(cfg.projector_dim, cfg.dropout_rate, *dropout_rng));
  }
  const Var main_probs = sigmoid(tape, add_row(tape, matmul(tape, projected, pv.w_main), pv.b_main));
  const Var aux_probs = softmax_row(tape, add_row(tape, matmul(tape, projected, pv.w_aux), pv.b_aux));
  return {main_probs, aux_probs, weights};
}

void check_label_width(const HeadConfig& cfg, const LabelVector& labels) {
  if (labels.size() != static_cast<std::size_t>(cfg.num_classes)) {
    throw ShapeError("label vector has width " + std::to_string(labels.size()) + ", head has " +
                     std::to_string(cfg.num_classes) + " classes");
  }
}

// Builds the summed per-clip losses; returns the batch-mean node.
Var batch_loss_graph(Tape<double>& tape, const HeadParams& params, const ParamVars& pv,
                     std::span<const Example> batch, const LossConfig& loss_cfg, std::mt19937_64* rng) {
  if (batch.empty()) throw InvalidArgument("forward_backward: empty batch");
  std::vector<std::pair<Var, double>> terms;
  terms.reserve(batch.size());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const Example& ex : batch) {
    if (ex.features == nullptr) throw InvalidArgument("forward_backward: example without features");
    check_label_width(params.config, ex.labels);
    const HeadGraph g = build_graph(tape, params.config, pv, *ex.features, rng);
    const Var l_main = focal_multi(tape, g.main_probs, ex.labels, loss_cfg.alpha, loss_cfg.gamma);
    if (ex.aux_label) {
      const Var l_aux = weighted_ce(tape, g.aux_probs, *ex.aux_label, loss_cfg.aux_class_weights);
      terms.emplace_back(mtl_loss(tape, l_main, l_aux, loss_cfg.w_main), inv_n);
    } else {
      terms.emplace_back(l_main, loss_cfg.w_main * inv_n);
    }
  }
  return linear_combination(tape, terms);
}

}  // namespace

HeadParams init_head(const HeadConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const Eigen::Index d = cfg.feature_dim;
  const Eigen::Index p = cfg.projector_dim;
  const Eigen::Index c = cfg.num_classes;
  HeadParams params;
  params.config = cfg;
  params.w_q = uniform_matrix(d, d, rng);
  params.w_k = uniform_matrix(d, d, rng);
  params.w_v = uniform_matrix(d, d, rng);
  params.w_proj = uniform_matrix(d, p, rng);
  params.b_proj = Matrix::Zero(1, p);
  params.w_main = uniform_matrix(p, c, rng);
  params.b_main = Matrix::Zero(1, c);
  params.w_aux = uniform_matrix(p, cfg.aux_outputs, rng);
  params.b_aux = Matrix::Zero(1, cfg.aux_outputs);
  return params;
}

ForwardOutput forward(const HeadParams& params, const FeatureSequence& features, bool train_mode,
                      std::uint64_t dropout_seed) {
  Tape<double> tape;
  const ParamVars pv = register_params(tape, params, false);
  std::mt19937_64 rng(dropout_seed);
  const HeadGraph g = build_graph(tape, params.config, pv, features, train_mode ? &rng : nullptr);
  return {tape.value(g.main_probs), tape.value(g.aux_probs), tape.value(g.attn_weights)};
}

LabelVector predict(const Matrix& main_probs, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw InvalidArgument("predict: threshold must lie in [0,1]");
  LabelVector out(static_cast<std::size_t>(main_probs.size()));
  for (Eigen::Index i = 0; i < main_probs.size(); ++i) out.set(static_cast<std::size_t>(i), main_probs(i) >= threshold);
  return out;
}

LossAndGrads forward_backward(const HeadParams& params, std::span<const Example> batch, const LossConfig& loss_cfg,
                              std::optional<std::uint64_t> dropout_seed) {
  Tape<double> tape;
  const ParamVars pv = register_params(tape, params, true);
  std::optional<std::mt19937_64> rng;
  if (dropout_seed) rng.emplace(*dropout_seed);
  const Var loss = batch_loss_graph(tape, params, pv, batch, loss_cfg, rng ? &*rng : nullptr);
  tape.backward(loss);

  LossAndGrads out;
  out.loss = tape.value(loss)(0, 0);
  out.grads = params;
  const std::array<Var, HeadParams::kTensorCount> vars{pv.w_q,    pv.w_k,    pv.w_v,   pv.w_proj, pv.b_proj,
                                                       pv.w_main, pv.b_main, pv.w_aux, pv.b_aux};
  auto grads = out.grads.tensors();
  for (std::size_t i = 0; i < vars.size(); ++i) *grads[i] = tape.grad(vars[i]);
  return out;
}

double batch_loss(const HeadParams& params, std::span<const Example> batch, const LossConfig& loss_cfg) {
  Tape<double> tape;
  const ParamVars pv = register_params(tape, params, false);
  return tape.value(batch_loss_graph(tape, params, pv, batch, loss_cfg, nullptr))(0, 0);
}

}  // namespace dysfluency
