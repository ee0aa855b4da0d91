#include "dysfluency/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "dysfluency/config_file.hpp"

namespace dysfluency {

void TrainConfig::validate() const {
  if (max_epochs < 1) throw InvalidArgument("train config: max_epochs must be >= 1");
  if (patience < 1 || patience > max_epochs) throw InvalidArgument("train config: patience must lie in [1, max_epochs]");
  if (batch_size < 1) throw InvalidArgument("train config: batch_size must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw InvalidArgument("train config: warmup_fraction must lie in [0,1)");
  }
  if (!(base_lr > 0.0)) throw InvalidArgument("train config: base_lr must be positive");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw InvalidArgument("train config: threshold must lie in [0,1]");
  loss.validate();
}

double lr_at_step(std::int64_t step, std::int64_t total_steps, double base_lr, double warmup_fraction,
                  LrSchedule schedule) {
  if (total_steps < 1) throw InvalidArgument("lr_at_step: total_steps must be >= 1");
  if (step < 0 || step > total_steps) {
    throw InvalidArgument("lr_at_step: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) +
                          "]");
  }
  // The small offset keeps e.g. 0.1 * 100 from rounding up to 11.
  const auto warmup = static_cast<std::int64_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps) - 1e-9));
  if (step < warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (schedule == LrSchedule::kConstant || warmup >= total_steps) return base_lr;
  return base_lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
}

AdamWState AdamWState::zeros_like(const HeadParams& params) {
  AdamWState s;
  for (const Matrix* m : params.tensors()) {
    s.m.push_back(Matrix::Zero(m->rows(), m->cols()));
    s.v.push_back(Matrix::Zero(m->rows(), m->cols()));
  }
  return s;
}

void adamw_step(std::vector<Matrix*> params, const std::vector<const Matrix*>& grads, AdamWState& state, double lr,
                const AdamWConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adamw_step: parameter and gradient lists differ in length");
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adamw_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols()) {
      throw ShapeError("adamw_step: gradient " + std::to_string(i) + " has shape " + shape_string(*grads[i]) +
                       ", parameter has " + shape_string(*params[i]));
    }
    if (!all_finite(*grads[i])) {
      throw NonFiniteError("adamw_step: non-finite gradient in tensor " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = *grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const auto m_hat = state.m[i].array() / bias1;
    const auto v_hat = state.v[i].array() / bias2;
    p.array() -= lr * (m_hat / (v_hat.sqrt() + cfg.epsilon) + cfg.weight_decay * p.array());
  }
}

void adamw_step(HeadParams& params, const HeadParams& grads, AdamWState& state, double lr, const AdamWConfig& cfg) {
  auto p = params.tensors();
  auto g = grads.tensors();
  adamw_step(std::vector<Matrix*>(p.begin(), p.end()), std::vector<const Matrix*>(g.begin(), g.end()), state, lr, cfg);
}

std::string_view to_string(StopReason r) { return r == StopReason::kPatience ? "patience" : "max_epochs"; }

double TrainHistory::best_dev_loss() const {
  if (best_epoch < 1 || static_cast<std::size_t>(best_epoch) > epochs.size()) {
    throw InvalidArgument("train history has no best epoch");
  }
  return epochs[static_cast<std::size_t>(best_epoch - 1)].dev_loss;
}

FeatureCache::FeatureCache(const CorpusTable& table, int feature_dim) {
  features_.reserve(table.records.size());
  for (const auto& rec : table.records) {
    try {
      features_.push_back(read_feature_file_f32(table.feature_file(rec), feature_dim));
    } catch (const Error& e) {
      throw IoError("clip '" + rec.clip_id + "': " + e.what());
    }
  }
}

namespace {

std::vector<std::optional<int>> aux_for(const CorpusTable& table, AuxTask task, std::size_t* excluded = nullptr) {
  auto aux = derive_aux_labels(table, task);
  if (excluded) *excluded = aux.excluded;
  return std::move(aux.labels);
}

void check_vocabulary(const HeadConfig& head_cfg, const CorpusTable& table, const char* which) {
  if (static_cast<std::size_t>(head_cfg.num_classes) != table.vocabulary.size()) {
    throw InvalidArgument(std::string("train: head has ") + std::to_string(head_cfg.num_classes) + " classes, " +
                          which + " vocabulary has " + std::to_string(table.vocabulary.size()));
  }
}

}  // namespace

DatasetEvaluation evaluate_dataset(const HeadParams& params, const CorpusTable& table, const FeatureCache& cache,
                                   const LossConfig& loss_cfg, AuxTask aux_task, double threshold) {
  if (table.records.empty()) throw InvalidArgument("evaluate_dataset: empty table");
  const auto aux = aux_for(table, aux_task);
  DatasetEvaluation out;
  std::vector<EvalPair> pairs;
  pairs.reserve(table.records.size());
  double total = 0.0;
  for (std::size_t i = 0; i < table.records.size(); ++i) {
    const Matrix features = cache.at(i).cast<double>();
    const ForwardOutput fo = forward(params, features, false);
    const auto& labels = table.records[i].labels;
    const double l_main = focal_multi(fo.main_probs, labels, loss_cfg.alpha, loss_cfg.gamma);
    if (aux[i]) {
      total += mtl_loss(l_main, weighted_ce(fo.aux_probs, *aux[i], loss_cfg.aux_class_weights), loss_cfg.w_main);
    } else {
      total += loss_cfg.w_main * l_main;
    }
    pairs.push_back({table.records[i].clip_id, labels, predict(fo.main_probs, threshold)});
    out.main_probs.push_back(fo.main_probs);
  }
  out.loss = total / static_cast<double>(table.records.size());
  out.macro_f1 = macro_f1(per_class_prf(pairs));
  return out;
}

TrainResult train(const CorpusTable& train_table, const CorpusTable& dev_table, const HeadConfig& head_cfg,
                  const TrainConfig& train_cfg, const EpochCallback& on_epoch) {
  head_cfg.validate();
  train_cfg.validate();
  if (train_table.records.empty() || dev_table.records.empty()) throw InvalidArgument("train: empty train or dev table");
  check_vocabulary(head_cfg, train_table, "train");
  check_vocabulary(head_cfg, dev_table, "dev");

  const FeatureCache train_cache(train_table, head_cfg.feature_dim);
  const FeatureCache dev_cache(dev_table, head_cfg.feature_dim);

  TrainResult result;
  std::size_t excluded = 0;
  const auto train_aux = aux_for(train_table, train_cfg.aux_task, &excluded);
  result.history.aux_excluded = excluded;

  LossConfig loss_cfg = train_cfg.loss;
  if (train_cfg.auto_aux_weights) {
    std::vector<int> known;
    for (const auto& a : train_aux) {
      if (a) known.push_back(*a);
    }
    loss_cfg.aux_class_weights = inverse_frequency_weights(known);
  }
  result.history.aux_class_weights = loss_cfg.aux_class_weights;

  HeadParams params = init_head(head_cfg);
  AdamWState state = AdamWState::zeros_like(params);
  HeadParams best = params;
  double best_loss = std::numeric_limits<double>::infinity();

  const std::size_t n = train_table.records.size();
  const auto bs = static_cast<std::size_t>(train_cfg.batch_size);
  const std::size_t steps_per_epoch = (n + bs - 1) / bs;
  const auto total_steps = static_cast<std::int64_t>(steps_per_epoch) * train_cfg.max_epochs;

  std::mt19937_64 shuffle_rng(train_cfg.seed);
  std::mt19937_64 dropout_rng(train_cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::int64_t step = 0;
  int since_best = 0;
  result.history.stop_reason = StopReason::kMaxEpochs;
  std::vector<FeatureSequence> batch_features;
  std::vector<Example> batch;
  for (int epoch = 1; epoch <= train_cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t stop = std::min(n, start + bs);
      batch_features.clear();
      batch.clear();
      for (std::size_t j = start; j < stop; ++j) batch_features.push_back(train_cache.at(order[j]).cast<double>());
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t rec = order[j];
        batch.push_back({&batch_features[j - start], train_table.records[rec].labels, train_aux[rec]});
      }
      const LossAndGrads lg = forward_backward(params, batch, loss_cfg, dropout_rng());
      if (!std::isfinite(lg.loss)) {
        throw NonFiniteError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step));
      }
      const double lr = lr_at_step(step, total_steps, train_cfg.base_lr, train_cfg.warmup_fraction, train_cfg.schedule);
      try {
        adamw_step(params, lg.grads, state, lr, train_cfg.adamw);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("train: epoch " + std::to_string(epoch) + " aborted at step " + std::to_string(step) +
                             ": " + e.what());
      }
      loss_sum += lg.loss * static_cast<double>(stop - start);
      ++step;
    }

    const DatasetEvaluation dev =
        evaluate_dataset(params, dev_table, dev_cache, loss_cfg, train_cfg.aux_task, train_cfg.threshold);
    if (!std::isfinite(dev.loss)) throw NonFiniteError("train: non-finite dev loss at epoch " + std::to_string(epoch));
    const EpochRecord record{epoch, loss_sum / static_cast<double>(n), dev.loss, dev.macro_f1};
    result.history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);

    if (dev.loss < best_loss) {
      best_loss = dev.loss;
      best = params;
      result.history.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= train_cfg.patience) {
      result.history.stop_reason = StopReason::kPatience;
      break;
    }
  }
  result.params = std::move(best);
  return result;
}

std::vector<PredictionRow> predict_table(const HeadParams& params, const CorpusTable& table, double threshold) {
  std::vector<PredictionRow> rows;
  rows.reserve(table.records.size());
  for (const auto& rec : table.records) {
    const Matrix features = read_feature_file(table.feature_file(rec), params.config.feature_dim);
    const ForwardOutput fo = forward(params, features, false);
    PredictionRow row;
    row.clip_id = rec.clip_id;
    row.probabilities.assign(fo.main_probs.data(), fo.main_probs.data() + fo.main_probs.size());
    row.prediction = predict(fo.main_probs, threshold);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string history_csv(const TrainHistory& history) {
  std::ostringstream out;
  out << "epoch,train_loss,dev_loss,dev_macro_f1\n";
  char buf[128];
  for (const auto& e : history.epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.dev_loss, e.dev_macro_f1);
    out << buf;
  }
  return out.str();
}

void write_run_directory(const std::filesystem::path& dir, const HeadConfig& head_cfg, const TrainConfig& train_cfg,
                         const TrainResult& result) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.txt", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "config.txt").string());
    out << "# head\n" << to_key_values(head_cfg) << "# training\n" << to_key_values(train_cfg);
    out << "# outcome\nbest_epoch=" << result.history.best_epoch
        << "\nstop_reason=" << to_string(result.history.stop_reason) << '\n';
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g", result.history.aux_class_weights[0],
                  result.history.aux_class_weights[1]);
    out << "effective_aux_class_weights=" << buf << "\naux_excluded=" << result.history.aux_excluded << '\n';
  }
  {
    std::ofstream out(dir / "history.csv", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "history.csv").string());
    out << history_csv(result.history);
  }
  save_checkpoint(result.params, dir / "head.dysh");
}

}  // namespace dysfluency
