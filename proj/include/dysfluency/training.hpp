#pragma once

// AdamW training with linear warm-up, epoch-level early stopping on the dev
// loss, and grid/random hyperparameter search.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dysfluency/data.hpp"
#include "dysfluency/losses.hpp"
#include "dysfluency/metrics.hpp"
#include "dysfluency/model.hpp"

namespace dysfluency {

enum class LrSchedule { kLinearDecay, kConstant };

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  int max_epochs = 20;
  int patience = 5;
  double base_lr = 3e-5;
  int batch_size = 8;
  double warmup_fraction = 0.10;
  LrSchedule schedule = LrSchedule::kLinearDecay;
  AdamWConfig adamw;
  LossConfig loss;
  // Inverse-frequency aux weights from the training split unless disabled.
  bool auto_aux_weights = true;
  AuxTask aux_task = AuxTask::kAnyDysfluency;
  double threshold = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

// Linear ramp from 0 to base_lr over ceil(warmup_fraction * total) steps,
// then linear decay to 0 at `total_steps` (or constant).
double lr_at_step(std::int64_t step, std::int64_t total_steps, double base_lr, double warmup_fraction,
                  LrSchedule schedule = LrSchedule::kLinearDecay);

// Per-tensor first and second moments, zero-initialized.
struct AdamWState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t step = 0;

  static AdamWState zeros_like(const HeadParams& params);
};

// Decoupled weight decay: theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
void adamw_step(HeadParams& params, const HeadParams& grads, AdamWState& state, double lr, const AdamWConfig& cfg);

// The same update on a bare list of tensors.
void adamw_step(std::vector<Matrix*> params, const std::vector<const Matrix*>& grads, AdamWState& state, double lr,
                const AdamWConfig& cfg);

enum class StopReason { kPatience, kMaxEpochs };
std::string_view to_string(StopReason r);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_macro_f1 = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  StopReason stop_reason = StopReason::kMaxEpochs;
  std::array<double, 2> aux_class_weights{1.0, 1.0};
  std::size_t aux_excluded = 0;

  double best_dev_loss() const;
};

struct TrainResult {
  HeadParams params;
  TrainHistory history;
};

// Feature sequences for a table, loaded once as float32.
class FeatureCache {
 public:
  FeatureCache(const CorpusTable& table, int feature_dim);
  const FloatFeatures& at(std::size_t record) const { return features_.at(record); }
  std::size_t size() const { return features_.size(); }

 private:
  std::vector<FloatFeatures> features_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const CorpusTable& train_table, const CorpusTable& dev_table, const HeadConfig& head_cfg,
                  const TrainConfig& train_cfg, const EpochCallback& on_epoch = {});

struct DatasetEvaluation {
  double loss = 0.0;
  double macro_f1 = 0.0;
  std::vector<Matrix> main_probs;  // per record, 1 x C
};

DatasetEvaluation evaluate_dataset(const HeadParams& params, const CorpusTable& table, const FeatureCache& cache,
                                   const LossConfig& loss_cfg, AuxTask aux_task, double threshold);

// Probabilities and thresholded predictions for every record of `table`.
std::vector<PredictionRow> predict_table(const HeadParams& params, const CorpusTable& table, double threshold = 0.5);

// Run directory: config.txt snapshot, history.csv and head.dysh.
void write_run_directory(const std::filesystem::path& dir, const HeadConfig& head_cfg, const TrainConfig& train_cfg,
                         const TrainResult& result);
std::string history_csv(const TrainHistory& history);

// --- hyperparameter search ---------------------------------------------------

struct SearchSpace {
  std::vector<double> learning_rates{3e-5};
  std::vector<int> batch_sizes{8, 32, 64, 128, 256};
  std::vector<double> w_main{0.85, 0.86, 0.87, 0.88, 0.89, 0.90, 0.91, 0.92, 0.93, 0.94, 0.95};
  std::vector<double> gamma{1, 2, 3};
  std::vector<double> alpha{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<AuxTask> aux_tasks{AuxTask::kAnyDysfluency, AuxTask::kGender};

  std::size_t size() const;
  // The i-th configuration in lexicographic order (lr, bs, w_main, gamma, alpha, aux).
  TrainConfig config_at(std::size_t index, const TrainConfig& base) const;
};

enum class Regime { kSingleDataset, kAllEnglish, kMultiLingualSmall, kMultiLingual };
// Auxiliary tasks offered per data regime: language id only joins for the
// multi-lingual combinations.
std::vector<AuxTask> aux_tasks_for_regime(Regime regime);

enum class SearchMode { kGrid, kRandom };

struct TrialResult {
  double dev_loss = 0.0;
  double dev_macro_f1 = 0.0;
};

struct SearchTrial {
  std::size_t space_index = 0;
  TrainConfig config;
  TrialResult result;
};

struct SearchResult {
  TrainConfig best;
  std::size_t best_trial = 0;
  std::vector<SearchTrial> trials;
};

using TrialFn = std::function<TrialResult(const TrainConfig&)>;

// Grid mode is exhaustive when the budget covers the space; otherwise
// configurations are drawn uniformly without replacement with `seed`.
// Best = minimal dev loss, ties by higher macro-F1, then first seen.
SearchResult hyperparameter_search(const SearchSpace& space, std::size_t budget, SearchMode mode, std::uint64_t seed,
                                   const TrainConfig& base, const TrialFn& run_trial);

SearchResult hyperparameter_search(const SearchSpace& space, std::size_t budget, SearchMode mode, std::uint64_t seed,
                                   const TrainConfig& base, const CorpusTable& train_table,
                                   const CorpusTable& dev_table, const HeadConfig& head_cfg);

}  // namespace dysfluency
