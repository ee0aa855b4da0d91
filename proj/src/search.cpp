#include <algorithm>
#include <numeric>
#include <random>

#include "dysfluency/training.hpp"

namespace dysfluency {

std::size_t SearchSpace::size() const {
  return learning_rates.size() * batch_sizes.size() * w_main.size() * gamma.size() * alpha.size() * aux_tasks.size();
}

TrainConfig SearchSpace::config_at(std::size_t index, const TrainConfig& base) const {
  if (index >= size()) throw InvalidArgument("search space index out of range");
  TrainConfig cfg = base;
  // Last axis varies fastest.
  std::size_t rest = index;
  cfg.aux_task = aux_tasks[rest % aux_tasks.size()];
  rest /= aux_tasks.size();
  cfg.loss.alpha = alpha[rest % alpha.size()];
  rest /= alpha.size();
  cfg.loss.gamma = gamma[rest % gamma.size()];
  rest /= gamma.size();
  cfg.loss.w_main = w_main[rest % w_main.size()];
  rest /= w_main.size();
  cfg.batch_size = batch_sizes[rest % batch_sizes.size()];
  rest /= batch_sizes.size();
  cfg.base_lr = learning_rates[rest % learning_rates.size()];
  return cfg;
}

std::vector<AuxTask> aux_tasks_for_regime(Regime regime) {
  switch (regime) {
    case Regime::kSingleDataset:
    case Regime::kAllEnglish:
      return {AuxTask::kAnyDysfluency, AuxTask::kGender};
    case Regime::kMultiLingualSmall:
    case Regime::kMultiLingual:
      return {AuxTask::kAnyDysfluency, AuxTask::kGender, AuxTask::kLanguageId};
  }
  return {AuxTask::kAnyDysfluency};
}

SearchResult hyperparameter_search(const SearchSpace& space, std::size_t budget, SearchMode mode, std::uint64_t seed,
                                   const TrainConfig& base, const TrialFn& run_trial) {
  const std::size_t n = space.size();
  if (n == 0) throw InvalidArgument("hyperparameter_search: empty search space");
  if (budget < 1) throw InvalidArgument("hyperparameter_search: budget must be >= 1");

  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), 0);
  if (mode == SearchMode::kRandom || budget < n) {
    // Partial Fisher-Yates: the first `budget` entries are a uniform sample
    // without replacement.
    std::mt19937_64 rng(seed);
    const std::size_t take = std::min(budget, n);
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(indices[i], indices[pick(rng)]);
    }
    indices.resize(take);
  }

  SearchResult out;
  for (std::size_t idx : indices) {
    SearchTrial trial;
    trial.space_index = idx;
    trial.config = space.config_at(idx, base);
    trial.result = run_trial(trial.config);
    out.trials.push_back(trial);
  }
  for (std::size_t i = 1; i < out.trials.size(); ++i) {
    const auto& cand = out.trials[i].result;
    const auto& best = out.trials[out.best_trial].result;
    if (cand.dev_loss < best.dev_loss || (cand.dev_loss == best.dev_loss && cand.dev_macro_f1 > best.dev_macro_f1)) {
      out.best_trial = i;
    }
  }
  out.best = out.trials[out.best_trial].config;
  return out;
}

SearchResult hyperparameter_search(const SearchSpace& space, std::size_t budget, SearchMode mode, std::uint64_t seed,
                                   const TrainConfig& base, const CorpusTable& train_table,
                                   const CorpusTable& dev_table, const HeadConfig& head_cfg) {
  return hyperparameter_search(space, budget, mode, seed, base, [&](const TrainConfig& cfg) {
    const TrainResult r = train(train_table, dev_table, head_cfg, cfg);
    const auto& best = r.history.epochs[static_cast<std::size_t>(r.history.best_epoch - 1)];
    return TrialResult{best.dev_loss, best.dev_macro_f1};
  });
}

}  // namespace dysfluency
