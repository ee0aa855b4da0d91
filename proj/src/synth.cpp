#include "dysfluency/synth.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <random>

#include "dysfluency/error.hpp"

namespace dysfluency {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0xD6E8FEB86659FD93ULL));
}

// Single-label and pair probabilities of the default corpus.
const std::map<std::string, double>& default_singles() {
  static const std::map<std::string, double> m{{"Mod", 0.10}, {"Bl", 0.08}, {"Int", 0.08},
                                               {"Pro", 0.08}, {"Snd", 0.08}, {"Wd", 0.08}};
  return m;
}

const std::vector<LabelPairRate>& default_pairs() {
  static const std::vector<LabelPairRate> p{
      {"Int", "Wd", 0.08}, {"Int", "Snd", 0.07}, {"Pro", "Bl", 0.05}, {"Mod", "Snd", 0.03}, {"Bl", "Snd", 0.02}};
  return p;
}

std::size_t class_index(const ClassVocabulary& vocab, const std::string& name) {
  const auto idx = vocab.index_of(name);
  if (!idx) throw InvalidArgument("synth: unknown class '" + name + "'");
  return *idx;
}

// Probability of each single-label outcome, derived from priors minus the
// pair mass each class takes part in.
std::vector<double> single_rates(const SynthConfig& cfg) {
  std::vector<double> singles(cfg.vocabulary.size(), 0.0);
  const auto no_df = cfg.vocabulary.no_dysfluency_index();
  for (std::size_t c = 0; c < singles.size(); ++c) {
    if (no_df && c == *no_df) continue;
    singles[c] = cfg.label_priors[c];
  }
  for (const auto& p : cfg.co_occurrence) {
    singles[class_index(cfg.vocabulary, p.first)] -= p.rate;
    singles[class_index(cfg.vocabulary, p.second)] -= p.rate;
  }
  return singles;
}

struct Outcome {
  std::vector<std::size_t> classes;
  double probability = 0.0;
};

// Categorical distribution over label sets; Mod outcomes dropped for
// English speakers (their mass moves to "no label").
std::vector<Outcome> outcome_table(const SynthConfig& cfg, bool english) {
  const auto singles = single_rates(cfg);
  const auto mod = cfg.vocabulary.modified_index();
  const auto no_df = cfg.vocabulary.no_dysfluency_index();
  std::vector<Outcome> out;
  double used = 0.0;
  for (std::size_t c = 0; c < singles.size(); ++c) {
    if ((no_df && c == *no_df) || singles[c] <= 0.0) continue;
    if (english && mod && c == *mod) continue;
    out.push_back({{c}, singles[c]});
    used += singles[c];
  }
  for (const auto& p : cfg.co_occurrence) {
    const auto a = class_index(cfg.vocabulary, p.first);
    const auto b = class_index(cfg.vocabulary, p.second);
    if (p.rate <= 0.0) continue;
    if (english && mod && (a == *mod || b == *mod)) continue;
    out.push_back({{std::min(a, b), std::max(a, b)}, p.rate});
    used += p.rate;
  }
  if (1.0 - used > 1e-12) out.push_back({{}, 1.0 - used});
  return out;
}

Matrix make_prototypes(const SynthConfig& cfg) {
  if (cfg.prototypes.size() != 0) return cfg.prototypes;
  std::mt19937_64 rng(derive_seed(cfg.seed, 0xC0FFEE));
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index rows = static_cast<Eigen::Index>(cfg.vocabulary.size());
  // Row 0 is the direction shared by all classes, rows 1.. the class-specific
  // parts. Gram-Schmidt runs over as many rows as the dimension allows.
  Matrix basis(rows + 1, cfg.feature_dim);
  for (Eigen::Index i = 0; i < basis.size(); ++i) basis.data()[i] = normal(rng);
  for (Eigen::Index r = 0; r <= rows; ++r) {
    if (r < cfg.feature_dim) {
      for (Eigen::Index q = 0; q < r; ++q) basis.row(r) -= basis.row(r).dot(basis.row(q)) * basis.row(q);
    }
    basis.row(r).normalize();
  }
  const double shared = cfg.shared_component;
  Matrix protos(rows, cfg.feature_dim);
  for (Eigen::Index r = 0; r < rows; ++r) {
    protos.row(r) = shared * basis.row(0) + std::sqrt(1.0 - shared * shared) * basis.row(r + 1);
    protos.row(r).normalize();
  }
  return protos;
}

std::string clip_name(int speaker, int clip) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "spk%03d_clip%04d", speaker, clip);
  return buf;
}

std::string speaker_name(int speaker) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "spk%03d", speaker);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_speakers < 1 || clips_per_speaker < 1 || feature_dim < 1 || frames < 1) {
    throw InvalidArgument("synth config: counts and dimensions must be >= 1");
  }
  if (label_priors.size() != vocabulary.size()) {
    throw InvalidArgument("synth config: need one prior per vocabulary class");
  }
  for (double p : label_priors) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("synth config: priors must lie in [0,1]");
  }
  if (!(noise_std >= 0.0) || !(speaker_bias_std >= 0.0) || !(amplitude >= 0.0) || !(feature_offset >= 0.0)) {
    throw InvalidArgument("synth config: noise_std, speaker_bias_std, amplitude and feature_offset must be >= 0");
  }
  if (!(shared_component >= 0.0 && shared_component < 1.0)) {
    throw InvalidArgument("synth config: shared_component must be in [0, 1)");
  }
  if (span_min < 1 || span_max < span_min || span_max > frames) {
    throw InvalidArgument("synth config: need 1 <= span_min <= span_max <= frames");
  }
  if (german_fraction && !(*german_fraction >= 0.0 && *german_fraction <= 1.0)) {
    throw InvalidArgument("synth config: german_fraction must lie in [0,1]");
  }
  const auto no_df = vocabulary.no_dysfluency_index();
  if (!no_df) throw InvalidArgument("synth config: vocabulary needs a No-Df class");
  for (const auto& p : co_occurrence) {
    if (p.first == p.second) throw InvalidArgument("synth config: pair with identical labels");
    if (class_index(vocabulary, p.first) == *no_df || class_index(vocabulary, p.second) == *no_df) {
      throw InvalidArgument("synth config: No-Df cannot co-occur");
    }
    if (!(p.rate >= 0.0 && p.rate <= 1.0)) throw InvalidArgument("synth config: pair rate must lie in [0,1]");
  }
  double used = 0.0;
  const auto singles = single_rates(*this);
  for (std::size_t c = 0; c < singles.size(); ++c) {
    if (c == *no_df) continue;
    if (singles[c] < -1e-12) {
      throw InvalidArgument("synth config: prior of " + vocabulary.names()[c] + " is below its pair mass");
    }
    used += singles[c];
  }
  for (const auto& p : co_occurrence) used += p.rate;
  if (used > 1.0 + 1e-9) throw InvalidArgument("synth config: label probabilities exceed 1");
  if (!allow_no_df && 1.0 - used > 1e-9) {
    throw InvalidArgument("synth config: priors leave clips without labels but No-Df is disabled");
  }
  if (prototypes.size() != 0) {
    if (prototypes.rows() != static_cast<Eigen::Index>(vocabulary.size()) || prototypes.cols() != feature_dim) {
      throw InvalidArgument("synth config: prototypes must be (classes x feature_dim)");
    }
    for (Eigen::Index a = 0; a < prototypes.rows(); ++a) {
      if (static_cast<std::size_t>(a) == *no_df) continue;
      for (Eigen::Index b = a + 1; b < prototypes.rows(); ++b) {
        if (static_cast<std::size_t>(b) == *no_df) continue;
        const double na = prototypes.row(a).norm();
        const double nb = prototypes.row(b).norm();
        if (na == 0.0 || nb == 0.0 || std::abs(prototypes.row(a).dot(prototypes.row(b))) / (na * nb) > 1.0 - 1e-9) {
          throw InvalidArgument("synth config: prototypes must be nonzero and pairwise non-parallel");
        }
      }
    }
  }
}

SynthConfig default_synth_config(const ClassVocabulary& vocab) {
  SynthConfig cfg;
  cfg.vocabulary = vocab;
  cfg.label_priors.assign(vocab.size(), 0.0);
  for (const auto& [name, rate] : default_singles()) {
    if (auto i = vocab.index_of(name)) cfg.label_priors[*i] += rate;
  }
  for (const auto& p : default_pairs()) {
    const auto a = vocab.index_of(p.first);
    const auto b = vocab.index_of(p.second);
    if (!a || !b) continue;
    cfg.co_occurrence.push_back(p);
    cfg.label_priors[*a] += p.rate;
    cfg.label_priors[*b] += p.rate;
  }
  return cfg;
}

SynthConfig hard_synth_config(const ClassVocabulary& vocab) {
  SynthConfig cfg = default_synth_config(vocab);
  cfg.noise_std = 4.5;
  return cfg;
}

void set_multi_label_fraction(SynthConfig& cfg, double fraction) {
  double total = 0.0;
  for (const auto& p : cfg.co_occurrence) total += p.rate;
  if (total <= 0.0) throw InvalidArgument("set_multi_label_fraction: configuration has no label pairs");
  const auto singles = single_rates(cfg);
  const double factor = fraction / total;
  for (auto& p : cfg.co_occurrence) p.rate *= factor;
  const auto no_df = cfg.vocabulary.no_dysfluency_index();
  for (std::size_t c = 0; c < cfg.label_priors.size(); ++c) {
    cfg.label_priors[c] = (no_df && c == *no_df) ? 0.0 : singles[c];
  }
  for (const auto& p : cfg.co_occurrence) {
    cfg.label_priors[class_index(cfg.vocabulary, p.first)] += p.rate;
    cfg.label_priors[class_index(cfg.vocabulary, p.second)] += p.rate;
  }
  cfg.validate();
}

SynthCorpus generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthCorpus out;
  out.prototypes = make_prototypes(cfg);
  out.table.vocabulary = cfg.vocabulary;
  const bool has_mod = cfg.vocabulary.modified_index().has_value();
  const double german = cfg.german_fraction.value_or(has_mod ? 1.0 : 0.0);
  const auto outcomes_en = outcome_table(cfg, true);
  const auto outcomes_de = outcome_table(cfg, false);
  const std::size_t no_df = *cfg.vocabulary.no_dysfluency_index();
  const Eigen::Index d = cfg.feature_dim;
  const Eigen::Index t = cfg.frames;
  Eigen::RowVectorXd offset = Eigen::RowVectorXd::Zero(d);
  if (cfg.feature_offset > 0.0) {
    std::mt19937_64 offset_rng(derive_seed(cfg.seed, 0x0FF5E7));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index j = 0; j < d; ++j) offset(j) = normal(offset_rng);
    offset *= cfg.feature_offset / offset.norm();
  }

  out.table.records.reserve(static_cast<std::size_t>(cfg.num_speakers) * static_cast<std::size_t>(cfg.clips_per_speaker));
  out.features.reserve(out.table.records.capacity());
  for (int s = 0; s < cfg.num_speakers; ++s) {
    std::mt19937_64 spk_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(s) + 1));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::RowVectorXd bias(d);
    for (Eigen::Index j = 0; j < d; ++j) bias(j) = cfg.speaker_bias_std * normal(spk_rng);
    const Gender gender = unit(spk_rng) < 0.5 ? Gender::kMale : Gender::kFemale;
    const Language language = unit(spk_rng) < german ? Language::kGerman : Language::kEnglish;
    const auto& outcomes = language == Language::kEnglish ? outcomes_en : outcomes_de;

    for (int c = 0; c < cfg.clips_per_speaker; ++c) {
      std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(s) + 1, static_cast<std::uint64_t>(c) + 1));
      ClipRecord rec;
      rec.clip_id = clip_name(s, c);
      rec.dataset = cfg.dataset;
      rec.language = language;
      rec.speaker_id = speaker_name(s);
      rec.gender = gender;
      rec.duration_ms = static_cast<std::int64_t>(cfg.frames) * 20;
      rec.feature_path = "features/" + rec.clip_id + ".dysf";
      rec.labels = LabelVector(cfg.vocabulary.size());

      double u = unit(rng);
      const Outcome* chosen = &outcomes.back();
      for (const auto& o : outcomes) {
        if (u < o.probability) {
          chosen = &o;
          break;
        }
        u -= o.probability;
      }
      for (std::size_t cls : chosen->classes) rec.labels.set(cls);
      if (chosen->classes.empty()) rec.labels.set(no_df);

      Matrix frames(t, d);
      for (Eigen::Index i = 0; i < frames.size(); ++i) frames.data()[i] = cfg.noise_std * normal(rng);
      frames.rowwise() += bias + offset;
      std::uniform_int_distribution<int> span_len(cfg.span_min, cfg.span_max);
      for (std::size_t cls : chosen->classes) {
        const int len = span_len(rng);
        std::uniform_int_distribution<int> start_dist(0, cfg.frames - len);
        const int start = start_dist(rng);
        frames.middleRows(start, len).rowwise() += cfg.amplitude * out.prototypes.row(static_cast<Eigen::Index>(cls));
      }
      out.features.push_back(frames.cast<float>());
      out.table.records.push_back(std::move(rec));
    }
  }
  return out;
}

CorpusTable write_synthetic_corpus(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  SynthCorpus corpus = generate(cfg);
  std::filesystem::create_directories(out_dir / "features");
  for (std::size_t i = 0; i < corpus.table.records.size(); ++i) {
    write_feature_file(out_dir / corpus.table.records[i].feature_path, corpus.features[i]);
  }
  corpus.table.base_dir = std::filesystem::absolute(out_dir);
  save_manifest(corpus.table, out_dir / "manifest.csv");
  return corpus.table;
}

}  // namespace dysfluency
