#pragma once

// Seeded synthetic corpora with planted multi-label structure: every active
// label injects its prototype direction into a random contiguous frame span,
// on top of a per-speaker bias and isotropic frame noise.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dysfluency/data.hpp"

namespace dysfluency {

struct LabelPairRate {
  std::string first;
  std::string second;
  double rate = 0.0;  // probability that a clip carries exactly this pair
};

struct SynthConfig {
  int num_speakers = 50;
  int clips_per_speaker = 100;
  int feature_dim = 8;
  int frames = 150;
  ClassVocabulary vocabulary = ClassVocabulary::full7();
  // Marginal frequency per class in vocabulary order; the No-Df entry is
  // ignored (No-Df is set exactly when nothing else is).
  std::vector<double> label_priors;
  std::vector<LabelPairRate> co_occurrence;
  // One row per vocabulary class (the No-Df row is unused), unit norm. Empty:
  // drawn from the seed as a shared direction plus mutually orthogonal class
  // parts when the dimension allows.
  Matrix prototypes;
  // Cosine between each generated prototype and a direction common to all
  // classes (dysfluent frames share part of their deviation from fluent ones).
  double shared_component = 0.7;
  double amplitude = 12.0;
  double noise_std = 1.0;
  double speaker_bias_std = 0.3;
  // Norm of a mean vector shared by every frame of the corpus, the way
  // pretrained features are not zero-centred.
  double feature_offset = 6.0;
  int span_min = 15;
  int span_max = 40;
  // Share of German speakers; nullopt means all German for vocabularies with
  // Mod and all English otherwise. English clips never carry Mod.
  std::optional<double> german_fraction;
  bool allow_no_df = true;
  std::string dataset = "synth";
  std::uint64_t seed = 0;

  void validate() const;
};

// Defaults for a vocabulary: roughly a quarter of clips carry two labels,
// with Int&Wd, Int&Snd and Pro&Bl the most frequent pairs.
SynthConfig default_synth_config(const ClassVocabulary& vocab = ClassVocabulary::full7());

// Noisier variant on which a trained head lands at a middling exact-match
// ratio.
SynthConfig hard_synth_config(const ClassVocabulary& vocab = ClassVocabulary::full7());

// Rescales the pair rates so their sum equals `fraction`, keeping the
// single-label rates fixed; priors are updated to stay consistent.
void set_multi_label_fraction(SynthConfig& cfg, double fraction);

struct SynthCorpus {
  CorpusTable table;  // feature paths are "features/<clip_id>.dysf"
  std::vector<FloatFeatures> features;
  Matrix prototypes;
};

SynthCorpus generate(const SynthConfig& cfg);

// Writes manifest.csv and features/ under `out_dir`; returns the loaded table.
CorpusTable write_synthetic_corpus(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace dysfluency
