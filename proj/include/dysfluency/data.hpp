#pragma once

// Corpus manifests, cross-corpus merging, speaker-exclusive splits,
// auxiliary-label derivation and feature-file I/O.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dysfluency/labels.hpp"
#include "dysfluency/numerics.hpp"

namespace dysfluency {

enum class Language { kEnglish, kGerman };
enum class Gender { kMale, kFemale, kUnknown };
enum class Split { kUnassigned, kTrain, kDev, kTest };

std::string_view to_string(Language v);
std::string_view to_string(Gender v);
std::string_view to_string(Split v);

struct ClipRecord {
  std::string clip_id;
  std::string dataset;
  Language language = Language::kEnglish;
  std::string speaker_id;
  Gender gender = Gender::kUnknown;
  Split split = Split::kUnassigned;
  std::int64_t duration_ms = 0;
  std::string feature_path;  // relative to CorpusTable::base_dir unless absolute
  LabelVector labels;

  friend bool operator==(const ClipRecord&, const ClipRecord&) = default;
};

struct CorpusTable {
  ClassVocabulary vocabulary;
  std::vector<ClipRecord> records;
  std::filesystem::path base_dir;  // directory feature paths are relative to

  std::filesystem::path feature_file(const ClipRecord& rec) const;
  // Records whose split field equals `split`.
  CorpusTable subset(Split split) const;
};

struct ManifestDiagnostics {
  // Clips labeled No-Df together with a dysfluency. Reported, not rejected.
  std::vector<std::string> ambiguous_no_df;
};

// Column order of the manifest CSV.
const std::vector<std::string>& manifest_header();

CorpusTable load_manifest(const std::filesystem::path& path, ManifestDiagnostics* diagnostics = nullptr);
CorpusTable parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                           ManifestDiagnostics* diagnostics = nullptr);
// Feature paths are written relative to the manifest's directory.
void save_manifest(const CorpusTable& table, const std::filesystem::path& path);
std::string format_manifest(const CorpusTable& table, const std::filesystem::path& manifest_dir);

// Concatenates tables under `target`. Absent classes are filled with 0 and
// clip ids are namespaced as "<dataset>/<clip_id>" (idempotently).
CorpusTable merge_corpora(const std::vector<CorpusTable>& tables, const ClassVocabulary& target);

struct SplitRatios {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

// Assigns whole speakers to partitions, largest speaker first (seeded
// tie-break), each to the partition furthest below its clip-count target.
CorpusTable speaker_exclusive_split(const CorpusTable& table, const SplitRatios& ratios, std::uint64_t seed);

enum class AuxTask { kAnyDysfluency, kGender, kLanguageId };
std::string_view to_string(AuxTask task);
AuxTask aux_task_from_string(std::string_view name);

struct AuxLabels {
  std::vector<std::optional<int>> labels;  // per record; nullopt = excluded from aux loss
  std::size_t excluded = 0;
};

AuxLabels derive_aux_labels(const CorpusTable& table, AuxTask task);
int any_dysfluency(const LabelVector& labels, const ClassVocabulary& vocab);

// "DYSF" feature files: magic, u16 version = 1, u16 reserved = 0, u32 t,
// u32 d, then t*d little-endian float32 values, frame-major.
using FloatFeatures = MatrixX<float>;
void write_feature_file(const std::filesystem::path& path, const FloatFeatures& features);
void write_feature_file(const std::filesystem::path& path, const Matrix& features);
FloatFeatures read_feature_file_f32(const std::filesystem::path& path, std::optional<int> expected_dim = std::nullopt);
Matrix read_feature_file(const std::filesystem::path& path, std::optional<int> expected_dim = std::nullopt);

}  // namespace dysfluency
