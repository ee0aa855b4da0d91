#include "dysfluency/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "dysfluency/error.hpp"

namespace dysfluency {

std::string_view to_string(Language v) { return v == Language::kGerman ? "de" : "en"; }

std::string_view to_string(Gender v) {
  switch (v) {
    case Gender::kMale: return "m";
    case Gender::kFemale: return "f";
    case Gender::kUnknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(Split v) {
  switch (v) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
    case Split::kUnassigned: return "";
  }
  return "";
}

std::string_view to_string(AuxTask task) {
  switch (task) {
    case AuxTask::kAnyDysfluency: return "any";
    case AuxTask::kGender: return "gender";
    case AuxTask::kLanguageId: return "language";
  }
  return "any";
}

AuxTask aux_task_from_string(std::string_view name) {
  if (name == "any" || name == "any_dysfluency") return AuxTask::kAnyDysfluency;
  if (name == "gender") return AuxTask::kGender;
  if (name == "language" || name == "language_id") return AuxTask::kLanguageId;
  throw InvalidArgument("unknown auxiliary task '" + std::string(name) + "'");
}

std::filesystem::path CorpusTable::feature_file(const ClipRecord& rec) const {
  const std::filesystem::path p(rec.feature_path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

CorpusTable CorpusTable::subset(Split split) const {
  CorpusTable out{vocabulary, {}, base_dir};
  std::copy_if(records.begin(), records.end(), std::back_inserter(out.records),
               [split](const ClipRecord& r) { return r.split == split; });
  return out;
}

const std::vector<std::string>& manifest_header() {
  static const std::vector<std::string> header{"clip_id",      "dataset",      "language", "speaker_id", "gender",
                                               "split",        "duration_ms",  "feature_path", "Mod",    "Bl",
                                               "Int",          "Pro",          "Snd",      "Wd",         "NoDf"};
  return header;
}

namespace {

constexpr std::size_t kFirstLabelColumn = 8;
constexpr std::size_t kColumnCount = 15;

// Manifest label columns, in FULL7 vocabulary order.
const std::vector<std::string>& label_class_names() {
  static const std::vector<std::string> names = ClassVocabulary::full7().names();
  return names;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.emplace_back(line.substr(start));
      break;
    }
    cells.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

int parse_bit(const std::string& cell, std::size_t row, const std::string& column) {
  if (cell == "0") return 0;
  if (cell == "1") return 1;
  throw ManifestError(row, "label column " + column + " must be 0 or 1, got '" + cell + "'");
}

bool is_dysfluency_class(const std::string& name) {
  return name == "Bl" || name == "Int" || name == "Pro" || name == "Snd" || name == "Wd";
}

}  // namespace

int any_dysfluency(const LabelVector& labels, const ClassVocabulary& vocab) {
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (labels[i] && is_dysfluency_class(vocab.names()[i])) return 1;
  }
  return 0;
}

CorpusTable parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                           ManifestDiagnostics* diagnostics) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1 && line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
    if (!header_seen) {
      if (split_csv_line(line) != manifest_header()) throw ManifestError(line_no, "header does not match manifest schema");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != kColumnCount) {
      throw ManifestError(line_no, "expected " + std::to_string(kColumnCount) + " cells, got " +
                                       std::to_string(cells.size()));
    }
    rows.emplace_back(line_no, std::move(cells));
  }
  if (!header_seen) throw ManifestError(1, "missing header");

  const bool full7 = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return !r.second[kFirstLabelColumn].empty(); });
  CorpusTable table;
  table.vocabulary = full7 ? ClassVocabulary::full7() : ClassVocabulary::en6();
  table.base_dir = base_dir;
  std::unordered_set<std::string> ids;
  const auto& header = manifest_header();
  const auto no_df = *table.vocabulary.no_dysfluency_index();

  for (const auto& [row, cells] : rows) {
    ClipRecord rec;
    rec.clip_id = cells[0];
    if (rec.clip_id.empty()) throw ManifestError(row, "empty clip_id");
    if (!ids.insert(rec.clip_id).second) throw ManifestError(row, "duplicate clip_id '" + rec.clip_id + "'");
    rec.dataset = cells[1];
    if (cells[2] == "en") {
      rec.language = Language::kEnglish;
    } else if (cells[2] == "de") {
      rec.language = Language::kGerman;
    } else {
      throw ManifestError(row, "unknown language code '" + cells[2] + "'");
    }
    rec.speaker_id = cells[3];
    if (rec.speaker_id.empty()) throw ManifestError(row, "empty speaker_id");
    if (cells[4] == "m") {
      rec.gender = Gender::kMale;
    } else if (cells[4] == "f") {
      rec.gender = Gender::kFemale;
    } else if (cells[4] == "unknown" || cells[4].empty()) {
      rec.gender = Gender::kUnknown;
    } else {
      throw ManifestError(row, "unknown gender '" + cells[4] + "'");
    }
    if (cells[5].empty()) {
      rec.split = Split::kUnassigned;
    } else if (cells[5] == "train") {
      rec.split = Split::kTrain;
    } else if (cells[5] == "dev") {
      rec.split = Split::kDev;
    } else if (cells[5] == "test") {
      rec.split = Split::kTest;
    } else {
      throw ManifestError(row, "unknown split '" + cells[5] + "'");
    }
    const auto& dur = cells[6];
    auto [ptr, ec] = std::from_chars(dur.data(), dur.data() + dur.size(), rec.duration_ms);
    if (ec != std::errc() || ptr != dur.data() + dur.size() || rec.duration_ms < 0) {
      throw ManifestError(row, "bad duration_ms '" + dur + "'");
    }
    rec.feature_path = cells[7];
    if (rec.feature_path.empty()) throw ManifestError(row, "empty feature_path");

    rec.labels = LabelVector(table.vocabulary.size());
    const std::size_t first = full7 ? kFirstLabelColumn : kFirstLabelColumn + 1;
    if (full7 && cells[kFirstLabelColumn].empty()) throw ManifestError(row, "Mod cell empty in a seven-class manifest");
    for (std::size_t col = first; col < kColumnCount; ++col) {
      rec.labels.set(col - first, parse_bit(cells[col], row, header[col]) == 1);
    }
    if (full7 && rec.language == Language::kEnglish && rec.labels[0]) {
      throw ManifestError(row, "English clip carries a Mod label");
    }
    if (diagnostics != nullptr && rec.labels[no_df] && any_dysfluency(rec.labels, table.vocabulary)) {
      diagnostics->ambiguous_no_df.push_back(rec.clip_id);
    }
    table.records.push_back(std::move(rec));
  }
  return table;
}

CorpusTable load_manifest(const std::filesystem::path& path, ManifestDiagnostics* diagnostics) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const auto base = std::filesystem::absolute(path).parent_path();
  return parse_manifest(buf.str(), base, diagnostics);
}

namespace {

bool same_directory(const std::filesystem::path& a, const std::filesystem::path& b) {
  if (a.empty() || b.empty()) return a.empty() && b.empty();
  std::error_code ec;
  const auto ca = std::filesystem::weakly_canonical(std::filesystem::absolute(a), ec);
  const auto cb = std::filesystem::weakly_canonical(std::filesystem::absolute(b), ec);
  return ca == cb;
}

std::string relative_feature_path(const CorpusTable& table, const ClipRecord& rec,
                                  const std::filesystem::path& manifest_dir) {
  if (same_directory(table.base_dir, manifest_dir)) return rec.feature_path;
  std::filesystem::path full = table.feature_file(rec);
  if (std::filesystem::path(rec.feature_path).is_absolute()) return rec.feature_path;
  full = std::filesystem::absolute(full).lexically_normal();
  const auto rel = full.lexically_relative(std::filesystem::absolute(manifest_dir).lexically_normal());
  return rel.empty() ? full.generic_string() : rel.generic_string();
}

}  // namespace

std::string format_manifest(const CorpusTable& table, const std::filesystem::path& manifest_dir) {
  std::ostringstream out;
  const auto& header = manifest_header();
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  const bool full7 = table.vocabulary.modified_index().has_value();
  for (const auto& rec : table.records) {
    out << rec.clip_id << ',' << rec.dataset << ',' << to_string(rec.language) << ',' << rec.speaker_id << ','
        << to_string(rec.gender) << ',' << to_string(rec.split) << ',' << rec.duration_ms << ','
        << relative_feature_path(table, rec, manifest_dir);
    for (const auto& name : label_class_names()) {
      out << ',';
      const auto idx = table.vocabulary.index_of(name);
      if (idx) {
        out << (rec.labels[*idx] ? '1' : '0');
      } else if (full7 || name != "Mod") {
        throw InvalidArgument("format_manifest: vocabulary lacks class " + name);
      }
    }
    out << '\n';
  }
  return out.str();
}

void save_manifest(const CorpusTable& table, const std::filesystem::path& path) {
  const auto dir = std::filesystem::absolute(path).parent_path();
  const std::string text = format_manifest(table, dir);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out << text;
}

CorpusTable merge_corpora(const std::vector<CorpusTable>& tables, const ClassVocabulary& target) {
  CorpusTable merged;
  merged.vocabulary = target;
  std::unordered_set<std::string> ids;
  for (const auto& table : tables) {
    if (!target.contains(table.vocabulary)) {
      throw InvalidArgument("merge_corpora: source vocabulary does not embed in the target vocabulary");
    }
    std::vector<std::size_t> remap(table.vocabulary.size());
    for (std::size_t i = 0; i < remap.size(); ++i) remap[i] = *target.index_of(table.vocabulary.names()[i]);
    for (const auto& rec : table.records) {
      ClipRecord out = rec;
      const std::string prefix = rec.dataset + "/";
      if (rec.clip_id.rfind(prefix, 0) != 0) out.clip_id = prefix + rec.clip_id;
      if (!ids.insert(out.clip_id).second) {
        throw InvalidArgument("merge_corpora: duplicate clip id '" + out.clip_id + "' after namespacing");
      }
      out.feature_path = table.feature_file(rec).lexically_normal().generic_string();
      out.labels = LabelVector(target.size());
      for (std::size_t i = 0; i < remap.size(); ++i) out.labels.set(remap[i], rec.labels[i]);
      merged.records.push_back(std::move(out));
    }
  }
  return merged;
}

CorpusTable speaker_exclusive_split(const CorpusTable& table, const SplitRatios& ratios, std::uint64_t seed) {
  const std::array<double, 3> r{ratios.train, ratios.dev, ratios.test};
  if (std::any_of(r.begin(), r.end(), [](double x) { return !(x > 0.0); }) ||
      std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    throw InvalidArgument("split: ratios must be positive and sum to 1");
  }

  // Speakers are keyed by (dataset, speaker_id), in first-appearance order.
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::vector<std::size_t> counts;
  std::vector<std::size_t> speaker_of(table.records.size());
  for (std::size_t i = 0; i < table.records.size(); ++i) {
    const auto key = std::make_pair(table.records[i].dataset, table.records[i].speaker_id);
    auto [it, inserted] = index.emplace(key, counts.size());
    if (inserted) counts.push_back(0);
    ++counts[it->second];
    speaker_of[i] = it->second;
  }
  if (counts.size() < 3) {
    throw InvalidArgument("split: need at least 3 distinct speakers, got " + std::to_string(counts.size()));
  }

  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });

  const double total = static_cast<double>(table.records.size());
  std::array<double, 3> assigned{0.0, 0.0, 0.0};
  std::array<std::size_t, 3> speakers_in{0, 0, 0};
  std::vector<int> partition(counts.size(), 0);
  for (std::size_t n = 0; n < order.size(); ++n) {
    const std::size_t spk = order[n];
    const std::size_t remaining = order.size() - n;
    const auto empty = static_cast<std::size_t>(std::count(speakers_in.begin(), speakers_in.end(), 0));
    int best = -1;
    double best_deficit = 0.0;
    for (int k = 0; k < 3; ++k) {
      // Keep every partition populated when speakers run short.
      if (remaining <= empty && speakers_in[static_cast<std::size_t>(k)] != 0) continue;
      const double deficit = r[static_cast<std::size_t>(k)] * total - assigned[static_cast<std::size_t>(k)];
      if (best < 0 || deficit > best_deficit) {
        best = k;
        best_deficit = deficit;
      }
    }
    partition[spk] = best;
    assigned[static_cast<std::size_t>(best)] += static_cast<double>(counts[spk]);
    ++speakers_in[static_cast<std::size_t>(best)];
  }

  CorpusTable out = table;
  constexpr std::array<Split, 3> kSplits{Split::kTrain, Split::kDev, Split::kTest};
  for (std::size_t i = 0; i < out.records.size(); ++i) {
    out.records[i].split = kSplits[static_cast<std::size_t>(partition[speaker_of[i]])];
  }
  return out;
}

AuxLabels derive_aux_labels(const CorpusTable& table, AuxTask task) {
  AuxLabels out;
  out.labels.reserve(table.records.size());
  for (const auto& rec : table.records) {
    switch (task) {
      case AuxTask::kAnyDysfluency:
        out.labels.emplace_back(any_dysfluency(rec.labels, table.vocabulary));
        break;
      case AuxTask::kGender:
        if (rec.gender == Gender::kUnknown) {
          out.labels.emplace_back(std::nullopt);
          ++out.excluded;
        } else {
          out.labels.emplace_back(rec.gender == Gender::kFemale ? 1 : 0);
        }
        break;
      case AuxTask::kLanguageId:
        out.labels.emplace_back(rec.language == Language::kGerman ? 1 : 0);
        break;
    }
  }
  return out;
}

}  // namespace dysfluency
