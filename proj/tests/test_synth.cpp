#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dysfluency/numerics.hpp"
#include "dysfluency/synth.hpp"

using namespace dysfluency;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dysfluency_test_synth_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

SynthConfig tiny(std::uint64_t seed) {
  SynthConfig c = default_synth_config();
  c.num_speakers = 4;
  c.clips_per_speaker = 6;
  c.frames = 40;
  c.span_min = 5;
  c.span_max = 10;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("default configuration") {
  const SynthConfig c = default_synth_config();
  CHECK_NOTHROW(c.validate());
  const auto& v = c.vocabulary;
  double pairs = 0.0;
  for (const auto& p : c.co_occurrence) pairs += p.rate;
  CHECK(pairs == doctest::Approx(0.25));
  // The three most frequent pairs.
  CHECK(c.co_occurrence[0].first == "Int");
  CHECK(c.co_occurrence[0].second == "Wd");
  CHECK(c.co_occurrence[1].second == "Snd");
  CHECK(c.co_occurrence[2].first == "Pro");
  CHECK(c.label_priors[*v.no_dysfluency_index()] == 0.0);

  const SynthConfig en = default_synth_config(ClassVocabulary::en6());
  CHECK_NOTHROW(en.validate());
  for (const auto& p : en.co_occurrence) {
    CHECK(p.first != "Mod");
    CHECK(p.second != "Mod");
  }
  CHECK(hard_synth_config().noise_std > c.noise_std);
}

TEST_CASE("generation is a pure function of the seed") {
  const auto a = generate(tiny(9));
  const auto b = generate(tiny(9));
  const auto c = generate(tiny(10));
  REQUIRE(a.features.size() == 24);
  CHECK(a.table.records == b.table.records);
  for (std::size_t i = 0; i < a.features.size(); ++i) CHECK(a.features[i] == b.features[i]);
  CHECK(a.features[0] != c.features[0]);

  const auto d1 = scratch("det1");
  const auto d2 = scratch("det2");
  write_synthetic_corpus(tiny(9), d1);
  write_synthetic_corpus(tiny(9), d2);
  CHECK(slurp(d1 / "manifest.csv") == slurp(d2 / "manifest.csv"));
  for (const auto& rec : a.table.records) {
    CHECK(slurp(d1 / rec.feature_path) == slurp(d2 / rec.feature_path));
  }
  const CorpusTable loaded = load_manifest(d1 / "manifest.csv");
  CHECK(loaded.records == a.table.records);
  CHECK(read_feature_file_f32(loaded.feature_file(loaded.records[3]), 8) == a.features[3]);
}

TEST_CASE("label structure") {
  SynthConfig c = default_synth_config();
  c.num_speakers = 100;
  c.clips_per_speaker = 100;
  c.frames = 16;
  c.span_min = 2;
  c.span_max = 4;
  c.seed = 3;
  const auto corpus = generate(c);
  const auto& v = c.vocabulary;
  const std::size_t no_df = *v.no_dysfluency_index();
  std::vector<double> freq(v.size(), 0.0);
  double multi = 0.0, none = 0.0;
  for (const auto& rec : corpus.table.records) {
    const std::size_t n = rec.labels.count();
    // No-Df is set exactly when nothing else is.
    CHECK(rec.labels[no_df] == (n == 1 && rec.labels[no_df]));
    CHECK(n >= 1);
    CHECK(n <= 2);
    for (std::size_t k = 0; k < v.size(); ++k) freq[k] += rec.labels[k];
    multi += n == 2;
    none += rec.labels[no_df];
    CHECK(rec.language == Language::kGerman);
  }
  const double total = static_cast<double>(corpus.table.records.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k == no_df) continue;
    CHECK(std::abs(freq[k] / total - c.label_priors[k]) <= 0.02);
  }
  CHECK(std::abs(multi / total - 0.25) <= 0.02);
  CHECK(std::abs(none / total - 0.25) <= 0.02);
}

TEST_CASE("English speakers never carry Mod") {
  SynthConfig c = default_synth_config();
  c.num_speakers = 40;
  c.clips_per_speaker = 30;
  c.frames = 10;
  c.span_min = 1;
  c.span_max = 3;
  c.german_fraction = 0.5;
  const auto corpus = generate(c);
  const std::size_t mod = *c.vocabulary.modified_index();
  std::size_t english = 0, german_mod = 0;
  for (const auto& rec : corpus.table.records) {
    if (rec.language == Language::kEnglish) {
      ++english;
      CHECK_FALSE(rec.labels[mod]);
    } else {
      german_mod += rec.labels[mod];
    }
  }
  CHECK(english > 0);
  CHECK(german_mod > 0);
}

TEST_CASE("noise-free clip is the prototype inside one span") {
  SynthConfig c = default_synth_config();
  c.num_speakers = 1;
  c.clips_per_speaker = 50;
  c.feature_dim = 4;
  c.frames = 30;
  c.span_min = 6;
  c.span_max = 9;
  c.noise_std = 0.0;
  c.speaker_bias_std = 0.0;
  c.feature_offset = 0.0;
  c.amplitude = 2.0;
  c.prototypes = Matrix::Zero(7, 4);
  for (int r = 0; r < 7; ++r) c.prototypes(r, r % 4) = 1.0 + r / 4;  // non-parallel rows
  c.prototypes(4, 1) = 0.5;
  c.prototypes(5, 2) = 0.5;
  c.prototypes(6, 3) = 0.5;
  const auto corpus = generate(c);
  CHECK(corpus.prototypes == c.prototypes);
  bool saw_single = false;
  for (std::size_t i = 0; i < corpus.features.size(); ++i) {
    const auto& rec = corpus.table.records[i];
    const Matrix f = corpus.features[i].cast<double>();
    if (rec.labels[*c.vocabulary.no_dysfluency_index()]) {
      CHECK(f.isZero());
      continue;
    }
    if (rec.labels.count() != 1) continue;
    saw_single = true;
    std::size_t cls = 0;
    while (!rec.labels[cls]) ++cls;
    const Eigen::RowVectorXd expect = 2.0 * c.prototypes.row(static_cast<Eigen::Index>(cls));
    int active = 0, first = -1, last = -1;
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
      if (f.row(r).isZero()) continue;
      CHECK((f.row(r) - expect).norm() < 1e-6);
      if (first < 0) first = static_cast<int>(r);
      last = static_cast<int>(r);
      ++active;
    }
    CHECK(active >= 6);
    CHECK(active <= 9);
    CHECK(last - first + 1 == active);  // contiguous
    const Matrix mean = mean_over_rows(f);
    CHECK((mean - (static_cast<double>(active) / 30.0) * expect).norm() < 1e-6);
  }
  CHECK(saw_single);
}

TEST_CASE("generated prototypes") {
  const auto corpus = generate(tiny(1));
  const Matrix& p = corpus.prototypes;
  REQUIRE(p.rows() == 7);
  for (Eigen::Index r = 0; r < 7; ++r) CHECK(p.row(r).norm() == doctest::Approx(1.0));
  // Pairwise cosine is shared^2 when the class parts are orthogonal (d >= 8).
  for (Eigen::Index a = 0; a < 7; ++a) {
    for (Eigen::Index b = a + 1; b < 7; ++b) CHECK(p.row(a).dot(p.row(b)) == doctest::Approx(0.49).epsilon(1e-9));
  }
}

TEST_CASE("multi-label fraction") {
  SynthConfig c = default_synth_config();
  const auto before = c.label_priors;
  set_multi_label_fraction(c, 0.10);
  double pairs = 0.0;
  for (const auto& p : c.co_occurrence) pairs += p.rate;
  CHECK(pairs == doctest::Approx(0.10));
  // Int takes part in two pairs (0.08 + 0.07 originally, scaled by 0.4).
  const std::size_t intc = *c.vocabulary.index_of("Int");
  CHECK(c.label_priors[intc] == doctest::Approx(before[intc] - 0.15 + 0.06));
  CHECK_THROWS_AS(set_multi_label_fraction(c, 0.9), InvalidArgument);
  SynthConfig none = default_synth_config();
  none.co_occurrence.clear();
  CHECK_THROWS_AS(set_multi_label_fraction(none, 0.1), InvalidArgument);
}

TEST_CASE("multi-label fraction lands on target in generated corpora") {
  for (double target : {0.23, 0.29, 0.17}) {
    SynthConfig c = default_synth_config();
    c.num_speakers = 40;
    c.clips_per_speaker = 50;
    c.frames = 8;
    c.span_min = 1;
    c.span_max = 2;
    c.seed = 21;
    set_multi_label_fraction(c, target);
    const auto corpus = generate(c);
    double multi = 0.0;
    for (const auto& rec : corpus.table.records) multi += rec.labels.count() > 1;
    CHECK(std::abs(multi / static_cast<double>(corpus.table.records.size()) - target) <= 0.03);
  }
}

TEST_CASE("configuration errors") {
  auto expect_invalid = [](auto mutate) {
    SynthConfig c = default_synth_config();
    mutate(c);
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
  };
  expect_invalid([](SynthConfig& c) { c.num_speakers = 0; });
  expect_invalid([](SynthConfig& c) { c.label_priors.pop_back(); });
  expect_invalid([](SynthConfig& c) { c.label_priors[0] = 1.5; });
  expect_invalid([](SynthConfig& c) { c.label_priors[2] = 0.01; });  // Int below its pair mass
  expect_invalid([](SynthConfig& c) { c.noise_std = -1.0; });
  expect_invalid([](SynthConfig& c) { c.shared_component = 1.0; });
  expect_invalid([](SynthConfig& c) { c.span_max = c.frames + 1; });
  expect_invalid([](SynthConfig& c) { c.span_min = 0; });
  expect_invalid([](SynthConfig& c) { c.german_fraction = 2.0; });
  expect_invalid([](SynthConfig& c) { c.co_occurrence.push_back({"Int", "Int", 0.01}); });
  expect_invalid([](SynthConfig& c) { c.co_occurrence.push_back({"Int", "No-Df", 0.01}); });
  expect_invalid([](SynthConfig& c) { c.co_occurrence.push_back({"Int", "Zzz", 0.01}); });
  expect_invalid([](SynthConfig& c) { c.allow_no_df = false; });
  expect_invalid([](SynthConfig& c) { c.prototypes = Matrix::Ones(7, 8); });
  expect_invalid([](SynthConfig& c) { c.prototypes = Matrix::Identity(7, 5); });
  expect_invalid([](SynthConfig& c) { c.vocabulary = ClassVocabulary({"A", "B"}); });
}
