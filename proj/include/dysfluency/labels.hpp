#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

namespace dysfluency {

// Multi-hot label vector over a fixed class vocabulary.
class LabelVector {
 public:
  LabelVector() = default;
  explicit LabelVector(std::size_t width) : bits_(width, 0) {}
  LabelVector(std::initializer_list<int> bits) {
    bits_.reserve(bits.size());
    for (int b : bits) bits_.push_back(b ? 1 : 0);
  }

  std::size_t size() const noexcept { return bits_.size(); }
  bool operator[](std::size_t i) const { return bits_.at(i) != 0; }
  void set(std::size_t i, bool on = true) { bits_.at(i) = on ? 1 : 0; }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

  friend bool operator==(const LabelVector&, const LabelVector&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

// Ordered, fixed class list. Two vocabularies are in use: EN6 for the English
// corpora and FULL7, which adds modified speech (Mod) in front.
class ClassVocabulary {
 public:
  ClassVocabulary() = default;
  explicit ClassVocabulary(std::vector<std::string> names);

  static ClassVocabulary en6();
  static ClassVocabulary full7();

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  std::optional<std::size_t> index_of(const std::string& name) const;
  bool contains(const ClassVocabulary& other) const;

  // Index of the no-dysfluency class, when present.
  std::optional<std::size_t> no_dysfluency_index() const { return index_of("No-Df"); }
  std::optional<std::size_t> modified_index() const { return index_of("Mod"); }

  friend bool operator==(const ClassVocabulary&, const ClassVocabulary&) = default;

 private:
  std::vector<std::string> names_;
};

}  // namespace dysfluency
