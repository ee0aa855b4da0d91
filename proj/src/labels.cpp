#include <algorithm>
#include <set>

#include "dysfluency/error.hpp"
#include "dysfluency/labels.hpp"

namespace dysfluency {

ClassVocabulary::ClassVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw InvalidArgument("class vocabulary: empty class name");
    if (!seen.insert(n).second) throw InvalidArgument("class vocabulary: duplicate class '" + n + "'");
  }
}

ClassVocabulary ClassVocabulary::en6() { return ClassVocabulary({"Bl", "Int", "Pro", "Snd", "Wd", "No-Df"}); }

ClassVocabulary ClassVocabulary::full7() {
  return ClassVocabulary({"Mod", "Bl", "Int", "Pro", "Snd", "Wd", "No-Df"});
}

std::optional<std::size_t> ClassVocabulary::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

bool ClassVocabulary::contains(const ClassVocabulary& other) const {
  return std::all_of(other.names_.begin(), other.names_.end(),
                     [&](const std::string& n) { return index_of(n).has_value(); });
}

}  // namespace dysfluency
