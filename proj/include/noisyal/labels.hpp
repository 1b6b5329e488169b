#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace noisyal {

using ClassId = int;

/// A tool class: dense id in [0, T) and a canonical (standardized) name.
struct ToolLabel {
  ClassId id = 0;
  std::string name;
};

/// Set of distinct class ids, kept sorted ascending.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::initializer_list<ClassId> ids);
  explicit LabelSet(std::vector<ClassId> ids);

  bool contains(ClassId id) const;
  void insert(ClassId id);
  void erase(ClassId id);

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<ClassId>& ids() const { return ids_; }
  auto begin() const { return ids_.begin(); }
  auto end() const { return ids_.end(); }

  /// True when every id lies in [0, num_classes).
  bool within(int num_classes) const;

  /// Comma-joined ids, e.g. "0,2,5"; empty set gives "".
  std::string to_string() const;
  /// Inverse of to_string. Throws Error(kParse) on malformed input.
  static LabelSet parse(std::string_view text);

  friend bool operator==(const LabelSet&, const LabelSet&) = default;
  friend auto operator<=>(const LabelSet& a, const LabelSet& b) { return a.ids_ <=> b.ids_; }

 private:
  std::vector<ClassId> ids_;
};

/// Symmetric difference of two label sets.
LabelSet symmetric_difference(const LabelSet& a, const LabelSet& b);

/// Canonical form of a raw tool label: strips [ ] ' - and backslashes,
/// maps underscores to spaces, lowercases, trims and collapses whitespace.
std::string standardize_label(std::string_view raw);

/// Default names for T tools. The first 14 follow the endoscopic tool set;
/// larger T falls back to "tool <id>".
std::vector<ToolLabel> default_tool_labels(int num_classes);

}  // namespace noisyal
