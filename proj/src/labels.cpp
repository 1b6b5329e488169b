#include "noisyal/labels.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "noisyal/error.hpp"

namespace noisyal {

LabelSet::LabelSet(std::initializer_list<ClassId> ids) : LabelSet(std::vector<ClassId>(ids)) {}

LabelSet::LabelSet(std::vector<ClassId> ids) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
}

bool LabelSet::contains(ClassId id) const {
  return std::binary_search(ids_.begin(), ids_.end(), id);
}

void LabelSet::insert(ClassId id) {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) ids_.insert(it, id);
}

void LabelSet::erase(ClassId id) {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it != ids_.end() && *it == id) ids_.erase(it);
}

bool LabelSet::within(int num_classes) const {
  return ids_.empty() || (ids_.front() >= 0 && ids_.back() < num_classes);
}

std::string LabelSet::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids_[i]);
  }
  return out;
}

LabelSet LabelSet::parse(std::string_view text) {
  std::vector<ClassId> ids;
  if (text.empty()) return LabelSet{};
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    auto token = text.substr(pos, comma == std::string_view::npos ? text.size() - pos : comma - pos);
    ClassId value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size() || token.empty())
      fail(ErrorKind::kParse, "bad label id '" + std::string(token) + "'");
    ids.push_back(value);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  std::size_t n = ids.size();
  LabelSet set(std::move(ids));
  if (set.size() != n) fail(ErrorKind::kParse, "duplicate label id in '" + std::string(text) + "'");
  return set;
}

LabelSet symmetric_difference(const LabelSet& a, const LabelSet& b) {
  std::vector<ClassId> out;
  std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return LabelSet(std::move(out));
}

std::string standardize_label(std::string_view raw) {
  std::string cleaned;
  cleaned.reserve(raw.size());
  for (char ch : raw) {
    switch (ch) {
      case '[': case ']': case '\'': case '-': case '\\':
        break;
      case '_':
        cleaned += ' ';
        break;
      default:
        cleaned += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
  }
  std::string out;
  bool pending_space = false;
  for (char ch : cleaned) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += ch;
  }
  return out;
}

std::vector<ToolLabel> default_tool_labels(int num_classes) {
  static const char* const kNames[] = {
      "needle_driver",        "monopolar_curved_scissors", "force_bipolar",
      "clip_applier",         "tip-up_fenestrated_grasper", "cadiere_forceps",
      "bipolar_forceps",      "vessel_sealer",             "suction_irrigator",
      "bipolar_dissector",    "prograsp_forceps",          "stapler",
      "permanent_cautery_hook/spatula", "grasping_retractor",
  };
  std::vector<ToolLabel> labels;
  for (int id = 0; id < num_classes; ++id) {
    std::string name = id < 14 ? standardize_label(kNames[id]) : "tool " + std::to_string(id);
    labels.push_back({id, std::move(name)});
  }
  return labels;
}

}  // namespace noisyal
