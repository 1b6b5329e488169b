#include "noisyal/manifest.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "noisyal/error.hpp"
#include "noisyal/hash.hpp"

namespace noisyal {

std::string format_real(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

double parse_real(std::string_view token) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size())
    fail(ErrorKind::kParse, "bad number '" + std::string(token) + "'");
  return value;
}

std::string join_reals(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_real(values[i]);
  }
  return out;
}

std::vector<double> split_reals(std::string_view text) {
  std::vector<double> out;
  if (text.empty()) return out;
  std::size_t pos = 0;
  while (true) {
    auto comma = text.find(',', pos);
    out.push_back(parse_real(text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

namespace {

std::string labels_field(const LabelSet& set) { return set.empty() ? "-" : set.to_string(); }

LabelSet parse_labels_field(std::string_view field) {
  return field == "-" ? LabelSet{} : LabelSet::parse(field);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    auto tab = line.find('\t', pos);
    fields.push_back(line.substr(pos, tab == std::string_view::npos ? line.npos : tab - pos));
    if (tab == std::string_view::npos) break;
    pos = tab + 1;
  }
  return fields;
}

long parse_int_field(std::string_view field, std::string_view key) {
  if (field.substr(0, key.size()) != key)
    fail(ErrorKind::kParse, "expected '" + std::string(key) + "'");
  field.remove_prefix(key.size());
  long value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size())
    fail(ErrorKind::kParse, "bad integer for '" + std::string(key) + "'");
  return value;
}

[[noreturn]] void line_error(std::size_t line_no, const std::string& what) {
  fail(ErrorKind::kParse, "manifest line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::string format_manifest(const Dataset& ds) {
  std::ostringstream out;
  out << "noisyal-manifest\tv1\tclasses=" << ds.num_classes() << "\tdim=" << ds.feature_dim()
      << "\tsamples=" << ds.size() << '\n';
  for (const Sample& s : ds.samples()) {
    out << s.sample_id << '\t' << s.group_id << '\t' << to_string(s.provenance) << '\t'
        << labels_field(s.assigned_labels) << '\t' << labels_field(s.true_labels) << '\t'
        << (s.soft_targets ? join_reals(*s.soft_targets) : std::string("-")) << '\t'
        << join_reals(s.features) << '\n';
  }
  return out.str();
}

Dataset parse_manifest(std::string_view text) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    ++line_no;
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) line_error(line_no, "truncated record (no line terminator)");
    line = text.substr(pos, nl - pos);
    pos = nl + 1;
    return true;
  };

  std::string_view line;
  if (!next_line(line)) fail(ErrorKind::kParse, "manifest line 1: empty file");
  auto header = split_tabs(line);
  long classes = 0, dim = 0, count = 0;
  try {
    if (header.size() != 5 || header[0] != "noisyal-manifest" || header[1] != "v1")
      fail(ErrorKind::kParse, "bad header");
    classes = parse_int_field(header[2], "classes=");
    dim = parse_int_field(header[3], "dim=");
    count = parse_int_field(header[4], "samples=");
  } catch (const Error& e) {
    line_error(line_no, e.what());
  }

  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(std::max(count, 0L)));
  while (next_line(line)) {
    auto f = split_tabs(line);
    if (f.size() != 7)
      line_error(line_no, "expected 7 fields, found " + std::to_string(f.size()));
    try {
      Sample s;
      s.sample_id = parse_int_field(f[0], "");
      s.group_id = parse_int_field(f[1], "");
      s.provenance = parse_provenance(f[2]);
      s.assigned_labels = parse_labels_field(f[3]);
      s.true_labels = parse_labels_field(f[4]);
      if (f[5] != "-") s.soft_targets = split_reals(f[5]);
      s.features = split_reals(f[6]);
      if (static_cast<long>(s.features.size()) != dim)
        fail(ErrorKind::kParse, "expected " + std::to_string(dim) + " features");
      samples.push_back(std::move(s));
    } catch (const Error& e) {
      line_error(line_no, e.what());
    }
  }
  if (static_cast<long>(samples.size()) != count)
    line_error(line_no + 1, "header declares " + std::to_string(count) + " samples, found " +
                                std::to_string(samples.size()));
  try {
    return Dataset(static_cast<int>(classes), static_cast<int>(dim), std::move(samples));
  } catch (const Error& e) {
    fail(ErrorKind::kParse, std::string("manifest: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) fail(ErrorKind::kIo, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_manifest(const Dataset& ds, const std::filesystem::path& path) {
  write_file(path, format_manifest(ds));
}

Dataset load_manifest(const std::filesystem::path& path) { return parse_manifest(read_file(path)); }

std::string dataset_hash(const Dataset& ds) { return content_hash(format_manifest(ds)); }

}  // namespace noisyal
