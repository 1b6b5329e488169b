#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "noisyal/dataset.hpp"

namespace noisyal {

// Manifest layout: a header line
//   noisyal-manifest<TAB>v1<TAB>classes=T<TAB>dim=d<TAB>samples=N
// followed by exactly N newline-terminated records with tab-separated fields
//   sample_id group_id provenance assigned_labels true_labels soft_targets features
// Label sets and vectors are comma-joined; "-" marks an empty set or absent soft
// targets. Reals use the shortest decimal form that round-trips exactly.

std::string format_manifest(const Dataset& ds);
/// Throws Error(kParse) naming the 1-based offending line.
Dataset parse_manifest(std::string_view text);

void save_manifest(const Dataset& ds, const std::filesystem::path& path);
Dataset load_manifest(const std::filesystem::path& path);

/// Content hash of the manifest form.
std::string dataset_hash(const Dataset& ds);

/// Shortest round-trip decimal form of a double.
std::string format_real(double value);
/// Strict parse of a full token as a double; throws Error(kParse).
double parse_real(std::string_view token);
std::string join_reals(std::span<const double> values);
std::vector<double> split_reals(std::string_view text);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace noisyal
