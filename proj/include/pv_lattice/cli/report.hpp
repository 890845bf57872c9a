#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "pv_lattice/sweep.hpp"

namespace pvl::cli {

/// Shortest round-trip decimal representation, locale independent.
std::string format_number(double x);

/// Header `v,i,p`, one sample per LF-terminated line.
std::string curve_csv(const IVCurve& curve);

/// Writes `content` to `path` through a temporary file and a rename.
void write_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace pvl::cli
