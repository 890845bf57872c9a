#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>

namespace pvl::cli {

enum class ModelSelection { sdm, ppdm, both };

struct RunOptions {
  std::filesystem::path config;
  std::filesystem::path out_dir = ".";
  ModelSelection models = ModelSelection::both;
  std::optional<std::size_t> points;
  bool cold_start = false;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int config = 2;
inline constexpr int solver = 3;
}  // namespace exit_code

/// Reads PV_LATTICE_LOG (trace|debug|info|warn|error|critical|off).
void configure_logging();

/// IV/PV curves: one CSV per model plus `<stem>_manifest.json`.
int run_sweep(const RunOptions& options, std::ostream& out, std::ostream& err);
/// MPP of each model and, for both, the percentage errors.
int run_mpp(const RunOptions& options, std::ostream& out, std::ostream& err);
/// Equivalence audit at the per-panel MPP.
int run_audit(const RunOptions& options, std::ostream& out, std::ostream& err);

}  // namespace pvl::cli
