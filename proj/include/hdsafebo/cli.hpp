#pragma once

#include "hdsafebo/benchmarks.hpp"
#include "hdsafebo/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace hdsafebo::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `hdsafebo` tool. Subcommands: bench, serve, embed-diag,
/// replay, plot.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Writes report.json, report.csv, summary.csv, resolved_config.json and
/// trajectories/<method>/seed-<k>.{jsonl,summary.json} under `out_dir`.
void write_bench_artifacts(const std::filesystem::path& out_dir, const config::ToolkitConfig& cfg,
                           const benchmarks::BenchmarkReport& report);

/// Rows of numbers separated by commas or whitespace; '#' starts a comment.
Eigen::MatrixXd read_matrix_file(const std::filesystem::path& path);

/// Objective / Safety / Violation curves (mean over seeds per method) as SVG.
std::string render_curves_svg(const std::vector<std::string>& names,
                              const std::vector<std::vector<optimizer::RunRecord>>& runs);

}  // namespace hdsafebo::cli
