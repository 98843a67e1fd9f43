#pragma once

#include "hdsafebo/benchmarks.hpp"
#include "hdsafebo/optimizer.hpp"
#include "hdsafebo/serialization.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hdsafebo::config {

using io::json;

struct BenchSettings {
    benchmarks::TaskSpec task;
    benchmarks::BenchmarkOptions options;
    std::vector<benchmarks::MethodSpec> methods;
};

struct ServeSettings {
    std::string bind = "127.0.0.1";
    int port = 8080;
    std::string data_dir = "data";
    int threads = 4;
};

// One document shared by bench and serve. Methods are JSON merge patches
// over the base optimizer block.
struct ToolkitConfig {
    optimizer::OptimizerConfig optimizer;
    BenchSettings bench;
    ServeSettings serve;
    std::string out_dir = "out";
};

/// `base_dir` resolves relative embedding file paths.
ToolkitConfig parse_config(const json& doc, const std::filesystem::path& base_dir = {});
ToolkitConfig load_config(const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(const char*)>;
std::optional<std::string> process_env(const char* name);

/// HDSAFEBO_DATA_DIR, HDSAFEBO_BIND, HDSAFEBO_PORT, HDSAFEBO_OUT_DIR.
void apply_environment(ToolkitConfig& cfg, const EnvLookup& env = process_env);

/// Parses "host", "host:port" or ":port" into the serve settings.
void apply_bind(ServeSettings& serve, const std::string& bind);

/// Fully resolved document (every default spelled out).
json to_json(const ToolkitConfig& cfg);
json to_json(const benchmarks::EmbeddingChoice& choice);

}  // namespace hdsafebo::config
