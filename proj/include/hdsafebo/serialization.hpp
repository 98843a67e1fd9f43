#pragma once

#include "hdsafebo/benchmarks.hpp"
#include "hdsafebo/embedding.hpp"
#include "hdsafebo/optimizer.hpp"

#include <json.hpp>

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

namespace hdsafebo::io {

using nlohmann::json;

inline constexpr std::string_view kToolkitVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kRunLogSchema = "hdsafebo.run_log";
inline constexpr std::string_view kSummarySchema = "hdsafebo.run_summary";

// Strict object reader: every key must be consumed, otherwise finish() throws
// ParseError naming the first unknown key by its full path.
class ObjectReader {
public:
    ObjectReader(const json& object, std::string path);

    bool has(std::string_view key) const;
    const json* find(std::string_view key);
    const json& require(std::string_view key);
    std::string key_path(std::string_view key) const;

    double number(std::string_view key, double fallback);
    double number(std::string_view key);
    int integer(std::string_view key, int fallback);
    std::uint64_t unsigned_integer(std::string_view key, std::uint64_t fallback);
    bool boolean(std::string_view key, bool fallback);
    std::string string(std::string_view key, std::string fallback);
    std::string string(std::string_view key);

    void finish() const;

private:
    const json& object_;
    std::string path_;
    std::vector<std::string> seen_;
};

/// Non-finite doubles travel as the strings "inf", "-inf", "nan".
json number_to_json(double v);
double number_from_json(const json& j, const std::string& path);

json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j, const std::string& path);
json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& j, const std::string& path);

json to_json(const embedding::EmbeddingMap& map);
embedding::EmbeddingMap embedding_from_json(const json& j, const std::string& path);

json to_json(const optimizer::OptimizerConfig& cfg);
/// Missing keys take the defaults of OptimizerConfig; unknown keys are errors.
optimizer::OptimizerConfig optimizer_config_from_json(const json& j, const std::string& path);

json to_json(const benchmarks::TaskSpec& spec);
benchmarks::TaskSpec task_spec_from_json(const json& j, const std::string& path);

json to_json(const optimizer::Metrics& m);
optimizer::Metrics metrics_from_json(const json& j, const std::string& path);
json to_json(const optimizer::IterationRecord& r);
optimizer::IterationRecord iteration_record_from_json(const json& j, const std::string& path);
json to_json(const trust_region::TrustRegionState& s);
json observation_to_json(const optimizer::Observation& o, bool with_timestamp);
optimizer::Observation observation_from_json(const json& j, const std::string& path);
json to_json(const optimizer::StepProposal& p);
optimizer::StepProposal proposal_from_json(const json& j, const std::string& path);

/// SHA-256 (hex) over the canonical JSON of the deterministic run state.
/// Timestamps and failure annotations are excluded.
std::string state_hash(const optimizer::RunRecord& record);

/// Config echo, initial/final metrics, per-iteration trajectory, hash.
json run_summary(const optimizer::RunRecord& record, const json& context);

/// JSON-lines log: header, iteration-0 observations, init record, then for
/// every iteration its observations followed by the iteration record, and a
/// closing end record. Every line carries a strictly increasing "seq".
void write_run_log(std::ostream& out, const optimizer::RunRecord& record, const json& context);

struct ReplayResult {
    /// Every record verified and the end record reached.
    bool complete = false;
    /// The log stops early (missing lines or a torn final line); the prefix was replayed.
    bool truncated = false;
    std::int64_t last_valid_seq = 0;
    std::optional<std::int64_t> first_bad_seq;
    std::string message;
    std::optional<optimizer::RunRecord> record;
    std::string state_hash;
    json context;
};

ReplayResult replay_run_log(std::istream& in);

}  // namespace hdsafebo::io
