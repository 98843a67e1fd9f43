#pragma once

#include "hdsafebo/optimizer.hpp"
#include "hdsafebo/serialization.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace hdsafebo::session {

using io::json;

enum class SessionStatus { ReadyToPropose, AwaitingObservation, Completed, Failed };

std::string_view status_name(SessionStatus s) noexcept;

/// Numeric y_g recorded for a binary safety rating.
struct SafetyLevels {
    double safe = 1.0;
    double unsafe = -1.0;
};

/// One reported trial: y_f plus either a numeric y_g or a "safe"/"unsafe" rating.
struct TrialResult {
    double y_f = 0.0;
    std::optional<double> y_g;
    std::optional<std::string> rating;
};

double resolve_safety(const TrialResult& r, const SafetyLevels& levels);

struct InitialTrial {
    Eigen::VectorXd x;
    TrialResult result;
};

struct CreateRequest {
    optimizer::OptimizerConfig config;
    std::vector<InitialTrial> initial;
    SafetyLevels levels;
    std::optional<std::string> id;
};

/// Request bodies of the wire API. `base` supplies defaults for the optimizer block.
CreateRequest create_request_from_json(const json& body, const optimizer::OptimizerConfig& base);
std::vector<TrialResult> results_from_json(const json& array, const std::string& path);
TrialResult trial_from_json(const json& j, const std::string& path);

struct Snapshot {
    std::string id;
    SessionStatus status = SessionStatus::ReadyToPropose;
    std::int64_t last_seq = 0;
    optimizer::RunRecord record;
    std::optional<optimizer::StepProposal> outstanding;
    std::optional<std::size_t> last_safe_set_size;
    std::string state_hash;
    std::optional<std::string> failure;
};

/// `history_limit` < 0 means the whole history.
json snapshot_to_json(const Snapshot& s, std::size_t history_offset = 0, std::int64_t history_limit = -1);

/// Result of replaying one event log from scratch.
struct LogReplay {
    bool ok = false;
    std::int64_t last_valid_seq = 0;
    std::optional<std::int64_t> first_bad_seq;
    std::string message;
    /// A torn final line was ignored.
    bool torn_tail = false;
    std::optional<Snapshot> snapshot;
};

/// With `verify_proposals`, every proposed event is recomputed and must match bit for bit.
LogReplay replay_session_log(const std::filesystem::path& path, bool verify_proposals = false);

struct ServiceOptions {
    /// Called after an event is durably appended and before the in-memory state
    /// changes; tests throw from here to simulate a crash at that boundary.
    std::function<void(const std::string& session_id, std::int64_t seq, std::string_view kind)> after_persist;
    /// Wall clock for event timestamps (seconds); replaceable for tests.
    std::function<double()> clock;
};

struct SessionInfo {
    std::string id;
    SessionStatus status;
    std::size_t evaluations = 0;
    int budget = 0;
    std::int64_t last_seq = 0;
};

// Sessions persist as data_dir/sessions/<id>.jsonl and are rebuilt by replay
// on construction. Writes to one session are serialised by its own lock;
// readers get the latest published snapshot without waiting on a writer.
class SessionService {
public:
    explicit SessionService(std::filesystem::path data_dir, ServiceOptions options = {});
    ~SessionService();

    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    std::shared_ptr<const Snapshot> create(const CreateRequest& request);
    /// Idempotent between observations.
    optimizer::StepProposal get_proposal(const std::string& id);
    /// `iteration`, when given, must name the outstanding proposal.
    std::shared_ptr<const Snapshot> post_observation(const std::string& id, const std::vector<TrialResult>& results,
                                                     std::optional<int> iteration = std::nullopt);
    /// A trial chosen outside the optimizer: logged as config_note + observed
    /// and applied as a batch of one.
    std::shared_ptr<const Snapshot> post_out_of_band(const std::string& id, const Eigen::VectorXd& x,
                                                     const TrialResult& result, const std::string& note);
    std::shared_ptr<const Snapshot> get_state(const std::string& id) const;
    std::vector<SessionInfo> list() const;

    const std::filesystem::path& data_dir() const { return data_dir_; }
    std::filesystem::path log_path(const std::string& id) const;

private:
    struct Session;

    std::shared_ptr<Session> find(const std::string& id) const;
    std::int64_t append(Session& s, const std::string& kind, json payload);
    void publish(Session& s);

    std::filesystem::path data_dir_;
    ServiceOptions options_;
    mutable std::shared_mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace hdsafebo::session
