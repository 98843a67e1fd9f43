#include "hdsafebo/session.hpp"

#include "hdsafebo/errors.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace hdsafebo::session {

namespace fs = std::filesystem;
using io::ObjectReader;

std::string_view status_name(SessionStatus s) noexcept {
    switch (s) {
        case SessionStatus::ReadyToPropose: return "ready_to_propose";
        case SessionStatus::AwaitingObservation: return "awaiting_observation";
        case SessionStatus::Completed: return "completed";
        case SessionStatus::Failed: return "failed";
    }
    return "unknown";
}

double resolve_safety(const TrialResult& r, const SafetyLevels& levels) {
    if (r.y_g && r.rating) throw InvalidInput("give either y_g or a safety rating, not both");
    if (r.y_g) return *r.y_g;
    if (!r.rating) throw InvalidInput("a result needs y_g or a safety rating");
    if (*r.rating == "safe") return levels.safe;
    if (*r.rating == "unsafe") return levels.unsafe;
    throw InvalidInput("safety rating must be \"safe\" or \"unsafe\", got \"" + *r.rating + "\"");
}

TrialResult trial_from_json(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    TrialResult t;
    t.y_f = r.number("y_f");
    if (r.has("y_g")) t.y_g = r.number("y_g");
    if (r.has("safety")) t.rating = r.string("safety");
    r.finish();
    if (t.y_g.has_value() == t.rating.has_value()) {
        throw ParseError(path + ": exactly one of y_g and safety is required");
    }
    return t;
}

std::vector<TrialResult> results_from_json(const json& array, const std::string& path) {
    if (!array.is_array()) throw ParseError(path + ": expected an array of results");
    std::vector<TrialResult> out;
    for (std::size_t i = 0; i < array.size(); ++i) {
        out.push_back(trial_from_json(array[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

CreateRequest create_request_from_json(const json& body, const optimizer::OptimizerConfig& base) {
    ObjectReader r(body, "");
    CreateRequest req;
    json merged = io::to_json(base);
    if (const json* c = r.find("config")) {
        if (!c->is_object()) throw ParseError("config: expected an object");
        merged.merge_patch(*c);
    }
    req.config = io::optimizer_config_from_json(merged, "config");
    if (const json* l = r.find("safety_levels")) {
        ObjectReader lr(*l, "safety_levels");
        req.levels.safe = lr.number("safe", req.levels.safe);
        req.levels.unsafe = lr.number("unsafe", req.levels.unsafe);
        lr.finish();
    }
    if (r.has("id")) req.id = r.string("id");
    const json& init = r.require("initial_observations");
    if (!init.is_array() || init.empty()) throw ParseError("initial_observations: expected a non-empty array");
    for (std::size_t i = 0; i < init.size(); ++i) {
        const std::string path = "initial_observations[" + std::to_string(i) + "]";
        if (!init[i].is_object() || !init[i].contains("x")) throw ParseError(path + ".x: required key is missing");
        InitialTrial t;
        t.x = io::vector_from_json(init[i]["x"], path + ".x");
        json rest = init[i];
        rest.erase("x");
        t.result = trial_from_json(rest, path);
        req.initial.push_back(std::move(t));
    }
    r.finish();
    return req;
}

namespace {

json results_payload(const std::vector<TrialResult>& results, const std::vector<double>& y_g) {
    json out = json::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
        json e{{"y_f", io::number_to_json(results[i].y_f)}, {"y_g", io::number_to_json(y_g[i])}};
        if (results[i].rating) e["safety"] = *results[i].rating;
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<double> resolve_all(const std::vector<TrialResult>& results, const SafetyLevels& levels) {
    std::vector<double> g;
    for (const auto& r : results) {
        const double v = resolve_safety(r, levels);
        if (!std::isfinite(v) || !std::isfinite(r.y_f)) throw InvalidInput("observations must be finite");
        g.push_back(v);
    }
    return g;
}

// Event-sourced session state. The live service and log replay both go
// through apply(), so a replayed session is the same object by construction.
struct Machine {
    std::string id;
    SafetyLevels levels;
    std::optional<optimizer::RunState> state;
    std::optional<optimizer::StepProposal> outstanding;
    std::optional<Eigen::VectorXd> out_of_band;
    std::optional<std::size_t> last_safe_set_size;
    std::int64_t seq = 0;

    void apply(const json& event) {
        ObjectReader r(event, "event");
        const auto seqv = static_cast<std::int64_t>(r.unsigned_integer("seq", 0));
        if (seqv != seq + 1) {
            throw ParseError("expected seq " + std::to_string(seq + 1) + ", found " + std::to_string(seqv));
        }
        const std::string kind = r.string("kind");
        const double ts = r.number("ts", 0.0);
        const json& payload = r.require("payload");
        r.finish();

        if (kind == "created") {
            if (state) throw ParseError("duplicate created event");
            ObjectReader p(payload, "payload");
            const int version = p.integer("schema_version", io::kSchemaVersion);
            if (version != io::kSchemaVersion) throw ParseError("unsupported schema_version");
            p.find("toolkit_version");
            id = p.string("id");
            const optimizer::OptimizerConfig cfg = io::optimizer_config_from_json(p.require("config"), "payload.config");
            ObjectReader lv(p.require("safety_levels"), "payload.safety_levels");
            levels.safe = lv.number("safe");
            levels.unsafe = lv.number("unsafe");
            lv.finish();
            std::vector<optimizer::Observation> init;
            const json& obs = p.require("initial");
            if (!obs.is_array()) throw ParseError("payload.initial: expected an array");
            for (std::size_t i = 0; i < obs.size(); ++i) {
                ObjectReader o(obs[i], "payload.initial[" + std::to_string(i) + "]");
                optimizer::Observation ob;
                ob.x = io::vector_from_json(o.require("x"), o.key_path("x"));
                ob.y_f = o.number("y_f");
                ob.y_g = o.number("y_g");
                o.find("safety");
                o.finish();
                ob.timestamp = ts;
                init.push_back(std::move(ob));
            }
            p.finish();
            state = optimizer::init_run(cfg, std::move(init));
        } else {
            if (!state) throw ParseError("first event must be created");
            if (kind == "proposed") {
                if (outstanding || out_of_band) throw ConflictError("proposed while an observation is outstanding");
                if (state->completed()) throw ConflictError("proposed after the budget was exhausted");
                optimizer::StepProposal prop = io::proposal_from_json(payload, "payload");
                if (prop.iteration != state->next_iteration) {
                    throw ParseError("proposal for iteration " + std::to_string(prop.iteration) + ", expected " +
                                     std::to_string(state->next_iteration));
                }
                if (prop.points.cols() != state->map.source_dim()) throw ParseError("proposal dimension mismatch");
                last_safe_set_size = prop.safe_set_size;
                outstanding = std::move(prop);
            } else if (kind == "config_note") {
                if (outstanding || out_of_band) throw ConflictError("config_note while an observation is outstanding");
                if (state->completed()) throw ConflictError("config_note after the budget was exhausted");
                ObjectReader p(payload, "payload");
                p.string("note", "");
                Eigen::VectorXd x = io::vector_from_json(p.require("x"), "payload.x");
                p.finish();
                if (x.size() != state->map.source_dim()) throw InvalidInput("out-of-band point has the wrong dimension");
                out_of_band = std::move(x);
            } else if (kind == "observed") {
                ObjectReader p(payload, "payload");
                const int iteration = p.integer("iteration", -1);
                const json& res = p.require("results");
                p.finish();
                if (!res.is_array()) throw ParseError("payload.results: expected an array");
                trust_region::BatchOutcome outcome;
                for (std::size_t i = 0; i < res.size(); ++i) {
                    ObjectReader e(res[i], "payload.results[" + std::to_string(i) + "]");
                    outcome.y_f.push_back(e.number("y_f"));
                    outcome.y_g.push_back(e.number("y_g"));
                    e.find("safety");
                    e.finish();
                }
                if (iteration != state->next_iteration) {
                    throw ParseError("observation for iteration " + std::to_string(iteration) + ", expected " +
                                     std::to_string(state->next_iteration));
                }
                if (outstanding) {
                    optimizer::apply_batch(*state, iteration, outstanding->points, outcome, outstanding->safe_set_size,
                                           outstanding->fallback, ts);
                    outstanding.reset();
                } else if (out_of_band) {
                    Eigen::MatrixXd point = out_of_band->transpose();
                    optimizer::apply_batch(*state, iteration, point, outcome, 0, false, ts);
                    out_of_band.reset();
                } else {
                    throw ConflictError("observation without an outstanding proposal");
                }
            } else {
                throw ParseError("unknown event kind '" + kind + "'");
            }
        }
        seq = seqv;
    }

    SessionStatus status() const {
        if (!state) return SessionStatus::Failed;
        if (outstanding || out_of_band) return SessionStatus::AwaitingObservation;
        if (state->completed()) return SessionStatus::Completed;
        return SessionStatus::ReadyToPropose;
    }

    std::shared_ptr<Snapshot> snapshot(std::optional<std::string> failure) const {
        auto s = std::make_shared<Snapshot>();
        s->id = id;
        s->last_seq = seq;
        s->failure = std::move(failure);
        s->status = s->failure ? SessionStatus::Failed : status();
        if (state) {
            s->record = optimizer::make_record(*state);
            s->state_hash = io::state_hash(s->record);
        }
        s->outstanding = outstanding;
        s->last_safe_set_size = last_safe_set_size;
        return s;
    }
};

struct ReadLog {
    std::vector<std::string> lines;
    bool torn_tail = false;
    std::uintmax_t valid_bytes = 0;
};

ReadLog read_log(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("cannot open event log " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    ReadLog out;
    std::size_t start = 0;
    while (start < text.size()) {
        const std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) {
            // A line is durable only with its newline.
            out.torn_tail = true;
            break;
        }
        out.lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
        out.valid_bytes = start;
    }
    return out;
}

struct Replayed {
    Machine machine;
    LogReplay report;
};

Replayed replay(const fs::path& path, bool verify_proposals) {
    Replayed r;
    const ReadLog log = read_log(path);
    r.report.torn_tail = log.torn_tail;
    for (const std::string& line : log.lines) {
        const std::int64_t seq = r.machine.seq + 1;
        try {
            const json event = json::parse(line);
            if (verify_proposals && event.value("kind", "") == "proposed" && r.machine.state &&
                !r.machine.outstanding) {
                const optimizer::StepProposal fresh = optimizer::propose(*r.machine.state);
                const optimizer::StepProposal stored = io::proposal_from_json(event.at("payload"), "payload");
                if (fresh.points != stored.points || fresh.safety_bounds != stored.safety_bounds ||
                    fresh.iteration != stored.iteration) {
                    throw InvalidInput("recomputed proposal differs from the logged one");
                }
            }
            r.machine.apply(event);
        } catch (const json::exception& e) {
            r.report.first_bad_seq = seq;
            r.report.message = e.what();
            break;
        } catch (const Error& e) {
            r.report.first_bad_seq = seq;
            r.report.message = e.what();
            break;
        }
        r.report.last_valid_seq = r.machine.seq;
    }
    if (!r.machine.state && !r.report.first_bad_seq) {
        r.report.first_bad_seq = 1;
        r.report.message = "log has no created event";
    }
    r.report.ok = !r.report.first_bad_seq;
    if (r.machine.state) {
        r.report.snapshot = *r.machine.snapshot(r.report.ok ? std::nullopt : std::optional<std::string>(r.report.message));
    }
    return r;
}

bool valid_id(const std::string& id) {
    if (id.empty() || id.size() > 64 || id.front() == '.') return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    });
}

std::string random_id() {
    std::random_device rd;
    std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    char buf[24];
    std::snprintf(buf, sizeof buf, "s-%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_all(int fd, const std::string& data, const fs::path& path) {
    const char* p = data.data();
    std::size_t left = data.size();
    while (left > 0) {
        const ssize_t n = ::write(fd, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw NumericalFailure("write to " + path.string() + " failed: " + std::strerror(errno));
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
}

void append_line(const fs::path& path, const std::string& line, bool create) {
    const int flags = O_WRONLY | O_APPEND | O_CLOEXEC | (create ? O_CREAT | O_EXCL : 0);
    const int fd = ::open(path.c_str(), flags, 0644);
    if (fd < 0) {
        if (errno == EEXIST) throw ConflictError("session log " + path.filename().string() + " already exists");
        throw NumericalFailure("cannot open " + path.string() + ": " + std::strerror(errno));
    }
    try {
        write_all(fd, line + "\n", path);
        if (::fsync(fd) != 0) throw NumericalFailure("fsync of " + path.string() + " failed");
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
    if (create) {
        const int dfd = ::open(path.parent_path().c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
        if (dfd >= 0) {
            ::fsync(dfd);
            ::close(dfd);
        }
    }
}

double wall_clock() {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

}  // namespace

LogReplay replay_session_log(const fs::path& path, bool verify_proposals) {
    return replay(path, verify_proposals).report;
}

json snapshot_to_json(const Snapshot& s, std::size_t history_offset, std::int64_t history_limit) {
    const optimizer::RunRecord& rec = s.record;
    json trajectory = json::array();
    for (const auto& it : rec.iterations) trajectory.push_back(io::to_json(it));
    const std::size_t total = rec.observations.size();
    const std::size_t first = std::min(history_offset, total);
    const std::size_t last = history_limit < 0 ? total
                                                : std::min(total, first + static_cast<std::size_t>(history_limit));
    json entries = json::array();
    for (std::size_t i = first; i < last; ++i) {
        json e = io::observation_to_json(rec.observations[i], true);
        e["index"] = i;
        entries.push_back(std::move(e));
    }
    const auto remaining = rec.config.budget > static_cast<int>(total) ? rec.config.budget - static_cast<int>(total) : 0;
    return json{
        {"id", s.id},
        {"status", status_name(s.status)},
        {"last_seq", s.last_seq},
        {"evaluations", total},
        {"budget", rec.config.budget},
        {"remaining_budget", remaining},
        {"incumbent",
         json{{"x", io::vector_to_json(rec.trust_region.incumbent_point)},
              {"value", io::number_to_json(rec.trust_region.incumbent_value)}}},
        {"trust_region",
         json{{"length", rec.trust_region.length},
              {"success_count", rec.trust_region.success_count},
              {"failure_count", rec.trust_region.failure_count}}},
        {"last_safe_set_size", s.last_safe_set_size ? json(*s.last_safe_set_size) : json(nullptr)},
        {"unsafe_seed", rec.unsafe_seed},
        {"initial_metrics", io::to_json(rec.initial_metrics)},
        {"metrics", io::to_json(rec.final_metrics)},
        {"trajectory", trajectory},
        {"outstanding_proposal", s.outstanding ? io::to_json(*s.outstanding) : json(nullptr)},
        {"history", json{{"offset", first}, {"total", total}, {"entries", entries}}},
        {"state_hash", s.state_hash},
        {"failure", s.failure ? json(*s.failure) : json(nullptr)},
    };
}

struct SessionService::Session {
    std::mutex write_mutex;
    Machine machine;
    fs::path path;
    std::optional<std::string> failure;

    mutable std::mutex snapshot_mutex;
    std::shared_ptr<const Snapshot> snapshot;

    std::shared_ptr<const Snapshot> current() const {
        std::lock_guard lock(snapshot_mutex);
        return snapshot;
    }
};

SessionService::SessionService(fs::path data_dir, ServiceOptions options)
    : data_dir_(std::move(data_dir)), options_(std::move(options)) {
    if (!options_.clock) options_.clock = wall_clock;
    fs::create_directories(data_dir_ / "sessions");
    std::vector<fs::path> logs;
    for (const auto& entry : fs::directory_iterator(data_dir_ / "sessions")) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") logs.push_back(entry.path());
    }
    std::sort(logs.begin(), logs.end());
    for (const fs::path& p : logs) {
        Replayed r = replay(p, false);
        if (r.report.torn_tail) {
            // The torn line was never acknowledged; drop it so appends stay line-aligned.
            fs::resize_file(p, read_log(p).valid_bytes);
        }
        auto s = std::make_shared<Session>();
        s->path = p;
        s->machine = std::move(r.machine);
        if (!r.report.ok) s->failure = "replay stopped at seq " + std::to_string(*r.report.first_bad_seq) + ": " + r.report.message;
        if (s->machine.id.empty()) s->machine.id = p.stem().string();
        publish(*s);
        sessions_[s->machine.id] = std::move(s);
    }
}

SessionService::~SessionService() = default;

fs::path SessionService::log_path(const std::string& id) const { return data_dir_ / "sessions" / (id + ".jsonl"); }

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("no session with id '" + id + "'");
    return it->second;
}

void SessionService::publish(Session& s) {
    auto snap = s.machine.snapshot(s.failure);
    std::lock_guard lock(s.snapshot_mutex);
    s.snapshot = std::move(snap);
}

std::int64_t SessionService::append(Session& s, const std::string& kind, json payload) {
    const json event{{"seq", s.machine.seq + 1}, {"kind", kind}, {"ts", options_.clock()}, {"payload", std::move(payload)}};
    // Validate against a copy first so nothing unappliable is ever persisted.
    Machine next = s.machine;
    next.apply(event);
    append_line(s.path, event.dump(), false);
    if (options_.after_persist) options_.after_persist(s.machine.id, next.seq, kind);
    s.machine = std::move(next);
    return s.machine.seq;
}

std::shared_ptr<const Snapshot> SessionService::create(const CreateRequest& request) {
    const std::string id = request.id ? *request.id : random_id();
    if (!valid_id(id)) throw InvalidInput("session id must be 1-64 characters of [A-Za-z0-9._-]");
    json initial = json::array();
    for (std::size_t i = 0; i < request.initial.size(); ++i) {
        const InitialTrial& t = request.initial[i];
        const double g = resolve_safety(t.result, request.levels);
        json e{{"x", io::vector_to_json(t.x)}, {"y_f", io::number_to_json(t.result.y_f)}, {"y_g", io::number_to_json(g)}};
        if (t.result.rating) e["safety"] = *t.result.rating;
        initial.push_back(std::move(e));
    }
    const json event{{"seq", 1},
                     {"kind", "created"},
                     {"ts", options_.clock()},
                     {"payload",
                      json{{"schema_version", io::kSchemaVersion},
                           {"toolkit_version", io::kToolkitVersion},
                           {"id", id},
                           {"config", io::to_json(request.config)},
                           {"safety_levels", json{{"safe", request.levels.safe}, {"unsafe", request.levels.unsafe}}},
                           {"initial", initial}}}};

    auto s = std::make_shared<Session>();
    s->path = log_path(id);
    s->machine.apply(event);  // surfaces SeedUnsafe and bad input before anything is written

    std::unique_lock lock(map_mutex_);
    if (sessions_.count(id)) throw ConflictError("session '" + id + "' already exists");
    append_line(s->path, event.dump(), true);
    if (options_.after_persist) options_.after_persist(id, 1, "created");
    publish(*s);
    sessions_[id] = s;
    return s->current();
}

optimizer::StepProposal SessionService::get_proposal(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->write_mutex);
    if (s->failure) throw ConflictError("session '" + id + "' has failed: " + *s->failure);
    Machine& m = s->machine;
    if (m.outstanding) return *m.outstanding;
    if (m.out_of_band) throw ConflictError("an out-of-band trial is awaiting its observation");
    if (m.state->completed()) throw ConflictError("session '" + id + "' has exhausted its budget");
    const optimizer::StepProposal prop = optimizer::propose(*m.state);
    append(*s, "proposed", io::to_json(prop));
    publish(*s);
    return *m.outstanding;
}

std::shared_ptr<const Snapshot> SessionService::post_observation(const std::string& id,
                                                                 const std::vector<TrialResult>& results,
                                                                 std::optional<int> iteration) {
    auto s = find(id);
    std::lock_guard lock(s->write_mutex);
    if (s->failure) throw ConflictError("session '" + id + "' has failed: " + *s->failure);
    Machine& m = s->machine;
    if (!m.outstanding) throw ConflictError("session '" + id + "' has no outstanding proposal");
    if (iteration && *iteration != m.outstanding->iteration) {
        throw ConflictError("observation names iteration " + std::to_string(*iteration) +
                            " but the outstanding proposal is iteration " + std::to_string(m.outstanding->iteration));
    }
    if (results.size() != m.outstanding->size()) {
        throw InvalidInput("expected " + std::to_string(m.outstanding->size()) + " results, got " +
                           std::to_string(results.size()));
    }
    const std::vector<double> g = resolve_all(results, m.levels);
    append(*s, "observed", json{{"iteration", m.outstanding->iteration}, {"results", results_payload(results, g)}});
    publish(*s);
    return s->current();
}

std::shared_ptr<const Snapshot> SessionService::post_out_of_band(const std::string& id, const Eigen::VectorXd& x,
                                                                 const TrialResult& result, const std::string& note) {
    auto s = find(id);
    std::lock_guard lock(s->write_mutex);
    if (s->failure) throw ConflictError("session '" + id + "' has failed: " + *s->failure);
    Machine& m = s->machine;
    if (m.outstanding) throw ConflictError("an optimizer proposal is outstanding");
    if (m.state->completed()) throw ConflictError("session '" + id + "' has exhausted its budget");
    if (x.size() != m.state->map.source_dim() || !x.allFinite()) {
        throw InvalidInput("out-of-band point must be finite with dimension " + std::to_string(m.state->map.source_dim()));
    }
    const std::vector<double> g = resolve_all({result}, m.levels);
    if (m.out_of_band) {
        // A retry after a crash between the two events.
        if (*m.out_of_band != x) throw ConflictError("a different out-of-band trial is awaiting its observation");
    } else {
        append(*s, "config_note", json{{"note", note}, {"x", io::vector_to_json(x)}});
    }
    append(*s, "observed", json{{"iteration", m.state->next_iteration}, {"results", results_payload({result}, g)}});
    publish(*s);
    return s->current();
}

std::shared_ptr<const Snapshot> SessionService::get_state(const std::string& id) const { return find(id)->current(); }

std::vector<SessionInfo> SessionService::list() const {
    std::shared_lock lock(map_mutex_);
    std::vector<SessionInfo> out;
    for (const auto& [id, s] : sessions_) {
        const auto snap = s->current();
        out.push_back(SessionInfo{id, snap->status, snap->record.observations.size(), snap->record.config.budget,
                                  snap->last_seq});
    }
    return out;
}

}  // namespace hdsafebo::session
