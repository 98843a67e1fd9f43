#include "hdsafebo/serialization.hpp"

#include "hdsafebo/errors.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace hdsafebo::io {

namespace {

std::string join(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : path + "." + std::string(key);
}

std::string index_path(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
}

[[noreturn]] void bad(const std::string& path, const std::string& what) {
    throw ParseError((path.empty() ? std::string("<root>") : path) + ": " + what);
}

json interval_to_json(const gp::Interval& iv) { return json::array({iv.lo, iv.hi}); }

gp::Interval interval_from_json(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2) bad(path, "expected [lo, hi]");
    return {number_from_json(j[0], index_path(path, 0)), number_from_json(j[1], index_path(path, 1))};
}

json optional_number(const std::optional<double>& v) {
    return v ? number_to_json(*v) : json(nullptr);
}

}  // namespace

ObjectReader::ObjectReader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) bad(path_, "expected an object");
}

bool ObjectReader::has(std::string_view key) const { return object_.contains(key); }

std::string ObjectReader::key_path(std::string_view key) const { return join(path_, key); }

const json* ObjectReader::find(std::string_view key) {
    const auto it = object_.find(key);
    if (it == object_.end()) return nullptr;
    seen_.emplace_back(key);
    return &*it;
}

const json& ObjectReader::require(std::string_view key) {
    const json* j = find(key);
    if (!j) bad(key_path(key), "required key is missing");
    return *j;
}

double ObjectReader::number(std::string_view key, double fallback) {
    const json* j = find(key);
    return j ? number_from_json(*j, key_path(key)) : fallback;
}

double ObjectReader::number(std::string_view key) { return number_from_json(require(key), key_path(key)); }

int ObjectReader::integer(std::string_view key, int fallback) {
    const json* j = find(key);
    if (!j) return fallback;
    if (!j->is_number_integer()) bad(key_path(key), "expected an integer");
    const auto v = j->get<std::int64_t>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        bad(key_path(key), "integer out of range");
    }
    return static_cast<int>(v);
}

std::uint64_t ObjectReader::unsigned_integer(std::string_view key, std::uint64_t fallback) {
    const json* j = find(key);
    if (!j) return fallback;
    if (j->is_number_unsigned()) return j->get<std::uint64_t>();
    if (j->is_number_integer() && j->get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j->get<std::int64_t>());
    bad(key_path(key), "expected a non-negative integer");
}

bool ObjectReader::boolean(std::string_view key, bool fallback) {
    const json* j = find(key);
    if (!j) return fallback;
    if (!j->is_boolean()) bad(key_path(key), "expected true or false");
    return j->get<bool>();
}

std::string ObjectReader::string(std::string_view key, std::string fallback) {
    const json* j = find(key);
    if (!j) return fallback;
    if (!j->is_string()) bad(key_path(key), "expected a string");
    return j->get<std::string>();
}

std::string ObjectReader::string(std::string_view key) {
    const json& j = require(key);
    if (!j.is_string()) bad(key_path(key), "expected a string");
    return j.get<std::string>();
}

void ObjectReader::finish() const {
    for (const auto& [key, value] : object_.items()) {
        if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
            bad(key_path(key), "unknown key");
        }
    }
}

json number_to_json(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

double number_from_json(const json& j, const std::string& path) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto& s = j.get_ref<const std::string&>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    }
    bad(path, "expected a number");
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number_to_json(v(i)));
    return out;
}

Eigen::VectorXd vector_from_json(const json& j, const std::string& path) {
    if (!j.is_array()) bad(path, "expected an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = number_from_json(j[i], index_path(path, i));
    }
    return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vector_to_json(m.row(r).transpose()));
    return out;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& path) {
    if (!j.is_array()) bad(path, "expected an array of rows");
    if (j.empty()) return Eigen::MatrixXd(0, 0);
    Eigen::MatrixXd m;
    for (std::size_t r = 0; r < j.size(); ++r) {
        const Eigen::VectorXd row = vector_from_json(j[r], index_path(path, r));
        if (r == 0) m.resize(static_cast<Eigen::Index>(j.size()), row.size());
        if (row.size() != m.cols()) bad(index_path(path, r), "row length differs from the first row");
        m.row(static_cast<Eigen::Index>(r)) = row.transpose();
    }
    return m;
}

json to_json(const embedding::EmbeddingMap& map) {
    json j;
    j["kind"] = embedding::embedding_kind_name(map.kind());
    j["source_dim"] = map.source_dim();
    if (map.kind() == embedding::EmbeddingKind::LinearOrthonormal) {
        j["latent_dim"] = map.latent_dim();
        j["projection"] = matrix_to_json(map.projection());
        j["offset"] = vector_to_json(map.offset());
    }
    return j;
}

embedding::EmbeddingMap embedding_from_json(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    const std::string kind = r.string("kind");
    const int source_dim = r.integer("source_dim", -1);
    std::optional<embedding::EmbeddingMap> map;
    try {
        if (kind == "identity") {
            if (source_dim < 1) bad(r.key_path("source_dim"), "identity map needs source_dim >= 1");
            map = embedding::EmbeddingMap::identity(source_dim);
        } else if (kind == "linear_orthonormal") {
            const int latent_dim = r.integer("latent_dim", -1);
            Eigen::MatrixXd w = matrix_from_json(r.require("projection"), r.key_path("projection"));
            Eigen::VectorXd m = vector_from_json(r.require("offset"), r.key_path("offset"));
            if (source_dim >= 0 && w.cols() != source_dim) bad(r.key_path("projection"), "column count differs from source_dim");
            if (latent_dim >= 0 && w.rows() != latent_dim) bad(r.key_path("projection"), "row count differs from latent_dim");
            map = embedding::EmbeddingMap::linear(std::move(w), std::move(m), 1e-6);
        } else {
            bad(r.key_path("kind"), "unknown embedding kind '" + kind + "'");
        }
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        bad(path, e.what());
    }
    r.finish();
    return *map;
}

json to_json(const optimizer::OptimizerConfig& cfg) {
    json safety{{"alpha", cfg.safety.alpha},
                {"beta_override", optional_number(cfg.safety.beta_override)},
                {"mode", safety::safety_mode_name(cfg.safety.mode)},
                {"threshold", cfg.safety.threshold}};
    json tr{{"success_tolerance", cfg.trust_region.success_tolerance},
            {"failure_tolerance", cfg.trust_region.failure_tolerance},
            {"initial_length", cfg.trust_region.initial_length},
            {"max_length", cfg.trust_region.max_length},
            {"min_length", cfg.trust_region.min_length}};
    const optimizer::SurrogateConfig& s = cfg.surrogate;
    json surrogate{{"kernel", gp::kernel_family_name(s.family)},
                   {"lengthscale_bounds", interval_to_json(s.bounds.lengthscale)},
                   {"output_scale_bounds", interval_to_json(s.bounds.output_scale)},
                   {"noise_variance_bounds", interval_to_json(s.bounds.noise_variance)},
                   {"restarts", s.restarts},
                   {"iterations", s.iterations},
                   {"refit_stride", s.refit_stride},
                   {"standardize", s.standardize},
                   {"window", s.window}};
    return json{{"safety", safety},
                {"batch_size", cfg.batch_size},
                {"candidate_count", cfg.candidate_count},
                {"budget", cfg.budget},
                {"seed", cfg.seed},
                {"embedding", cfg.embedding ? to_json(*cfg.embedding) : json(nullptr)},
                {"trust_region", tr},
                {"surrogate", surrogate},
                {"search_mode", optimizer::search_mode_name(cfg.search_mode)},
                {"bootstrap_unsafe_seed", cfg.bootstrap_unsafe_seed}};
}

optimizer::OptimizerConfig optimizer_config_from_json(const json& j, const std::string& path) {
    optimizer::OptimizerConfig cfg;
    ObjectReader r(j, path);
    cfg.batch_size = r.integer("batch_size", cfg.batch_size);
    cfg.candidate_count = r.integer("candidate_count", cfg.candidate_count);
    cfg.budget = r.integer("budget", cfg.budget);
    cfg.seed = r.unsigned_integer("seed", cfg.seed);
    cfg.bootstrap_unsafe_seed = r.boolean("bootstrap_unsafe_seed", cfg.bootstrap_unsafe_seed);
    if (r.has("search_mode")) {
        const std::string mode = r.string("search_mode");
        try {
            cfg.search_mode = optimizer::parse_search_mode(mode);
        } catch (const Error& e) {
            bad(r.key_path("search_mode"), e.what());
        }
    }
    if (const json* e = r.find("embedding"); e && !e->is_null()) {
        cfg.embedding = embedding_from_json(*e, r.key_path("embedding"));
    }
    if (const json* s = r.find("safety")) {
        ObjectReader sr(*s, r.key_path("safety"));
        cfg.safety.alpha = sr.number("alpha", cfg.safety.alpha);
        if (const json* b = sr.find("beta_override")) {
            cfg.safety.beta_override = b->is_null() ? std::nullopt
                                                    : std::optional<double>(number_from_json(*b, sr.key_path("beta_override")));
        }
        if (sr.has("mode")) {
            const std::string mode = sr.string("mode");
            try {
                cfg.safety.mode = safety::parse_safety_mode(mode);
            } catch (const Error& e) {
                bad(sr.key_path("mode"), e.what());
            }
        }
        cfg.safety.threshold = sr.number("threshold", cfg.safety.threshold);
        sr.finish();
        try {
            cfg.safety.validate();
        } catch (const InvalidInput& e) {
            bad(sr.key_path("alpha"), e.what());
        }
    }
    if (const json* t = r.find("trust_region")) {
        ObjectReader tr(*t, r.key_path("trust_region"));
        auto& c = cfg.trust_region;
        c.success_tolerance = tr.integer("success_tolerance", c.success_tolerance);
        c.failure_tolerance = tr.integer("failure_tolerance", c.failure_tolerance);
        c.initial_length = tr.number("initial_length", c.initial_length);
        c.max_length = tr.number("max_length", c.max_length);
        c.min_length = tr.number("min_length", c.min_length);
        tr.finish();
        try {
            c.validate();
        } catch (const InvalidInput& e) {
            bad(r.key_path("trust_region"), e.what());
        }
    }
    if (const json* s = r.find("surrogate")) {
        ObjectReader sr(*s, r.key_path("surrogate"));
        auto& c = cfg.surrogate;
        if (sr.has("kernel")) {
            const std::string family = sr.string("kernel");
            try {
                c.family = gp::parse_kernel_family(family);
            } catch (const Error& e) {
                bad(sr.key_path("kernel"), e.what());
            }
        }
        if (const json* b = sr.find("lengthscale_bounds")) {
            c.bounds.lengthscale = interval_from_json(*b, sr.key_path("lengthscale_bounds"));
        }
        if (const json* b = sr.find("output_scale_bounds")) {
            c.bounds.output_scale = interval_from_json(*b, sr.key_path("output_scale_bounds"));
        }
        if (const json* b = sr.find("noise_variance_bounds")) {
            c.bounds.noise_variance = interval_from_json(*b, sr.key_path("noise_variance_bounds"));
        }
        c.restarts = sr.integer("restarts", c.restarts);
        c.iterations = sr.integer("iterations", c.iterations);
        c.refit_stride = sr.integer("refit_stride", c.refit_stride);
        c.standardize = sr.boolean("standardize", c.standardize);
        c.window = sr.integer("window", c.window);
        sr.finish();
        try {
            c.bounds.validate();
        } catch (const InvalidInput& e) {
            bad(r.key_path("surrogate"), e.what());
        }
    }
    r.finish();
    try {
        cfg.validate();
    } catch (const InvalidInput& e) {
        bad(path, e.what());
    }
    return cfg;
}

json to_json(const benchmarks::TaskSpec& spec) {
    return json{{"ambient_dim", spec.ambient_dim},
                {"effective_dim", spec.effective_dim},
                {"shift", spec.shift},
                {"kernel", gp::kernel_family_name(spec.kernel.family)},
                {"lengthscale", spec.kernel.lengthscale},
                {"output_scale", spec.kernel.output_scale},
                {"structure", benchmarks::task_structure_name(spec.structure)},
                {"projection_scale", spec.projection_scale}};
}

benchmarks::TaskSpec task_spec_from_json(const json& j, const std::string& path) {
    benchmarks::TaskSpec spec;
    ObjectReader r(j, path);
    spec.ambient_dim = r.integer("ambient_dim", spec.ambient_dim);
    spec.effective_dim = r.integer("effective_dim", spec.effective_dim);
    spec.shift = r.number("shift", spec.shift);
    try {
        if (r.has("kernel")) spec.kernel.family = gp::parse_kernel_family(r.string("kernel"));
        if (r.has("structure")) spec.structure = benchmarks::parse_task_structure(r.string("structure"));
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        bad(path, e.what());
    }
    spec.kernel.lengthscale = r.number("lengthscale", spec.kernel.lengthscale);
    spec.kernel.output_scale = r.number("output_scale", spec.kernel.output_scale);
    spec.projection_scale = r.number("projection_scale", spec.projection_scale);
    r.finish();
    try {
        spec.validate();
    } catch (const InvalidInput& e) {
        bad(path, e.what());
    }
    return spec;
}

json to_json(const optimizer::Metrics& m) {
    return json{{"evaluations", m.evaluations},
                {"best_feasible", optional_number(m.best_feasible)},
                {"safe_ratio", number_to_json(m.safe_ratio)},
                {"cumulative_violation", number_to_json(m.cumulative_violation)}};
}

optimizer::Metrics metrics_from_json(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    optimizer::Metrics m;
    const json& n = r.require("evaluations");
    if (!n.is_number_unsigned() && !(n.is_number_integer() && n.get<std::int64_t>() >= 0)) {
        bad(r.key_path("evaluations"), "expected a non-negative integer");
    }
    m.evaluations = n.get<std::size_t>();
    const json& best = r.require("best_feasible");
    if (!best.is_null()) m.best_feasible = number_from_json(best, r.key_path("best_feasible"));
    m.safe_ratio = r.number("safe_ratio");
    m.cumulative_violation = r.number("cumulative_violation");
    r.finish();
    return m;
}

json to_json(const optimizer::IterationRecord& rec) {
    return json{{"iteration", rec.iteration},
                {"batch_size", rec.batch_size},
                {"safe_set_size", rec.safe_set_size},
                {"fallback", rec.fallback},
                {"trust_region_length", number_to_json(rec.trust_region_length)},
                {"success_count", rec.success_count},
                {"failure_count", rec.failure_count},
                {"incumbent_value", number_to_json(rec.incumbent_value)},
                {"metrics", to_json(rec.metrics)}};
}

optimizer::IterationRecord iteration_record_from_json(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    optimizer::IterationRecord rec;
    rec.iteration = r.integer("iteration", -1);
    rec.batch_size = r.unsigned_integer("batch_size", 0);
    rec.safe_set_size = r.unsigned_integer("safe_set_size", 0);
    rec.fallback = r.boolean("fallback", false);
    rec.trust_region_length = r.number("trust_region_length");
    rec.success_count = r.integer("success_count", 0);
    rec.failure_count = r.integer("failure_count", 0);
    rec.incumbent_value = r.number("incumbent_value");
    rec.metrics = metrics_from_json(r.require("metrics"), r.key_path("metrics"));
    r.finish();
    return rec;
}

json to_json(const trust_region::TrustRegionState& s) {
    return json{{"length", number_to_json(s.length)},
                {"success_count", s.success_count},
                {"failure_count", s.failure_count},
                {"incumbent_point", vector_to_json(s.incumbent_point)},
                {"incumbent_value", number_to_json(s.incumbent_value)}};
}

json observation_to_json(const optimizer::Observation& o, bool with_timestamp) {
    json j{{"x", vector_to_json(o.x)},
           {"y_f", number_to_json(o.y_f)},
           {"y_g", number_to_json(o.y_g)},
           {"iteration", o.iteration}};
    if (with_timestamp && o.timestamp) j["timestamp"] = *o.timestamp;
    return j;
}

optimizer::Observation observation_from_json(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    optimizer::Observation o;
    o.x = vector_from_json(r.require("x"), r.key_path("x"));
    o.y_f = r.number("y_f");
    o.y_g = r.number("y_g");
    o.iteration = r.integer("iteration", 0);
    if (const json* t = r.find("timestamp")) o.timestamp = number_from_json(*t, r.key_path("timestamp"));
    r.finish();
    return o;
}

json to_json(const optimizer::StepProposal& p) {
    json bounds = json::array();
    for (double b : p.safety_bounds) bounds.push_back(number_to_json(b));
    return json{{"iteration", p.iteration},
                {"points", matrix_to_json(p.points)},
                {"latent", matrix_to_json(p.latent)},
                {"safety_bounds", bounds},
                {"safe_set_size", p.safe_set_size},
                {"candidate_count", p.candidate_count},
                {"fallback", p.fallback},
                {"region", json{{"lower", vector_to_json(p.region.lower)}, {"upper", vector_to_json(p.region.upper)}}}};
}

optimizer::StepProposal proposal_from_json(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    optimizer::StepProposal p;
    p.iteration = r.integer("iteration", -1);
    p.points = matrix_from_json(r.require("points"), r.key_path("points"));
    p.latent = matrix_from_json(r.require("latent"), r.key_path("latent"));
    const Eigen::VectorXd bounds = vector_from_json(r.require("safety_bounds"), r.key_path("safety_bounds"));
    p.safety_bounds.assign(bounds.data(), bounds.data() + bounds.size());
    p.safe_set_size = r.unsigned_integer("safe_set_size", 0);
    p.candidate_count = r.unsigned_integer("candidate_count", 0);
    p.fallback = r.boolean("fallback", false);
    ObjectReader region(r.require("region"), r.key_path("region"));
    p.region.lower = vector_from_json(region.require("lower"), region.key_path("lower"));
    p.region.upper = vector_from_json(region.require("upper"), region.key_path("upper"));
    region.finish();
    r.finish();
    if (p.points.rows() == 0 || static_cast<std::size_t>(p.points.rows()) != p.safety_bounds.size() ||
        p.latent.rows() != p.points.rows()) {
        bad(path, "points, latent and safety_bounds must have the same non-zero length");
    }
    return p;
}

std::string state_hash(const optimizer::RunRecord& record) {
    json observations = json::array();
    for (const auto& o : record.observations) observations.push_back(observation_to_json(o, false));
    json iterations = json::array();
    for (const auto& it : record.iterations) iterations.push_back(to_json(it));
    const json canonical{{"config", to_json(record.config)},
                         {"observations", observations},
                         {"initial_metrics", to_json(record.initial_metrics)},
                         {"iterations", iterations},
                         {"final_metrics", to_json(record.final_metrics)},
                         {"trust_region", to_json(record.trust_region)},
                         {"unsafe_seed", record.unsafe_seed}};
    const std::string text = canonical.dump();

    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw NumericalFailure("state_hash: SHA-256 digest failed");
    }
    std::string hex;
    hex.reserve(2 * len);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

json run_summary(const optimizer::RunRecord& record, const json& context) {
    json trajectory = json::array();
    for (const auto& it : record.iterations) trajectory.push_back(to_json(it));
    return json{{"schema", kSummarySchema},
                {"schema_version", kSchemaVersion},
                {"toolkit_version", kToolkitVersion},
                {"config", to_json(record.config)},
                {"context", context},
                {"initial_metrics", to_json(record.initial_metrics)},
                {"final_metrics", to_json(record.final_metrics)},
                {"trajectory", trajectory},
                {"trust_region", to_json(record.trust_region)},
                {"unsafe_seed", record.unsafe_seed},
                {"failure", record.failure ? json(*record.failure) : json(nullptr)},
                {"state_hash", state_hash(record)}};
}

void write_run_log(std::ostream& out, const optimizer::RunRecord& record, const json& context) {
    std::int64_t seq = 0;
    const auto emit = [&](json line) {
        line["seq"] = ++seq;
        out << line.dump() << '\n';
    };
    emit(json{{"type", "header"},
              {"schema", kRunLogSchema},
              {"schema_version", kSchemaVersion},
              {"toolkit_version", kToolkitVersion},
              {"config", to_json(record.config)},
              {"context", context}});
    std::size_t next = 0;
    const auto emit_observations = [&](int iteration) {
        while (next < record.observations.size() && record.observations[next].iteration == iteration) {
            json line = observation_to_json(record.observations[next], true);
            line["type"] = "observation";
            emit(std::move(line));
            ++next;
        }
    };
    emit_observations(0);
    emit(json{{"type", "init"}, {"metrics", to_json(record.initial_metrics)}, {"unsafe_seed", record.unsafe_seed}});
    for (const auto& it : record.iterations) {
        emit_observations(it.iteration);
        emit(json{{"type", "iteration"}, {"record", to_json(it)}});
    }
    emit(json{{"type", "end"},
              {"final_metrics", to_json(record.final_metrics)},
              {"trust_region", to_json(record.trust_region)},
              {"failure", record.failure ? json(*record.failure) : json(nullptr)},
              {"state_hash", state_hash(record)}});
}

namespace {

std::string describe(const optimizer::Metrics& m) { return to_json(m).dump(); }

}  // namespace

ReplayResult replay_run_log(std::istream& in) {
    ReplayResult result;
    std::optional<optimizer::OptimizerConfig> config;
    std::optional<optimizer::RunState> state;
    std::vector<optimizer::Observation> pending;
    std::optional<std::string> failure;
    bool ended = false;
    std::int64_t expected = 1;

    const auto reject = [&](std::int64_t seq, std::string message) {
        result.first_bad_seq = seq;
        result.message = std::move(message);
    };

    std::string line;
    while (std::getline(in, line)) {
        const bool had_newline = !in.eof();
        if (line.empty() && !had_newline) break;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception&) {
            if (!had_newline && in.peek() == std::char_traits<char>::eof()) {
                result.truncated = true;
                result.message = "final line is incomplete";
            } else {
                reject(expected, "line is not valid JSON");
            }
            break;
        }
        if (!j.is_object() || !j.contains("seq") || !j["seq"].is_number_integer()) {
            reject(expected, "record has no integer seq");
            break;
        }
        const auto seq = j["seq"].get<std::int64_t>();
        if (seq != expected) {
            reject(expected, "expected seq " + std::to_string(expected) + " but found " + std::to_string(seq));
            break;
        }
        if (ended) {
            reject(seq, "record after the end record");
            break;
        }
        const std::string where = "seq " + std::to_string(seq);
        try {
            const std::string type = j.value("type", "");
            if (seq == 1) {
                if (type != "header" || j.value("schema", "") != kRunLogSchema) {
                    throw ParseError("first record is not a run-log header");
                }
                if (j.value("schema_version", 0) != kSchemaVersion) {
                    throw ParseError("unsupported schema_version");
                }
                config = optimizer_config_from_json(j.at("config"), "config");
                result.context = j.value("context", json::object());
            } else if (type == "observation") {
                json body = j;
                body.erase("seq");
                body.erase("type");
                optimizer::Observation o = observation_from_json(body, where);
                const int want = state ? state->next_iteration : 0;
                if (o.iteration != want) {
                    throw ParseError("observation for iteration " + std::to_string(o.iteration) +
                                     " where iteration " + std::to_string(want) + " was expected");
                }
                pending.push_back(std::move(o));
            } else if (type == "init") {
                if (state) throw ParseError("duplicate init record");
                state = optimizer::init_run(*config, pending);
                pending.clear();
                const optimizer::Metrics stored = metrics_from_json(j.at("metrics"), where + ".metrics");
                if (!(stored == state->initial_metrics)) {
                    throw InvalidInput("initial metric mismatch: stored " + describe(stored) + ", recomputed " +
                                       describe(state->initial_metrics));
                }
                if (j.value("unsafe_seed", false) != state->unsafe_seed) {
                    throw InvalidInput("unsafe_seed flag mismatch");
                }
            } else if (type == "iteration") {
                if (!state) throw ParseError("iteration record before init");
                const optimizer::IterationRecord stored = iteration_record_from_json(j.at("record"), where + ".record");
                if (pending.empty() || stored.iteration != state->next_iteration) {
                    throw ParseError("iteration record without its observations");
                }
                Eigen::MatrixXd points(static_cast<Eigen::Index>(pending.size()), pending.front().x.size());
                trust_region::BatchOutcome outcome;
                for (std::size_t i = 0; i < pending.size(); ++i) {
                    if (pending[i].x.size() != points.cols()) throw ParseError("observation dimension mismatch");
                    points.row(static_cast<Eigen::Index>(i)) = pending[i].x.transpose();
                    outcome.y_f.push_back(pending[i].y_f);
                    outcome.y_g.push_back(pending[i].y_g);
                }
                optimizer::apply_batch(*state, stored.iteration, points, outcome, stored.safe_set_size,
                                       stored.fallback);
                pending.clear();
                const optimizer::IterationRecord& got = state->iterations.back();
                if (!(got == stored)) {
                    throw InvalidInput("metric mismatch at iteration " + std::to_string(stored.iteration) +
                                       ": stored " + to_json(stored).dump() + ", recomputed " + to_json(got).dump());
                }
            } else if (type == "end") {
                if (!state) throw ParseError("end record before init");
                if (!pending.empty()) throw ParseError("observations without an iteration record");
                if (const auto& f = j.at("failure"); !f.is_null()) failure = f.get<std::string>();
                optimizer::RunRecord rec = optimizer::make_record(*state);
                rec.failure = failure;
                const optimizer::Metrics stored = metrics_from_json(j.at("final_metrics"), where + ".final_metrics");
                if (!(stored == rec.final_metrics)) {
                    throw InvalidInput("final metric mismatch: stored " + describe(stored) + ", recomputed " +
                                       describe(rec.final_metrics));
                }
                const std::string hash = state_hash(rec);
                if (j.value("state_hash", "") != hash) {
                    throw InvalidInput("state hash mismatch: stored " + j.value("state_hash", "") + ", recomputed " +
                                       hash);
                }
                ended = true;
            } else {
                throw ParseError("unknown record type '" + type + "'");
            }
        } catch (const Error& e) {
            reject(seq, e.what());
            break;
        } catch (const json::exception& e) {
            reject(seq, e.what());
            break;
        }
        result.last_valid_seq = seq;
        ++expected;
    }

    if (!result.first_bad_seq && !ended) {
        result.truncated = true;
        if (result.message.empty()) result.message = "log ends before the end record";
    }
    result.complete = ended && !result.first_bad_seq;
    if (state) {
        optimizer::RunRecord rec = optimizer::make_record(*state);
        rec.failure = failure;
        result.state_hash = state_hash(rec);
        result.record = std::move(rec);
    }
    return result;
}

}  // namespace hdsafebo::io
