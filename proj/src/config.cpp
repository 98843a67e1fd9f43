#include "hdsafebo/config.hpp"

#include "hdsafebo/errors.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace hdsafebo::config {

namespace {

using io::ObjectReader;

std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

benchmarks::EmbeddingChoice embedding_choice(const json& j, const std::string& path,
                                             const std::filesystem::path& base_dir) {
    ObjectReader r(j, path);
    benchmarks::EmbeddingChoice c;
    const std::string kind = r.string("kind");
    if (kind == "identity") {
        c.kind = benchmarks::EmbeddingChoice::Kind::Identity;
    } else if (kind == "task_subspace") {
        c.kind = benchmarks::EmbeddingChoice::Kind::TaskSubspace;
    } else if (kind == "pca") {
        c.kind = benchmarks::EmbeddingChoice::Kind::Pca;
        c.latent_dim = r.integer("latent_dim", 0);
        if (c.latent_dim < 1) throw ParseError(r.key_path("latent_dim") + ": must be >= 1");
    } else if (kind == "file") {
        c.kind = benchmarks::EmbeddingChoice::Kind::File;
        std::filesystem::path p = r.string("path");
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        c.path = p.string();
    } else {
        throw ParseError(r.key_path("kind") + ": unknown embedding kind '" + kind + "'");
    }
    r.finish();
    return c;
}

std::vector<std::uint64_t> seed_list(const json& j, const std::string& path) {
    std::vector<std::uint64_t> seeds;
    if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (!j[i].is_number_integer() || j[i].get<std::int64_t>() < 0) {
                throw ParseError(at(path, i) + ": expected a non-negative integer");
            }
            seeds.push_back(j[i].get<std::uint64_t>());
        }
    } else {
        ObjectReader r(j, path);
        const std::uint64_t first = r.unsigned_integer("first", 0);
        const int count = r.integer("count", 1);
        if (count < 1) throw ParseError(r.key_path("count") + ": must be >= 1");
        r.finish();
        for (int i = 0; i < count; ++i) seeds.push_back(first + static_cast<std::uint64_t>(i));
    }
    if (seeds.empty()) throw ParseError(path + ": at least one seed is required");
    return seeds;
}

}  // namespace

json to_json(const benchmarks::EmbeddingChoice& c) {
    switch (c.kind) {
        case benchmarks::EmbeddingChoice::Kind::Identity:
            return json{{"kind", "identity"}};
        case benchmarks::EmbeddingChoice::Kind::TaskSubspace:
            return json{{"kind", "task_subspace"}};
        case benchmarks::EmbeddingChoice::Kind::Pca:
            return json{{"kind", "pca"}, {"latent_dim", c.latent_dim}};
        case benchmarks::EmbeddingChoice::Kind::File:
            return json{{"kind", "file"}, {"path", c.path}};
    }
    return json{};
}

ToolkitConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
    ToolkitConfig cfg;
    ObjectReader root(doc, "");
    if (const json* v = root.find("schema_version"); v && (!v->is_number_integer() || v->get<int>() != io::kSchemaVersion)) {
        throw ParseError("schema_version: unsupported value " + v->dump());
    }
    root.find("toolkit_version");  // informational in resolved echoes

    json base_optimizer = json::object();
    if (const json* o = root.find("optimizer")) {
        cfg.optimizer = io::optimizer_config_from_json(*o, "optimizer");
        base_optimizer = *o;
    }
    cfg.out_dir = root.string("out_dir", cfg.out_dir);

    if (const json* s = root.find("serve")) {
        ObjectReader r(*s, "serve");
        cfg.serve.bind = r.string("bind", cfg.serve.bind);
        cfg.serve.port = r.integer("port", cfg.serve.port);
        cfg.serve.data_dir = r.string("data_dir", cfg.serve.data_dir);
        cfg.serve.threads = r.integer("threads", cfg.serve.threads);
        if (cfg.serve.port < 0 || cfg.serve.port > 65535) throw ParseError("serve.port: out of range");
        if (cfg.serve.threads < 1) throw ParseError("serve.threads: must be >= 1");
        r.finish();
    }

    if (const json* b = root.find("bench")) {
        ObjectReader r(*b, "bench");
        BenchSettings& bench = cfg.bench;
        if (const json* t = r.find("task")) bench.task = io::task_spec_from_json(*t, "bench.task");
        bench.options.budget = r.integer("budget", bench.options.budget);
        bench.options.init_count = r.integer("init_count", bench.options.init_count);
        bench.options.threads = r.integer("threads", bench.options.threads);
        if (bench.options.init_count < 1 || bench.options.init_count > bench.options.budget) {
            throw ParseError("bench.init_count: must be in [1, budget]");
        }
        if (bench.options.threads < 1) throw ParseError("bench.threads: must be >= 1");
        bench.options.seeds = r.has("seeds") ? seed_list(r.require("seeds"), "bench.seeds")
                                             : std::vector<std::uint64_t>{0};
        benchmarks::EmbeddingChoice default_embedding;
        if (const json* e = r.find("embedding")) default_embedding = embedding_choice(*e, "bench.embedding", base_dir);

        const json& methods = r.require("methods");
        if (!methods.is_array() || methods.empty()) throw ParseError("bench.methods: expected a non-empty array");
        for (std::size_t i = 0; i < methods.size(); ++i) {
            const std::string path = at("bench.methods", i);
            ObjectReader m(methods[i], path);
            benchmarks::MethodSpec spec;
            spec.name = m.string("name");
            if (spec.name.empty()) throw ParseError(m.key_path("name") + ": must not be empty");
            for (const auto& other : bench.methods) {
                if (other.name == spec.name) throw ParseError(m.key_path("name") + ": duplicate method name");
            }
            json merged = base_optimizer;
            if (const json* o = m.find("optimizer")) {
                if (!o->is_object()) throw ParseError(m.key_path("optimizer") + ": expected an object");
                merged.merge_patch(*o);
            }
            spec.config = io::optimizer_config_from_json(merged, m.key_path("optimizer"));
            spec.embedding = default_embedding;
            if (const json* e = m.find("embedding")) spec.embedding = embedding_choice(*e, m.key_path("embedding"), base_dir);
            m.finish();
            bench.methods.push_back(std::move(spec));
        }
        r.finish();
    }
    root.finish();
    return cfg;
}

ToolkitConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return parse_config(doc, path.parent_path());
}

std::optional<std::string> process_env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

void apply_bind(ServeSettings& serve, const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) {
        serve.bind = bind;
        return;
    }
    const std::string host = bind.substr(0, colon);
    const std::string port = bind.substr(colon + 1);
    int value = -1;
    const auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (ec != std::errc() || ptr != port.data() + port.size() || value < 0 || value > 65535) {
        throw InvalidInput("bind address '" + bind + "' has an invalid port");
    }
    if (!host.empty()) serve.bind = host;
    serve.port = value;
}

void apply_environment(ToolkitConfig& cfg, const EnvLookup& env) {
    if (auto v = env("HDSAFEBO_DATA_DIR")) cfg.serve.data_dir = *v;
    if (auto v = env("HDSAFEBO_BIND")) apply_bind(cfg.serve, *v);
    if (auto v = env("HDSAFEBO_PORT")) apply_bind(cfg.serve, ":" + *v);
    if (auto v = env("HDSAFEBO_OUT_DIR")) cfg.out_dir = *v;
}

json to_json(const ToolkitConfig& cfg) {
    json methods = json::array();
    for (const auto& m : cfg.bench.methods) {
        methods.push_back(json{{"name", m.name}, {"optimizer", io::to_json(m.config)}, {"embedding", to_json(m.embedding)}});
    }
    json doc{{"schema_version", io::kSchemaVersion},
             {"toolkit_version", io::kToolkitVersion},
             {"optimizer", io::to_json(cfg.optimizer)},
             {"out_dir", cfg.out_dir},
             {"serve",
              json{{"bind", cfg.serve.bind},
                   {"port", cfg.serve.port},
                   {"data_dir", cfg.serve.data_dir},
                   {"threads", cfg.serve.threads}}}};
    if (!methods.empty()) {
        doc["bench"] = json{{"task", io::to_json(cfg.bench.task)},
                            {"budget", cfg.bench.options.budget},
                            {"init_count", cfg.bench.options.init_count},
                            {"threads", cfg.bench.options.threads},
                            {"seeds", cfg.bench.options.seeds},
                            {"methods", methods}};
    }
    return doc;
}

}  // namespace hdsafebo::config
