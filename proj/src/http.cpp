#include "hdsafebo/http.hpp"

#include "hdsafebo/errors.hpp"

#include <httplib.h>

#include <charconv>

namespace hdsafebo::http {

using io::json;

int status_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidInput:
        case ErrorCode::ParseError:
        case ErrorCode::InvalidMap:
        case ErrorCode::DegenerateData:
            return 400;
        case ErrorCode::NotFound: return 404;
        case ErrorCode::Conflict: return 409;
        case ErrorCode::SeedUnsafe: return 422;
        case ErrorCode::NumericalFailure: return 500;
    }
    return 500;
}

json error_body(const Error& e) {
    json err{{"code", error_code_name(e.code())}, {"message", e.what()}};
    if (e.code() == ErrorCode::SeedUnsafe) {
        err["hint"] = "add an initial observation with y_g above the threshold, or set "
                      "config.bootstrap_unsafe_seed to start from the least unsafe one";
    }
    return json{{"error", err}};
}

namespace {

void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("request body is not valid JSON: ") + e.what());
    }
}

std::int64_t query_int(const httplib::Request& req, const char* name, std::int64_t fallback) {
    if (!req.has_param(name)) return fallback;
    const std::string v = req.get_param_value(name);
    std::int64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw InvalidInput(std::string("query parameter '") + name + "' must be an integer");
    }
    return out;
}

template <class F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const Error& e) {
            send(res, status_for(e.code()), error_body(e));
        } catch (const json::exception& e) {
            send(res, 400, error_body(ParseError(e.what())));
        } catch (const std::exception& e) {
            send(res, 500, json{{"error", json{{"code", "Internal"}, {"message", e.what()}}}});
        }
    };
}

}  // namespace

struct ApiServer::Impl {
    Impl(session::SessionService& s, optimizer::OptimizerConfig b) : service(s), base(std::move(b)) {}
    session::SessionService& service;
    optimizer::OptimizerConfig base;
    httplib::Server server;
};

ApiServer::ApiServer(session::SessionService& service, optimizer::OptimizerConfig base_config, int threads)
    : impl_(std::make_unique<Impl>(service, std::move(base_config))) {
    auto& srv = impl_->server;
    auto& svc = impl_->service;
    const std::size_t pool = static_cast<std::size_t>(std::max(2, threads));
    srv.new_task_queue = [pool] { return new httplib::ThreadPool(pool); };
    // httplib defaults to SO_REUSEPORT, which lets a second server share the port silently.
    srv.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });

    srv.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) {
        send(res, 200, json{{"status", "ok"}, {"toolkit_version", io::kToolkitVersion}, {"api_version", 1}});
    }));

    srv.Get("/v1/sessions", guarded([&svc](const httplib::Request&, httplib::Response& res) {
        json list = json::array();
        for (const auto& s : svc.list()) {
            list.push_back(json{{"id", s.id},
                                {"status", session::status_name(s.status)},
                                {"evaluations", s.evaluations},
                                {"budget", s.budget},
                                {"last_seq", s.last_seq}});
        }
        send(res, 200, json{{"sessions", list}});
    }));

    Impl* impl = impl_.get();
    srv.Post("/v1/sessions", guarded([impl](const httplib::Request& req, httplib::Response& res) {
        const session::CreateRequest cr = session::create_request_from_json(parse_body(req), impl->base);
        send(res, 201, session::snapshot_to_json(*impl->service.create(cr)));
    }));

    srv.Get("/v1/sessions/:id/state", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
        const auto offset = query_int(req, "offset", 0);
        const auto limit = query_int(req, "limit", -1);
        if (offset < 0) throw InvalidInput("offset must be >= 0");
        const auto snap = svc.get_state(req.path_params.at("id"));
        send(res, 200, session::snapshot_to_json(*snap, static_cast<std::size_t>(offset), limit));
    }));

    srv.Post("/v1/sessions/:id/proposal", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
        const std::string& id = req.path_params.at("id");
        const optimizer::StepProposal prop = svc.get_proposal(id);
        send(res, 200, json{{"session", id}, {"proposal", io::to_json(prop)}});
    }));

    srv.Post("/v1/sessions/:id/observations", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        io::ObjectReader r(body, "");
        std::optional<int> iteration;
        if (r.has("iteration")) iteration = r.integer("iteration", 0);
        const auto results = session::results_from_json(r.require("results"), "results");
        r.finish();
        const auto snap = svc.post_observation(req.path_params.at("id"), results, iteration);
        send(res, 200, session::snapshot_to_json(*snap, 0, 0));
    }));

    srv.Post("/v1/sessions/:id/out-of-band", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
        json body = parse_body(req);
        if (!body.is_object() || !body.contains("x")) throw ParseError("x: required key is missing");
        const Eigen::VectorXd x = io::vector_from_json(body["x"], "x");
        const std::string note = body.contains("note") && body["note"].is_string() ? body["note"].get<std::string>() : "";
        body.erase("x");
        body.erase("note");
        const session::TrialResult result = session::trial_from_json(body, "");
        const auto snap = svc.post_out_of_band(req.path_params.at("id"), x, result, note);
        send(res, 200, session::snapshot_to_json(*snap, 0, 0));
    }));
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
    auto& srv = impl_->server;
    if (port == 0) {
        const int p = srv.bind_to_any_port(host);
        if (p < 0) throw InvalidInput("cannot bind to " + host);
        return p;
    }
    if (!srv.bind_to_port(host, port)) {
        throw InvalidInput("cannot bind to " + host + ":" + std::to_string(port) + " (address in use?)");
    }
    return port;
}

void ApiServer::listen() { impl_->server.listen_after_bind(); }

void ApiServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void ApiServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace hdsafebo::http
