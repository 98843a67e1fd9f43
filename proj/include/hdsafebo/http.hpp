#pragma once

#include "hdsafebo/optimizer.hpp"
#include "hdsafebo/session.hpp"

#include <memory>
#include <string>

namespace hdsafebo::http {

/// Maps an error code to the HTTP status used by the API.
int status_for(ErrorCode code) noexcept;

/// {"error": {"code", "message", "hint"?}}
io::json error_body(const Error& e);

// Wire front-end for a SessionService:
//   GET  /health
//   GET  /v1/sessions
//   POST /v1/sessions
//   GET  /v1/sessions/:id/state?offset=&limit=
//   POST /v1/sessions/:id/proposal
//   POST /v1/sessions/:id/observations
//   POST /v1/sessions/:id/out-of-band
class ApiServer {
public:
    ApiServer(session::SessionService& service, optimizer::OptimizerConfig base_config, int threads = 4);
    ~ApiServer();

    /// Port 0 picks a free port. Returns the bound port or throws on failure.
    int bind(const std::string& host, int port);
    /// Blocks until stop() is called.
    void listen();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace hdsafebo::http
