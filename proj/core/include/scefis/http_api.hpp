#pragma once

#include <memory>
#include <string>

#include "scefis/service.hpp"

namespace scefis {

/// JSON REST front end of a ProjectService, versioned under /v1.
class HttpApi {
public:
    explicit HttpApi(ProjectService& service);
    ~HttpApi();
    HttpApi(const HttpApi&) = delete;
    HttpApi& operator=(const HttpApi&) = delete;

    /// Returns the bound port, or -1.
    int bind(const std::string& host, int port);
    int bind_any_port(const std::string& host);
    /// Blocks until stop().
    bool listen_after_bind();
    void stop();
    bool is_running() const;
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace scefis
