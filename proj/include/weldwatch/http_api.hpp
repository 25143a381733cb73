#pragma once

// Thread-safe owner of the live MonitorState plus the JSON/HTTP surface.
//
// Readers take a shared_ptr snapshot and never block writers. Mutations run
// one at a time under the writer mutex, are persisted before they become
// visible, and are replayed from cache when a request token repeats.

#include "weldwatch/monitor.hpp"

#include "json.hpp"

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace httplib {
class Server;
}

namespace weldwatch {

struct ServiceOptions {
    std::string state_dir;  // empty: keep state in memory only
    UpdateKnobs knobs;
    BirchOptions birch;
};

class MonitorService {
public:
    MonitorService(MonitorState initial, ServiceOptions options);

    std::shared_ptr<const MonitorState> snapshot() const;
    const ServiceOptions& options() const { return options_; }

    using Json = nlohmann::json;
    // Runs `fn` on the current state under the writer lock. The returned
    // state must carry a higher revision; the response is cached under
    // `token` (when nonempty) and returned again for repeats.
    Json mutate(const std::string& token, std::optional<long long> expected_revision,
                const std::function<std::pair<MonitorState, Json>(const MonitorState&)>& fn);

    // Library-level entry points shared by the CLI and HTTP handlers.
    Json detect(const Json& body);
    Json cluster(const Json& body);
    Json labels(const Json& body);
    Json update(const Json& body);

    Json state_view() const;
    Json clusters_view() const;
    Json sample_view(const std::string& id) const;
    Json metrics_view() const;

private:
    ServiceOptions options_;
    mutable std::mutex read_mutex_;   // guards current_ pointer swaps
    std::mutex write_mutex_;          // single writer
    std::shared_ptr<const MonitorState> current_;
};

// Maps an exception to an HTTP status code.
int status_for(const std::exception& e);

void register_routes(httplib::Server& server, MonitorService& service);

}  // namespace weldwatch
