#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "maskcycle/curation/store.hpp"

namespace maskcycle::curation {

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080; // 0 picks a free port
    std::filesystem::path export_dir;   // target of POST /export
    std::filesystem::path static_dir;   // optional review UI assets, served at /
    bool stop_after_export = false;     // shut down once an export succeeds
};

// JSON API over a CurationStore:
//   GET  /candidates?state=&order=id|confidence
//   GET  /candidates/{id}
//   GET  /candidates/{id}/image | /mask | /probmap
//   POST /candidates/{id}/decision   {"decision": "...", "annotator": "..."}
//   GET  /stats
//   POST /export
class CurationServer {
public:
    CurationServer(CurationStore& store, ServerOptions options);
    ~CurationServer();

    // Binds the listening socket; BindError if the address is unavailable.
    // Returns the bound port.
    int bind();
    // Serves until stop() (or a successful export with stop_after_export).
    void run();
    void stop();
    bool running() const;

    // Called after each successful export, on the server thread.
    std::function<void(const DatasetManifest&)> on_export;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace maskcycle::curation
