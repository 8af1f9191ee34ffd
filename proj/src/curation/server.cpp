#include "maskcycle/curation/server.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <thread>

#include <httplib.h>

namespace maskcycle::curation {

namespace fs = std::filesystem;
using nlohmann::json;

struct CurationServer::Impl {
    Impl(CurationStore& st, ServerOptions opts) : store(st), options(std::move(opts)) {}

    CurationStore& store;
    ServerOptions options;
    httplib::Server http;
    std::mutex export_mutex;
    std::jthread stopper; // destroyed first, so it never outlives `http`
};

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message)
{
    send_json(res, {{"error", message}}, status);
}

json candidate_view(const Candidate& c, Decision state)
{
    json j = to_json(c);
    j["state"] = to_string(state);
    j["image_url"] = "/candidates/" + c.id + "/image";
    j["mask_url"] = "/candidates/" + c.id + "/mask";
    j["probmap_url"] = "/candidates/" + c.id + "/probmap";
    return j;
}

double confidence(const Candidate& c) { return c.auto_stats ? c.auto_stats->mean_foreground_confidence : -1.0; }

} // namespace

CurationServer::CurationServer(CurationStore& store, ServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options)))
{
    Impl& s = *impl_;
    auto& http = s.http;
    // httplib's default also sets SO_REUSEPORT, which would let a second
    // server silently share an occupied port.
    http.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });

    http.Get("/candidates", [&s](const httplib::Request& req, httplib::Response& res) {
        std::optional<Decision> filter;
        if (req.has_param("state")) {
            try {
                filter = parse_decision(req.get_param_value("state"));
            } catch (const FormatError& e) {
                return send_error(res, 400, e.what());
            }
        }
        const std::string order = req.has_param("order") ? req.get_param_value("order") : "id";
        if (order != "id" && order != "confidence")
            return send_error(res, 400, "order must be 'id' or 'confidence'");
        auto candidates = s.store.candidates(); // already sorted by id
        if (order == "confidence")
            std::stable_sort(candidates.begin(), candidates.end(),
                             [](const auto& a, const auto& b) { return confidence(a) > confidence(b); });
        const auto state = s.store.effective_state();
        json out = json::array();
        for (const auto& c : candidates) {
            const auto it = state.find(c.id);
            const Decision d = it == state.end() ? Decision::Undecided : it->second;
            if (!filter || *filter == d)
                out.push_back(candidate_view(c, d));
        }
        send_json(res, out);
    });

    http.Get("/candidates/:id", [&s](const httplib::Request& req, httplib::Response& res) {
        const std::string& id = req.path_params.at("id");
        try {
            json j = candidate_view(s.store.candidate(id), s.store.state(id));
            json history = json::array();
            for (const auto& r : s.store.history(id))
                history.push_back(to_json(r));
            j["history"] = std::move(history);
            send_json(res, j);
        } catch (const NotFoundError& e) {
            send_error(res, 404, e.what());
        }
    });

    auto asset = [&s](fs::path Candidate::*member) {
        return [&s, member](const httplib::Request& req, httplib::Response& res) {
            try {
                const Candidate c = s.store.candidate(req.path_params.at("id"));
                std::ifstream in(s.store.resolve(c.*member), std::ios::binary);
                if (!in)
                    return send_error(res, 500, "asset missing for " + c.id);
                std::string bytes{std::istreambuf_iterator<char>(in), {}};
                const std::string ext = (c.*member).extension().string();
                res.set_content(std::move(bytes), ext == ".jpg" || ext == ".jpeg" ? "image/jpeg" : "image/png");
            } catch (const NotFoundError& e) {
                send_error(res, 404, e.what());
            }
        };
    };
    http.Get("/candidates/:id/image", asset(&Candidate::image));
    http.Get("/candidates/:id/mask", asset(&Candidate::mask));
    http.Get("/candidates/:id/probmap", asset(&Candidate::probmap));

    http.Post("/candidates/:id/decision", [&s](const httplib::Request& req, httplib::Response& res) {
        const std::string& id = req.path_params.at("id");
        if (!s.store.contains(id))
            return send_error(res, 404, "unknown candidate '" + id + "'");
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error&) {
            return send_error(res, 400, "body must be JSON");
        }
        if (!body.is_object() || !body.contains("decision") || !body["decision"].is_string())
            return send_error(res, 400, "body needs a 'decision' string");
        if (body.contains("annotator") && !body["annotator"].is_string())
            return send_error(res, 400, "'annotator' must be a string");
        try {
            const Decision d = parse_decision(body["decision"].get<std::string>());
            const std::string annotator = body.value("annotator", "anonymous");
            send_json(res, to_json(s.store.record_decision(id, d, annotator)));
        } catch (const FormatError& e) {
            send_error(res, 400, e.what());
        } catch (const NotFoundError& e) {
            send_error(res, 404, e.what());
        }
    });

    http.Get("/stats", [&s](const httplib::Request&, httplib::Response& res) {
        const StoreStats st = s.store.stats();
        send_json(res, {{"total", st.total}, {"accepted", st.accepted}, {"rejected", st.rejected},
                        {"undecided", st.undecided}});
    });

    http.Post("/export", [this, &s](const httplib::Request&, httplib::Response& res) {
        if (s.options.export_dir.empty())
            return send_error(res, 500, "server started without an export directory");
        std::lock_guard lock(s.export_mutex);
        try {
            const DatasetManifest m = export_curated(s.store, s.options.export_dir);
            send_json(res, {{"count", m.size()}, {"manifest", (s.options.export_dir / "manifest.jsonl").string()}});
            if (on_export)
                on_export(m);
            if (s.options.stop_after_export)
                // let the response flush before the listener goes away
                s.stopper = std::jthread([&s] {
                    std::this_thread::sleep_for(std::chrono::milliseconds(100));
                    s.http.stop();
                });
        } catch (const EmptyExportError& e) {
            send_error(res, 409, e.what());
        } catch (const Error& e) {
            send_error(res, 500, e.what());
        }
    });

    if (!s.options.static_dir.empty()) {
        if (!fs::is_directory(s.options.static_dir))
            throw ConfigError("static UI directory " + s.options.static_dir.string() + " does not exist");
        http.set_mount_point("/", s.options.static_dir.string());
    }
}

CurationServer::~CurationServer()
{
    stop();
}

int CurationServer::bind()
{
    Impl& s = *impl_;
    if (s.options.port == 0) {
        const int port = s.http.bind_to_any_port(s.options.host);
        if (port <= 0)
            throw BindError("cannot bind " + s.options.host);
        s.options.port = port;
        return port;
    }
    if (!s.http.bind_to_port(s.options.host, s.options.port))
        throw BindError("cannot bind " + s.options.host + ":" + std::to_string(s.options.port) +
                        " (address in use or unavailable)");
    return s.options.port;
}

void CurationServer::run()
{
    impl_->http.listen_after_bind();
}

void CurationServer::stop()
{
    if (impl_ && impl_->http.is_running())
        impl_->http.stop();
}

bool CurationServer::running() const
{
    return impl_->http.is_running();
}

} // namespace maskcycle::curation
