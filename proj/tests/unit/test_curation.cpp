#include <doctest.h>

#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <thread>

#include "maskcycle/curation/server.hpp"
#include "maskcycle/imaging/io.hpp"
#include "maskcycle/toyworld/toyworld.hpp"
#include "support/temp_dir.hpp"

// after Eigen: <resolv.h> defines a `_res` macro that collides with Eigen internals
#include <httplib.h>

using namespace maskcycle;
using namespace maskcycle::curation;
using nlohmann::json;

namespace {

std::filesystem::path write_pool(const std::filesystem::path& dir, int count)
{
    std::filesystem::create_directories(dir);
    toyworld::FrameParams p;
    p.height = p.width = 16;
    for (int i = 0; i < count; ++i) {
        Rng rng = substream(99, static_cast<std::uint64_t>(i));
        save_image(toyworld::real_frame(p, rng).image, dir / ("frame_" + zero_padded_id(i, 3) + ".png"));
    }
    return dir;
}

// Candidates with placeholder assets, for store-level tests.
std::vector<Candidate> fake_candidates(const std::filesystem::path& store_dir, int count)
{
    std::vector<Candidate> out;
    for (int i = 0; i < count; ++i) {
        const std::string id = "c" + zero_padded_id(i, 4);
        const auto assets = std::filesystem::path("assets") / id;
        std::filesystem::create_directories(store_dir / assets);
        BinaryMask m(4, 4);
        m(i % 4, 0) = 1;
        save_mask(m, store_dir / assets / "mask.png");
        save_mask(m, store_dir / assets / "probmap.png");
        save_image(ImageBuffer(4, 4, 3, 0.5f), store_dir / assets / "image.png");
        out.push_back({id, assets / "image.png", assets / "probmap.png", assets / "mask.png", id + ".png", "test",
                       utc_timestamp(), AutoStats{0.25, 0.1 * (i % 7)}});
    }
    return out;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST_CASE("candidate generation samples without replacement, deterministically")
{
    testing::TempDir tmp;
    const auto pool = write_pool(tmp / "pool", 12);
    auto model = segmentation::build_model({1, 2, 0});
    CandidateOptions opt;
    opt.sample_count = 5;
    opt.seed = 7;
    const auto a = generate_candidates(model, pool, opt, tmp / "a");
    const auto b = generate_candidates(model, pool, opt, tmp / "b");
    std::set<std::string> ids_a, ids_b;
    for (const auto& c : a.candidates())
        ids_a.insert(c.id);
    for (const auto& c : b.candidates())
        ids_b.insert(c.id);
    CHECK(ids_a.size() == 5);
    CHECK(ids_a == ids_b);
    for (const auto& c : a.candidates()) {
        CHECK(std::filesystem::exists(a.resolve(c.image)));
        CHECK(std::filesystem::exists(a.resolve(c.mask)));
        CHECK(std::filesystem::exists(a.resolve(c.probmap)));
        REQUIRE(c.auto_stats.has_value());
        CHECK(c.auto_stats->foreground_fraction >= 0);
        CHECK(c.auto_stats->foreground_fraction <= 1);
        CHECK(slurp(a.resolve(c.image)) == slurp(pool / c.source));
        CHECK(a.state(c.id) == Decision::Undecided);
    }
    opt.seed = 8;
    std::set<std::string> ids_c;
    for (const auto& c : generate_candidates(model, pool, opt, tmp / "c").candidates())
        ids_c.insert(c.id);
    CHECK(ids_c.size() == 5);

    opt.sample_count = 13;
    CHECK_THROWS_AS(generate_candidates(model, pool, opt, tmp / "d"), DataError);
    opt.sample_count = 0;
    CHECK_THROWS_AS(generate_candidates(model, pool, opt, tmp / "d"), PreconditionError);
    opt.sample_count = 1;
    CHECK_THROWS_AS(generate_candidates(model, tmp / "missing", opt, tmp / "d"), DataError);
}

TEST_CASE("decisions: latest wins, unknown ids, export")
{
    testing::TempDir tmp;
    auto store = CurationStore::create(tmp / "store", fake_candidates(tmp / "store", 4));
    CHECK_THROWS_AS(export_curated(store, tmp / "export0"), EmptyExportError);
    CHECK_THROWS_AS(store.record_decision("nope", Decision::Accepted, "a1"), NotFoundError);

    store.record_decision("c0000", Decision::Accepted, "a1");
    store.record_decision("c0001", Decision::Accepted, "a1");
    const auto r = store.record_decision("c0001", Decision::Rejected, "a2");
    CHECK(r.previous == Decision::Accepted);
    store.record_decision("c0002", Decision::Rejected, "a1");
    CHECK(store.state("c0001") == Decision::Rejected);
    CHECK(store.history("c0001").size() == 2);

    const auto st = store.stats();
    CHECK(st.total == 4);
    CHECK(st.accepted == 1);
    CHECK(st.rejected == 2);
    CHECK(st.undecided == 1);

    const auto exported = export_curated(store, tmp / "export");
    REQUIRE(exported.size() == 1);
    CHECK(exported.entries()[0].id == "c0000");
    CHECK(exported.entries()[0].split == "pseudo-label");
    CHECK(slurp(exported.mask_path(exported.entries()[0])) == slurp(store.resolve(store.candidate("c0000").mask)));
    CHECK(DatasetManifest::load(tmp / "export" / "manifest.jsonl").entries() == exported.entries());
}

TEST_CASE("replaying the log reproduces live state")
{
    testing::TempDir tmp;
    std::mt19937_64 rng(5);
    auto live = CurationStore::create(tmp / "store", fake_candidates(tmp / "store", 10));
    std::uniform_int_distribution<int> pick(0, 9), dec(0, 2);
    for (int i = 0; i < 200; ++i)
        live.record_decision("c" + zero_padded_id(static_cast<std::size_t>(pick(rng)), 4),
                             static_cast<Decision>(dec(rng)), "a" + std::to_string(i % 3));
    const auto reopened = CurationStore::open(tmp / "store");
    CHECK(reopened.effective_state() == live.effective_state());
    CHECK(replay(live.log()) == live.effective_state());
    CHECK(reopened.log().size() == 200);
}

TEST_CASE("a torn final log line is dropped on open")
{
    testing::TempDir tmp;
    auto store = CurationStore::create(tmp / "store", fake_candidates(tmp / "store", 2));
    store.record_decision("c0000", Decision::Accepted, "a1");
    {
        std::ofstream out(tmp / "store" / "decisions.jsonl", std::ios::app);
        out << R"({"candidate_id":"c0001","deci)";
    }
    const auto reopened = CurationStore::open(tmp / "store");
    CHECK(reopened.log().size() == 1);
    CHECK(reopened.state("c0000") == Decision::Accepted);
    CHECK(reopened.state("c0001") == Decision::Undecided);
}

namespace {

struct RunningServer {
    CurationServer server;
    int port = 0;
    std::thread thread;

    RunningServer(CurationStore& store, ServerOptions opt) : server(store, std::move(opt))
    {
        port = server.bind();
        thread = std::thread([this] { server.run(); });
        while (!server.running())
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    ~RunningServer()
    {
        server.stop();
        thread.join();
    }
};

} // namespace

TEST_CASE("http api")
{
    testing::TempDir tmp;
    auto store = CurationStore::create(tmp / "store", fake_candidates(tmp / "store", 3));
    ServerOptions opt;
    opt.port = 0;
    opt.export_dir = tmp / "export";
    RunningServer srv(store, opt);
    httplib::Client cli("127.0.0.1", srv.port);

    auto res = cli.Get("/candidates?state=undecided");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto list = json::parse(res->body);
    REQUIRE(list.size() == 3);
    CHECK(list[0]["id"] == "c0000");
    CHECK(list[2]["id"] == "c0002");
    CHECK(list[0]["state"] == "undecided");

    res = cli.Post("/export", "", "application/json");
    CHECK(res->status == 409);

    res = cli.Post("/candidates/c0001/decision", R"({"decision":"accepted","annotator":"a1"})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["decision"] == "accepted");
    list = json::parse(cli.Get("/candidates?state=accepted")->body);
    REQUIRE(list.size() == 1);
    CHECK(list[0]["id"] == "c0001");
    CHECK(json::parse(cli.Get("/candidates?state=undecided")->body).size() == 2);

    CHECK(cli.Post("/candidates/zzz/decision", R"({"decision":"accepted"})", "application/json")->status == 404);
    CHECK(cli.Post("/candidates/c0000/decision", R"({"decision":"maybe"})", "application/json")->status == 400);
    CHECK(cli.Post("/candidates/c0000/decision", "not json", "application/json")->status == 400);
    CHECK(cli.Get("/candidates?state=bogus")->status == 400);
    CHECK(cli.Get("/candidates/zzz")->status == 404);
    CHECK(cli.Get("/candidates/zzz/image")->status == 404);

    const auto meta = json::parse(cli.Get("/candidates/c0001")->body);
    CHECK(meta["state"] == "accepted");
    CHECK(meta["history"].size() == 1);
    res = cli.Get("/candidates/c0001/mask");
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Content-Type") == "image/png");
    CHECK(res->body == slurp(store.resolve(store.candidate("c0001").mask)));
    CHECK(cli.Get("/candidates/c0001/image")->status == 200);
    CHECK(cli.Get("/candidates/c0001/probmap")->status == 200);

    const auto by_conf = json::parse(cli.Get("/candidates?order=confidence")->body);
    for (std::size_t i = 1; i < by_conf.size(); ++i)
        CHECK(by_conf[i - 1]["auto_stats"]["mean_foreground_confidence"] >=
              by_conf[i]["auto_stats"]["mean_foreground_confidence"]);

    const auto stats = json::parse(cli.Get("/stats")->body);
    CHECK(stats["accepted"] == 1);
    CHECK(stats["undecided"] == 2);

    res = cli.Post("/export", "", "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["count"] == 1);
    CHECK(DatasetManifest::load(tmp / "export" / "manifest.jsonl").size() == 1);
}

TEST_CASE("server stops after export when asked, and reports bind failures")
{
    testing::TempDir tmp;
    auto store = CurationStore::create(tmp / "store", fake_candidates(tmp / "store", 2));
    store.record_decision("c0000", Decision::Accepted, "a1");
    ServerOptions opt;
    opt.port = 0;
    opt.export_dir = tmp / "export";
    opt.stop_after_export = true;
    CurationServer server(store, opt);
    const int port = server.bind();

    ServerOptions clash = opt;
    clash.port = port;
    CurationServer second(store, clash);
    CHECK_THROWS_AS(second.bind(), BindError);

    std::thread t([&] { server.run(); });
    while (!server.running())
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    httplib::Client cli("127.0.0.1", port);
    CHECK(cli.Post("/export", "", "application/json")->status == 200);
    t.join(); // returns only because the export stopped the server
    CHECK_FALSE(server.running());
}

TEST_CASE("static ui mount")
{
    testing::TempDir tmp;
    auto store = CurationStore::create(tmp / "store", fake_candidates(tmp / "store", 1));
    std::filesystem::create_directories(tmp / "ui");
    std::ofstream(tmp / "ui" / "index.html") << "<html>review</html>";
    ServerOptions opt;
    opt.port = 0;
    opt.static_dir = tmp / "ui";
    RunningServer srv(store, opt);
    httplib::Client cli("127.0.0.1", srv.port);
    const auto res = cli.Get("/index.html");
    REQUIRE(res);
    CHECK(res->body == "<html>review</html>");
    ServerOptions bad;
    bad.static_dir = tmp / "missing";
    CHECK_THROWS_AS(CurationServer(store, bad), ConfigError);
}
