#include "maskcycle/curation/store.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>

#include "maskcycle/imaging/io.hpp"

namespace maskcycle::curation {

namespace fs = std::filesystem;

std::string to_string(Decision d)
{
    switch (d) {
    case Decision::Accepted:
        return "accepted";
    case Decision::Rejected:
        return "rejected";
    case Decision::Undecided:
        break;
    }
    return "undecided";
}

Decision parse_decision(const std::string& s)
{
    if (s == "accepted")
        return Decision::Accepted;
    if (s == "rejected")
        return Decision::Rejected;
    if (s == "undecided")
        return Decision::Undecided;
    throw FormatError("unknown decision '" + s + "'");
}

std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[40];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

nlohmann::json to_json(const Candidate& c)
{
    nlohmann::json j{{"id", c.id},
                     {"image", c.image.generic_string()},
                     {"probmap", c.probmap.generic_string()},
                     {"mask", c.mask.generic_string()},
                     {"source", c.source},
                     {"model_tag", c.model_tag},
                     {"created_at", c.created_at},
                     {"auto_stats", nullptr}};
    if (c.auto_stats)
        j["auto_stats"] = {{"foreground_fraction", c.auto_stats->foreground_fraction},
                           {"mean_foreground_confidence", c.auto_stats->mean_foreground_confidence}};
    return j;
}

Candidate candidate_from_json(const nlohmann::json& j)
{
    try {
        Candidate c{j.at("id"),         j.at("image").get<std::string>(), j.at("probmap").get<std::string>(),
                    j.at("mask").get<std::string>(), j.at("source"),      j.at("model_tag"),
                    j.at("created_at"), std::nullopt};
        if (j.contains("auto_stats") && !j["auto_stats"].is_null())
            c.auto_stats = AutoStats{j["auto_stats"].at("foreground_fraction"),
                                     j["auto_stats"].at("mean_foreground_confidence")};
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed candidate record: ") + e.what());
    }
}

nlohmann::json to_json(const CurationRecord& r)
{
    return {{"candidate_id", r.candidate_id},
            {"decision", to_string(r.decision)},
            {"previous", to_string(r.previous)},
            {"annotator", r.annotator},
            {"decided_at", r.decided_at}};
}

CurationRecord record_from_json(const nlohmann::json& j)
{
    try {
        return {j.at("candidate_id"), parse_decision(j.at("decision")), parse_decision(j.value("previous", "undecided")),
                j.at("annotator"), j.at("decided_at")};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed decision record: ") + e.what());
    }
}

std::map<std::string, Decision> replay(const std::vector<CurationRecord>& log)
{
    std::map<std::string, Decision> state;
    for (const auto& r : log)
        state[r.candidate_id] = r.decision;
    return state;
}

namespace {

std::vector<nlohmann::json> read_jsonl(const fs::path& path, bool tolerate_torn_tail)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty())
            continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error&) {
            // a crash mid-write can leave one partial final line
            if (tolerate_torn_tail && in.peek() == std::char_traits<char>::eof())
                break;
            throw FormatError(path.string() + ":" + std::to_string(number) + ": invalid JSON");
        }
    }
    return out;
}

} // namespace

CurationStore::CurationStore(fs::path dir, std::vector<Candidate> candidates)
    : dir_(std::move(dir)), candidates_(std::move(candidates))
{
    std::sort(candidates_.begin(), candidates_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < candidates_.size(); ++i)
        if (!index_.emplace(candidates_[i].id, i).second)
            throw DataError("duplicate candidate id '" + candidates_[i].id + "'");
}

CurationStore::CurationStore(CurationStore&& other) noexcept
    : dir_(std::move(other.dir_)),
      candidates_(std::move(other.candidates_)),
      index_(std::move(other.index_)),
      log_(std::move(other.log_)),
      state_(std::move(other.state_))
{
}

CurationStore CurationStore::create(const fs::path& dir, std::vector<Candidate> candidates)
{
    CurationStore store(dir, std::move(candidates));
    fs::create_directories(dir);
    const fs::path tmp = dir / "candidates.jsonl.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        for (const auto& c : store.candidates_)
            out << to_json(c).dump() << '\n';
        if (!out)
            throw IoError("cannot write " + tmp.string());
    }
    fs::rename(tmp, dir / "candidates.jsonl");
    std::ofstream(dir / "decisions.jsonl", std::ios::trunc);
    return store;
}

CurationStore CurationStore::open(const fs::path& dir)
{
    std::vector<Candidate> candidates;
    for (const auto& j : read_jsonl(dir / "candidates.jsonl", false))
        candidates.push_back(candidate_from_json(j));
    CurationStore store(dir, std::move(candidates));
    if (fs::exists(dir / "decisions.jsonl"))
        for (const auto& j : read_jsonl(dir / "decisions.jsonl", true)) {
            CurationRecord r = record_from_json(j);
            if (!store.index_.count(r.candidate_id))
                throw DataError("decision log references unknown candidate '" + r.candidate_id + "'");
            store.log_.push_back(std::move(r));
        }
    store.state_ = replay(store.log_);
    return store;
}

std::vector<Candidate> CurationStore::candidates() const
{
    std::lock_guard lock(mutex_);
    return candidates_;
}

Candidate CurationStore::candidate(const std::string& id) const
{
    std::lock_guard lock(mutex_);
    const auto it = index_.find(id);
    if (it == index_.end())
        throw NotFoundError("unknown candidate '" + id + "'");
    return candidates_[it->second];
}

bool CurationStore::contains(const std::string& id) const
{
    std::lock_guard lock(mutex_);
    return index_.count(id) > 0;
}

Decision CurationStore::state(const std::string& id) const
{
    std::lock_guard lock(mutex_);
    if (!index_.count(id))
        throw NotFoundError("unknown candidate '" + id + "'");
    const auto it = state_.find(id);
    return it == state_.end() ? Decision::Undecided : it->second;
}

std::map<std::string, Decision> CurationStore::effective_state() const
{
    std::lock_guard lock(mutex_);
    return state_;
}

std::vector<CurationRecord> CurationStore::log() const
{
    std::lock_guard lock(mutex_);
    return log_;
}

std::vector<CurationRecord> CurationStore::history(const std::string& id) const
{
    std::lock_guard lock(mutex_);
    std::vector<CurationRecord> out;
    for (const auto& r : log_)
        if (r.candidate_id == id)
            out.push_back(r);
    return out;
}

StoreStats CurationStore::stats() const
{
    std::lock_guard lock(mutex_);
    StoreStats s;
    s.total = candidates_.size();
    for (const auto& [id, d] : state_) {
        s.accepted += d == Decision::Accepted;
        s.rejected += d == Decision::Rejected;
    }
    s.undecided = s.total - s.accepted - s.rejected;
    return s;
}

CurationRecord CurationStore::record_decision(const std::string& id, Decision decision, const std::string& annotator)
{
    std::lock_guard lock(mutex_);
    if (!index_.count(id))
        throw NotFoundError("unknown candidate '" + id + "'");
    const auto it = state_.find(id);
    CurationRecord r{id, decision, it == state_.end() ? Decision::Undecided : it->second, annotator, utc_timestamp()};
    std::ofstream out(dir_ / "decisions.jsonl", std::ios::app);
    out << to_json(r).dump() << '\n' << std::flush;
    if (!out)
        throw IoError("cannot append to " + (dir_ / "decisions.jsonl").string());
    log_.push_back(r);
    state_[id] = decision;
    return r;
}

DatasetManifest export_curated(const CurationStore& store, const fs::path& out_dir)
{
    std::vector<Candidate> accepted;
    for (const auto& c : store.candidates())
        if (store.state(c.id) == Decision::Accepted)
            accepted.push_back(c);
    if (accepted.empty())
        throw EmptyExportError("no accepted candidates to export");
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "masks");
    DatasetManifest manifest(out_dir);
    for (const auto& c : accepted) {
        const fs::path image = fs::path("images") / (c.id + c.image.extension().string());
        const fs::path mask = fs::path("masks") / (c.id + ".png");
        fs::copy_file(store.resolve(c.image), out_dir / image, fs::copy_options::overwrite_existing);
        fs::copy_file(store.resolve(c.mask), out_dir / mask, fs::copy_options::overwrite_existing);
        manifest.add({c.id, image, mask, "pseudo-label:" + c.source, "pseudo-label"});
    }
    manifest.save(out_dir / "manifest.jsonl");
    return manifest;
}

std::vector<fs::path> list_images(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw DataError("unlabeled image directory " + dir.string() + " does not exist");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file())
            continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
            out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

CurationStore generate_candidates(segmentation::SegmentationModel& model, const fs::path& unlabeled_dir,
                                  const CandidateOptions& options, const fs::path& store_dir)
{
    if (options.sample_count == 0)
        throw PreconditionError("sample_count must be at least 1");
    const auto pool = list_images(unlabeled_dir);
    if (pool.empty())
        throw DataError("no images in " + unlabeled_dir.string());
    if (options.sample_count > pool.size())
        throw DataError("requested " + std::to_string(options.sample_count) + " candidates but only " +
                        std::to_string(pool.size()) + " images are available in " + unlabeled_dir.string());

    std::vector<fs::path> chosen;
    Rng rng = substream(options.seed, 0, fnv1a64("curation.sample"));
    std::sample(pool.begin(), pool.end(), std::back_inserter(chosen), static_cast<std::ptrdiff_t>(options.sample_count),
                rng);

    std::vector<Candidate> candidates;
    for (const auto& src : chosen) {
        const std::string id = src.stem().string();
        const fs::path assets = fs::path("assets") / id;
        fs::create_directories(store_dir / assets);
        Candidate c{id,
                    assets / ("image" + src.extension().string()),
                    assets / "probmap.png",
                    assets / "mask.png",
                    src.filename().string(),
                    options.model_tag,
                    utc_timestamp(),
                    std::nullopt};
        const ImageBuffer image = load_image(src);
        const segmentation::Prediction p = segmentation::predict(model, image, options.threshold);
        fs::copy_file(src, store_dir / c.image, fs::copy_options::overwrite_existing);
        save_probability_map(p.probability, store_dir / c.probmap);
        save_mask(p.mask, store_dir / c.mask);
        const Index fg = p.mask.count();
        double conf = 0;
        for (Index y = 0; y < p.mask.height(); ++y)
            for (Index x = 0; x < p.mask.width(); ++x)
                if (p.mask(y, x))
                    conf += p.probability(y, x);
        c.auto_stats = AutoStats{static_cast<double>(fg) / static_cast<double>(p.mask.pixels()),
                                 fg ? conf / static_cast<double>(fg) : 0.0};
        candidates.push_back(std::move(c));
    }
    return CurationStore::create(store_dir, std::move(candidates));
}

} // namespace maskcycle::curation
