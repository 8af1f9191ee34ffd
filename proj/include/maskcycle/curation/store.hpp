#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "maskcycle/segmentation/model.hpp"
#include "maskcycle/synthesis/manifest.hpp"

namespace maskcycle::curation {

enum class Decision { Undecided, Accepted, Rejected };

std::string to_string(Decision d);
Decision parse_decision(const std::string& s); // "accepted" | "rejected" | "undecided"

struct AutoStats {
    double foreground_fraction = 0;
    double mean_foreground_confidence = 0; // mean probability over predicted foreground, 0 if none
};

struct Candidate {
    std::string id;
    std::filesystem::path image; // relative to the store directory
    std::filesystem::path probmap;
    std::filesystem::path mask;
    std::string source; // originating unlabeled image
    std::string model_tag;
    std::string created_at;
    std::optional<AutoStats> auto_stats;
};

struct CurationRecord {
    std::string candidate_id;
    Decision decision = Decision::Undecided;
    Decision previous = Decision::Undecided; // state before this record, for the audit trail
    std::string annotator;
    std::string decided_at;
};

nlohmann::json to_json(const Candidate& c);
Candidate candidate_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CurationRecord& r);
CurationRecord record_from_json(const nlohmann::json& j);

struct StoreStats {
    std::size_t total = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t undecided = 0;
};

// Latest-wins fold of a decision log.
std::map<std::string, Decision> replay(const std::vector<CurationRecord>& log);

// Directory layout: candidates.jsonl, decisions.jsonl (append-only) and
// assets/<id>/{image,probmap,mask}.png. Public members are safe to call
// concurrently; writes are serialized and flushed one record at a time.
class CurationStore {
public:
    // Starts a store from freshly generated candidates with an empty log.
    static CurationStore create(const std::filesystem::path& dir, std::vector<Candidate> candidates);
    // Loads candidates and replays the decision log.
    static CurationStore open(const std::filesystem::path& dir);

    CurationStore(CurationStore&& other) noexcept;

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path resolve(const std::filesystem::path& p) const { return dir_ / p; }

    std::vector<Candidate> candidates() const;
    Candidate candidate(const std::string& id) const; // NotFoundError if unknown
    bool contains(const std::string& id) const;
    Decision state(const std::string& id) const;
    // Latest decision of every candidate that has one; the rest are undecided.
    std::map<std::string, Decision> effective_state() const;
    std::vector<CurationRecord> log() const;
    std::vector<CurationRecord> history(const std::string& id) const;
    StoreStats stats() const;

    CurationRecord record_decision(const std::string& id, Decision decision, const std::string& annotator);

private:
    CurationStore(std::filesystem::path dir, std::vector<Candidate> candidates);

    std::filesystem::path dir_;
    std::vector<Candidate> candidates_; // sorted by id
    std::map<std::string, std::size_t> index_;
    std::vector<CurationRecord> log_;
    std::map<std::string, Decision> state_;
    mutable std::mutex mutex_;
};

// Copies each accepted candidate's image and predicted mask into out_dir and
// writes a manifest whose entries carry split "pseudo-label".
DatasetManifest export_curated(const CurationStore& store, const std::filesystem::path& out_dir);

struct CandidateOptions {
    std::size_t sample_count = 1;
    std::uint64_t seed = 0;
    double threshold = 0.5;
    std::string model_tag = "segmentation";
};

// Image files (png, jpg, jpeg, bmp) directly inside `dir`, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

// Samples options.sample_count images without replacement from unlabeled_dir,
// predicts each and persists the triplets into a fresh store at store_dir.
CurationStore generate_candidates(segmentation::SegmentationModel& model, const std::filesystem::path& unlabeled_dir,
                                  const CandidateOptions& options, const std::filesystem::path& store_dir);

std::string utc_timestamp();

} // namespace maskcycle::curation
