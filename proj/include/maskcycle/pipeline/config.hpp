#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "maskcycle/curation/store.hpp"
#include "maskcycle/segmentation/train.hpp"
#include "maskcycle/synthesis/synthesize.hpp"
#include "maskcycle/translation/config.hpp"

namespace maskcycle::pipeline {

// Flat view of an INI-style file: `key = value` lines grouped under
// `[section]` headers, addressed as "section.key". Every lookup is recorded so
// unknown (misspelled) keys can be reported.
class ConfigFile {
public:
    static ConfigFile load(const std::filesystem::path& path);
    static ConfigFile parse(const std::string& text, const std::filesystem::path& base_dir);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    long get_int(const std::string& key, long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Relative paths resolve against the file's directory; empty if unset.
    std::filesystem::path get_path(const std::string& key) const;

    // Keys present in the file that no lookup asked for.
    std::vector<std::string> unused_keys() const;
    const std::filesystem::path& base_dir() const { return base_dir_; }

private:
    const std::string* find(const std::string& key) const;

    std::map<std::string, std::string> values_;
    std::filesystem::path base_dir_;
    mutable std::set<std::string> used_;
};

struct Paths {
    std::filesystem::path annotated_image;
    std::filesystem::path annotated_mask;
    std::filesystem::path backgrounds;   // video file or image directory
    std::filesystem::path real_frames;   // video file or image directory
    std::filesystem::path eval_manifest; // labeled real-style frames
    std::filesystem::path unlabeled;     // candidate pool; defaults to the real frames
    Index background_stride = 1;
    Index real_stride = 1;
};

struct SynthStage {
    SynthesisParams params;
    Index count = 100;
    double val_fraction = 0.1;
    unsigned workers = 1;
};

struct GanStage {
    translation::TranslationConfig model;
    long checkpoint_every = 0; // steps; 0 writes only the final checkpoint
    long log_every = 50;
};

struct SegStage {
    segmentation::UNetConfig net;
    segmentation::TrainConfig train;
    std::string train_on = "translated"; // or "synthetic"
};

struct CurateStage {
    std::size_t sample_count = 360;
    double threshold = 0.5;
    std::string host = "127.0.0.1";
    int port = 8080;
    bool serve = true;
    bool exit_after_export = false;
    std::filesystem::path static_dir;
};

struct FinetuneStage {
    segmentation::TrainConfig train;
};

struct EvalStage {
    std::string model = "auto"; // auto | seg | finetune
    double threshold = 0.5;
    std::string dataset_tag = "eval";
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    Paths paths;
    SynthStage synth;
    GanStage gan;
    SegStage seg;
    CurateStage curate;
    FinetuneStage finetune;
    EvalStage eval;
};

// Reads and validates; ConfigError lists unknown keys and bad values.
// `seed_override` replaces the file's global seed.
PipelineConfig load_pipeline_config(const std::filesystem::path& path,
                                    std::optional<std::uint64_t> seed_override = std::nullopt);
PipelineConfig parse_pipeline_config(const ConfigFile& file, std::optional<std::uint64_t> seed_override = std::nullopt);

// Canonical JSON of the settings a stage depends on; its hash keys the
// stage's run record.
nlohmann::json stage_settings(const PipelineConfig& config, const std::string& stage);

// Seed handed to a stage, derived from the global seed and the stage name.
std::uint64_t stage_seed(std::uint64_t global_seed, const std::string& stage);

} // namespace maskcycle::pipeline
