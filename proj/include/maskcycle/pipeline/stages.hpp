#pragma once

#include <exception>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "maskcycle/pipeline/config.hpp"

namespace maskcycle::pipeline {

// Stage output directories under the run root.
struct Layout {
    std::filesystem::path root;

    std::filesystem::path synth() const { return root / "synth"; }
    std::filesystem::path gan() const { return root / "gan"; }
    std::filesystem::path translate() const { return root / "translate"; }
    std::filesystem::path seg() const { return root / "seg"; }
    std::filesystem::path curate() const { return root / "curate"; }
    std::filesystem::path store() const { return root / "curate" / "store"; }
    std::filesystem::path exported() const { return root / "export"; }
    std::filesystem::path finetune() const { return root / "finetune"; }
    std::filesystem::path eval() const { return root / "eval"; }

    std::filesystem::path synth_manifest() const { return synth() / "manifest.jsonl"; }
    std::filesystem::path gan_checkpoint() const { return gan() / "translation.ckpt"; }
    std::filesystem::path translate_manifest() const { return translate() / "manifest.jsonl"; }
    std::filesystem::path seg_checkpoint() const { return seg() / "best.ckpt"; }
    std::filesystem::path export_manifest() const { return exported() / "manifest.jsonl"; }
    std::filesystem::path finetune_checkpoint() const { return finetune() / "best.ckpt"; }
    std::filesystem::path report() const { return eval() / "report.json"; }
};

struct StageContext {
    PipelineConfig config;
    Layout layout;
    std::ostream* log = nullptr; // progress lines; null silences them
    bool force = false;          // rerun even when the run record matches
    // Curate only: called once the review server listens.
    std::function<void(const std::string& host, int port)> on_listening;
};

struct StageResult {
    std::string stage;
    bool skipped = false; // run record matched; nothing recomputed
    std::vector<std::filesystem::path> outputs;
};

StageResult run_synth(const StageContext& ctx);
StageResult run_train_gan(const StageContext& ctx);
StageResult run_translate(const StageContext& ctx);
StageResult run_train_seg(const StageContext& ctx);
StageResult run_curate(const StageContext& ctx);
StageResult run_finetune(const StageContext& ctx);
StageResult run_eval(const StageContext& ctx);

const std::vector<std::string>& stage_names();
StageResult run_stage(const std::string& name, const StageContext& ctx);

// Process exit status for an error escaping a stage: 2 configuration,
// 3 missing or malformed data, 4 numerical failure, 1 anything else.
int exit_code_for(const std::exception& e);

// Frames from a video file or, for a directory, its images in name order.
std::vector<ImageBuffer> load_frames(const std::filesystem::path& source, Index stride);

} // namespace maskcycle::pipeline
