#include "maskcycle/pipeline/stages.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <pthread.h>

#include "maskcycle/common/fileio.hpp"
#include "maskcycle/curation/server.hpp"
#include "maskcycle/imaging/io.hpp"
#include "maskcycle/metrics/report.hpp"
#include "maskcycle/nn/convert.hpp"
#include "maskcycle/synthesis/cutout.hpp"
#include "maskcycle/translation/trainer.hpp"
#include "maskcycle/translation/translate.hpp"

namespace maskcycle::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t hash_path(const fs::path& p)
{
    if (!fs::is_directory(p))
        return hash_file(p);
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file())
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::uint64_t h = fnv1a64("dir");
    for (const auto& f : files) {
        h = fnv1a64(fs::relative(f, p).generic_string(), h);
        h = hash_file(f, h);
    }
    return h;
}

void say(const StageContext& ctx, const std::string& stage, const std::string& line)
{
    if (ctx.log)
        *ctx.log << '[' << stage << "] " << line << std::endl;
}

const fs::path& require_setting(const fs::path& p, const std::string& key)
{
    if (p.empty())
        throw ConfigError(key + " is not set");
    return p;
}

const fs::path& require_input(const fs::path& p, const std::string& key)
{
    require_setting(p, key);
    if (!fs::exists(p))
        throw DataError(key + " does not exist: " + p.string());
    return p;
}

// An earlier stage's artifact; PrerequisiteError names the stage to run.
const fs::path& require_artifact(const fs::path& p, const std::string& producer)
{
    if (!fs::exists(p))
        throw PrerequisiteError("missing " + p.string() + "; run `maskcycle " + producer + "` first");
    return p;
}

using Inputs = std::vector<std::pair<std::string, fs::path>>;

struct RunCheck {
    json record;
    bool fresh = false;
};

RunCheck check_run(const StageContext& ctx, const std::string& stage, const fs::path& dir, const Inputs& inputs,
                   const std::vector<fs::path>& outputs)
{
    RunCheck rc;
    const json settings = stage_settings(ctx.config, stage);
    json hashes = json::object();
    for (const auto& [name, path] : inputs)
        hashes[name] = hex(hash_path(path));
    rc.record = {{"stage", stage},
                 {"seed", ctx.config.seed},
                 {"config_hash", hex(fnv1a64(settings.dump()))},
                 {"settings", settings},
                 {"inputs", hashes}};
    json outs = json::array();
    for (const auto& o : outputs)
        outs.push_back(fs::relative(o, ctx.layout.root).generic_string());
    rc.record["outputs"] = outs;

    const fs::path run_file = dir / "run.json";
    if (ctx.force || !fs::exists(run_file))
        return rc;
    try {
        const json prev = json::parse(read_file(run_file));
        rc.fresh = prev.at("config_hash") == rc.record["config_hash"] && prev.at("inputs") == hashes &&
                   prev.at("outputs") == outs && prev.at("seed") == rc.record["seed"];
    } catch (const json::exception&) {
        rc.fresh = false;
    }
    for (const auto& o : outputs)
        rc.fresh = rc.fresh && fs::exists(o);
    return rc;
}

void write_run(const fs::path& dir, json record)
{
    record["completed_at"] = curation::utc_timestamp();
    write_file_atomic(dir / "run.json", record.dump(2) + "\n");
}

StageResult skipped(const StageContext& ctx, const std::string& stage, std::vector<fs::path> outputs)
{
    say(ctx, stage, "up to date; nothing to do");
    return {stage, true, std::move(outputs)};
}

void reset_dir(const fs::path& dir)
{
    fs::remove_all(dir);
    fs::create_directories(dir);
}

fs::path eval_checkpoint(const StageContext& ctx, std::string& tag)
{
    const auto& L = ctx.layout;
    const std::string& which = ctx.config.eval.model;
    if (which == "finetune" || (which == "auto" && fs::exists(L.finetune_checkpoint()))) {
        tag = "finetune";
        return require_artifact(L.finetune_checkpoint(), "finetune");
    }
    tag = "seg-" + ctx.config.seg.train_on;
    return require_artifact(L.seg_checkpoint(), "train-seg");
}

void flatten(const json& j, const std::string& prefix, std::ostream& out)
{
    for (const auto& [k, v] : j.items()) {
        const std::string key = prefix.empty() ? k : prefix + "." + k;
        if (v.is_object())
            flatten(v, key, out);
        else
            out << key << " = " << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
    }
}

} // namespace

std::vector<ImageBuffer> load_frames(const fs::path& source, Index stride)
{
    if (!fs::is_directory(source))
        return extract_frames(source, stride);
    const auto files = curation::list_images(source);
    std::vector<ImageBuffer> frames;
    for (std::size_t i = 0; i < files.size(); i += static_cast<std::size_t>(stride))
        frames.push_back(load_image(files[i]));
    return frames;
}

StageResult run_synth(const StageContext& ctx)
{
    const std::string stage = "synth";
    const auto& c = ctx.config;
    const auto& L = ctx.layout;
    const Inputs inputs{{"annotated_image", require_input(c.paths.annotated_image, "paths.annotated_image")},
                        {"annotated_mask", require_input(c.paths.annotated_mask, "paths.annotated_mask")},
                        {"backgrounds", require_input(c.paths.backgrounds, "paths.backgrounds")}};
    const std::vector<fs::path> outputs{L.synth_manifest()};
    const RunCheck rc = check_run(ctx, stage, L.synth(), inputs, outputs);
    if (rc.fresh)
        return skipped(ctx, stage, outputs);

    MaskedSample annotated{load_image(c.paths.annotated_image), load_mask(c.paths.annotated_mask), "annotated"};
    const CutoutLibrary library = extract_cutouts(annotated);
    const auto backgrounds = load_frames(c.paths.backgrounds, c.paths.background_stride);
    if (backgrounds.empty())
        throw DataError("no background frames in " + c.paths.backgrounds.string());
    say(ctx, stage,
        std::to_string(library.cutouts.size()) + " cutouts, " + std::to_string(backgrounds.size()) + " backgrounds");

    reset_dir(L.synth());
    SynthesisStats stats;
    synthesize_dataset(backgrounds, library, c.synth.params, c.synth.count, L.synth(), c.synth.val_fraction, &stats,
                       c.synth.workers);
    say(ctx, stage,
        "wrote " + std::to_string(stats.samples) + " samples (" + std::to_string(stats.placements) +
            " placements, " + std::to_string(stats.skipped) + " skipped)");
    write_run(L.synth(), rc.record);
    return {stage, false, outputs};
}

StageResult run_train_gan(const StageContext& ctx)
{
    const std::string stage = "train-gan";
    const auto& c = ctx.config;
    const auto& L = ctx.layout;
    const Inputs inputs{{"synth_manifest", require_artifact(L.synth_manifest(), "synth")},
                        {"real_frames", require_input(c.paths.real_frames, "paths.real_frames")}};
    const std::vector<fs::path> outputs{L.gan_checkpoint(), L.gan() / "telemetry.csv"};
    const RunCheck rc = check_run(ctx, stage, L.gan(), inputs, outputs);
    if (rc.fresh)
        return skipped(ctx, stage, outputs);

    const DatasetManifest synth = DatasetManifest::load(L.synth_manifest()).filter_split("train");
    if (synth.empty())
        throw DataError("synthetic dataset has no train split");
    const auto frames = load_frames(c.paths.real_frames, c.paths.real_stride);
    if (frames.empty())
        throw DataError("no real frames in " + c.paths.real_frames.string());
    const MaskedSample probe = synth.load_sample(synth.entries().front());
    const Index h = probe.image.height(), w = probe.image.width();
    for (const auto& f : frames)
        if (f.height() < h || f.width() < w)
            throw DataError("real frame " + std::to_string(f.height()) + "x" + std::to_string(f.width()) +
                            " is smaller than the synthetic sample size " + std::to_string(h) + "x" +
                            std::to_string(w));

    reset_dir(L.gan());
    {
        std::ostringstream cfg;
        flatten(rc.record["settings"], "", cfg);
        write_file_atomic(L.gan() / "train_config.ini", cfg.str());
    }

    translation::TranslationModel<float> model(c.gan.model);
    translation::TranslationTrainer<float> trainer(model);
    std::ofstream telemetry(L.gan() / "telemetry.csv");
    telemetry << translation::LossReport::csv_header() << ",learning_rate\n";

    const auto& sched = c.gan.model.schedule;
    const std::size_t n_synth = synth.size(), n_real = frames.size();
    for (long step = 0; step < sched.total_steps; ++step) {
        Rng rng = substream(c.gan.model.seed, static_cast<std::uint64_t>(step), fnv1a64("gan.batch"));
        std::vector<ImageBuffer> images, reals;
        std::vector<BinaryMask> masks;
        for (Index b = 0; b < sched.batch_size; ++b) {
            const auto& entry = synth.entries()[std::uniform_int_distribution<std::size_t>(0, n_synth - 1)(rng)];
            MaskedSample s = synth.load_sample(entry);
            if (s.image.height() != h || s.image.width() != w)
                throw DataError("synthetic sample " + entry.id + " differs in size from the rest of the dataset");
            images.push_back(std::move(s.image));
            masks.push_back(std::move(s.mask));
            const ImageBuffer& f = frames[std::uniform_int_distribution<std::size_t>(0, n_real - 1)(rng)];
            const Index y = std::uniform_int_distribution<Index>(0, f.height() - h)(rng);
            const Index x = std::uniform_int_distribution<Index>(0, f.width() - w)(rng);
            reals.push_back(crop(f, PixelRect{y, x, h, w}));
        }
        const translation::MaskedBatch<float> batch_s{nn::images_to_tensor<float>(images, nn::Range::Signed),
                                                      nn::masks_to_tensor<float>(masks)};
        const double lr = trainer.learning_rate_at(step);
        const auto report = trainer.train_step(batch_s, nn::images_to_tensor<float>(reals, nn::Range::Signed));
        telemetry << report.csv_row() << ',' << lr << '\n';
        telemetry.flush();
        if (c.gan.log_every > 0 && ((step + 1) % c.gan.log_every == 0 || step + 1 == sched.total_steps))
            say(ctx, stage,
                "step " + std::to_string(step + 1) + "/" + std::to_string(sched.total_steps) +
                    " cycle=" + std::to_string(report.cycle_total) + " adv=" +
                    std::to_string(report.adv_s2r + report.adv_r2s) + " d_s=" + std::to_string(report.d_s) +
                    " d_r=" + std::to_string(report.d_r));
        if (c.gan.checkpoint_every > 0 && (step + 1) % c.gan.checkpoint_every == 0)
            translation::save_checkpoint(model, L.gan_checkpoint());
    }
    if (!telemetry)
        throw IoError("cannot write " + (L.gan() / "telemetry.csv").string());
    telemetry.close();
    translation::save_checkpoint(model, L.gan_checkpoint());
    write_run(L.gan(), rc.record);
    return {stage, false, outputs};
}

StageResult run_translate(const StageContext& ctx)
{
    const std::string stage = "translate";
    const auto& L = ctx.layout;
    const Inputs inputs{{"translation_checkpoint", require_artifact(L.gan_checkpoint(), "train-gan")},
                        {"synth_manifest", require_artifact(L.synth_manifest(), "synth")}};
    const std::vector<fs::path> outputs{L.translate_manifest()};
    const RunCheck rc = check_run(ctx, stage, L.translate(), inputs, outputs);
    if (rc.fresh)
        return skipped(ctx, stage, outputs);

    auto model = translation::load_checkpoint<float>(L.gan_checkpoint());
    const DatasetManifest source = DatasetManifest::load(L.synth_manifest());
    reset_dir(L.translate());
    const DatasetManifest out = translation::translate_dataset(model, source, L.translate());
    say(ctx, stage, "translated " + std::to_string(out.size()) + " samples");
    write_run(L.translate(), rc.record);
    return {stage, false, outputs};
}

StageResult run_train_seg(const StageContext& ctx)
{
    const std::string stage = "train-seg";
    const auto& c = ctx.config;
    const auto& L = ctx.layout;
    const bool translated = c.seg.train_on == "translated";
    const fs::path manifest_file = translated ? L.translate_manifest() : L.synth_manifest();
    const Inputs inputs{{"train_manifest", require_artifact(manifest_file, translated ? "translate" : "synth")}};
    const std::vector<fs::path> outputs{L.seg_checkpoint(), L.seg() / "history.csv"};
    const RunCheck rc = check_run(ctx, stage, L.seg(), inputs, outputs);
    if (rc.fresh)
        return skipped(ctx, stage, outputs);

    const DatasetManifest all = DatasetManifest::load(manifest_file);
    const DatasetManifest train_set = all.filter_split("train");
    const DatasetManifest val_set = all.filter_split("val");
    if (train_set.empty())
        throw DataError(manifest_file.string() + " has no train split");
    reset_dir(L.seg());
    auto model = segmentation::build_model(c.seg.net);
    const auto result = segmentation::train(model, train_set, val_set, c.seg.train, L.seg());
    const auto& last = result.history.back();
    say(ctx, stage,
        std::to_string(result.history.size()) + " epochs, final train_bce=" + std::to_string(last.train_bce) +
            ", best epoch " + std::to_string(result.best_epoch) +
            (val_set.empty() ? std::string() : " val_dice=" + std::to_string(result.best_val_dice)));
    write_run(L.seg(), rc.record);
    return {stage, false, outputs};
}

namespace {

// Serves the store until stop, export (when configured) or SIGINT/SIGTERM.
void serve_store(const StageContext& ctx, curation::CurationStore& store)
{
    const auto& c = ctx.config.curate;
    curation::ServerOptions opts;
    opts.host = c.host;
    opts.port = c.port;
    opts.export_dir = ctx.layout.exported();
    opts.static_dir = c.static_dir;
    opts.stop_after_export = c.exit_after_export;

    // Block the termination signals here so every server thread inherits the
    // mask; a watcher thread turns them into a clean stop.
    sigset_t signals, previous;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, &previous);

    curation::CurationServer server(store, opts);
    server.on_export = [&](const DatasetManifest& m) {
        say(ctx, "curate", "exported " + std::to_string(m.size()) + " accepted pairs to " + opts.export_dir.string());
    };
    int port = 0;
    try {
        port = server.bind();
    } catch (...) {
        pthread_sigmask(SIG_SETMASK, &previous, nullptr);
        throw;
    }
    write_file_atomic(ctx.layout.curate() / "server.json",
                      json{{"host", c.host}, {"port", port}, {"url", "http://" + c.host + ":" + std::to_string(port)}}
                              .dump(2) +
                          "\n");
    say(ctx, "curate", "review server listening on http://" + c.host + ":" + std::to_string(port));
    if (ctx.on_listening)
        ctx.on_listening(c.host, port);

    std::atomic<bool> done{false};
    std::thread watcher([&] {
        const timespec tick{0, 200'000'000};
        while (!done.load()) {
            if (sigtimedwait(&signals, nullptr, &tick) > 0) {
                server.stop();
                return;
            }
        }
    });
    server.run();
    done = true;
    watcher.join();
    pthread_sigmask(SIG_SETMASK, &previous, nullptr);
    const auto stats = store.stats();
    say(ctx, "curate",
        "server stopped: " + std::to_string(stats.accepted) + " accepted, " + std::to_string(stats.rejected) +
            " rejected, " + std::to_string(stats.undecided) + " undecided");
}

} // namespace

StageResult run_curate(const StageContext& ctx)
{
    const std::string stage = "curate";
    const auto& c = ctx.config;
    const auto& L = ctx.layout;
    const fs::path pool_source = c.paths.unlabeled.empty() ? c.paths.real_frames : c.paths.unlabeled;
    const Inputs inputs{{"segmentation_checkpoint", require_artifact(L.seg_checkpoint(), "train-seg")},
                        {"pool", require_input(pool_source, c.paths.unlabeled.empty() ? "paths.real_frames"
                                                                                      : "paths.unlabeled")}};
    const std::vector<fs::path> outputs{L.store() / "candidates.jsonl"};
    const RunCheck rc = check_run(ctx, stage, L.curate(), inputs, outputs);

    std::optional<curation::CurationStore> store;
    if (rc.fresh) {
        store.emplace(curation::CurationStore::open(L.store()));
        say(ctx, stage, "reusing " + std::to_string(store->stats().total) + " candidates and their decisions");
    } else {
        if (fs::exists(L.store() / "decisions.jsonl"))
            say(ctx, stage, "inputs changed; regenerating candidates and discarding earlier decisions");
        fs::remove_all(L.curate());
        fs::create_directories(L.curate());
        fs::path pool_dir = c.paths.unlabeled;
        if (pool_dir.empty()) {
            pool_dir = L.curate() / "pool";
            fs::create_directories(pool_dir);
            const auto frames = load_frames(c.paths.real_frames, c.paths.real_stride);
            for (std::size_t i = 0; i < frames.size(); ++i)
                save_image(frames[i], pool_dir / ("frame_" + zero_padded_id(i) + ".png"));
        }
        auto model = segmentation::load_checkpoint(L.seg_checkpoint());
        curation::CandidateOptions opts;
        opts.sample_count = c.curate.sample_count;
        opts.seed = stage_seed(c.seed, "curate");
        opts.threshold = c.curate.threshold;
        opts.model_tag = "seg-" + c.seg.train_on;
        store.emplace(curation::generate_candidates(model, pool_dir, opts, L.store()));
        write_run(L.curate(), rc.record);
        say(ctx, stage, "generated " + std::to_string(store->stats().total) + " candidates in " + L.store().string());
    }
    if (c.curate.serve)
        serve_store(ctx, *store);
    return {stage, rc.fresh, outputs};
}

StageResult run_finetune(const StageContext& ctx)
{
    const std::string stage = "finetune";
    const auto& c = ctx.config;
    const auto& L = ctx.layout;
    require_artifact(L.seg_checkpoint(), "train-seg");
    if (!fs::exists(L.export_manifest())) {
        require_artifact(L.store() / "candidates.jsonl", "curate");
        const auto store = curation::CurationStore::open(L.store());
        const auto exported = curation::export_curated(store, L.exported());
        say(ctx, stage, "exported " + std::to_string(exported.size()) + " accepted candidates");
    }
    const Inputs inputs{{"segmentation_checkpoint", L.seg_checkpoint()}, {"curated_manifest", L.export_manifest()}};
    const std::vector<fs::path> outputs{L.finetune_checkpoint()};
    const RunCheck rc = check_run(ctx, stage, L.finetune(), inputs, outputs);
    if (rc.fresh)
        return skipped(ctx, stage, outputs);

    const DatasetManifest curated = DatasetManifest::load(L.export_manifest());
    if (curated.empty())
        throw EmptyExportError("curated set is empty; accept candidates with `maskcycle curate` first");
    auto model = segmentation::load_checkpoint(L.seg_checkpoint());
    reset_dir(L.finetune());
    const auto result = segmentation::fine_tune(model, curated, DatasetManifest{}, c.finetune.train, L.finetune());
    say(ctx, stage,
        std::to_string(curated.size()) + " curated pairs, " + std::to_string(result.history.size()) +
            " epochs, final train_bce=" + std::to_string(result.history.back().train_bce));
    write_run(L.finetune(), rc.record);
    return {stage, false, outputs};
}

StageResult run_eval(const StageContext& ctx)
{
    const std::string stage = "eval";
    const auto& c = ctx.config;
    const auto& L = ctx.layout;
    std::string tag;
    const fs::path ckpt = eval_checkpoint(ctx, tag);
    const Inputs inputs{{"checkpoint", ckpt},
                        {"eval_manifest", require_input(c.paths.eval_manifest, "paths.eval_manifest")}};
    const std::vector<fs::path> outputs{L.report()};
    const RunCheck rc = check_run(ctx, stage, L.eval(), inputs, outputs);
    if (rc.fresh)
        return skipped(ctx, stage, outputs);

    auto model = segmentation::load_checkpoint(ckpt);
    const DatasetManifest manifest = DatasetManifest::load(c.paths.eval_manifest);
    const auto report = metrics::evaluate(model, manifest, c.eval.threshold, tag, c.eval.dataset_tag);
    reset_dir(L.eval());
    metrics::write_report(report, L.report());
    say(ctx, stage,
        tag + " on " + std::to_string(report.samples.size()) + " samples: dice=" + std::to_string(report.mean_dice) +
            " iou=" + std::to_string(report.mean_iou));
    write_run(L.eval(), rc.record);
    return {stage, false, outputs};
}

const std::vector<std::string>& stage_names()
{
    static const std::vector<std::string> names{"synth", "train-gan", "translate", "train-seg",
                                                "curate", "finetune", "eval"};
    return names;
}

StageResult run_stage(const std::string& name, const StageContext& ctx)
{
    if (name == "synth")
        return run_synth(ctx);
    if (name == "train-gan")
        return run_train_gan(ctx);
    if (name == "translate")
        return run_translate(ctx);
    if (name == "train-seg")
        return run_train_seg(ctx);
    if (name == "curate")
        return run_curate(ctx);
    if (name == "finetune")
        return run_finetune(ctx);
    if (name == "eval")
        return run_eval(ctx);
    throw ConfigError("unknown stage '" + name + "'");
}

int exit_code_for(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e))
        return 2;
    if (dynamic_cast<const NumericError*>(&e))
        return 4;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const IoError*>(&e) ||
        dynamic_cast<const DecodeError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
        dynamic_cast<const ChecksumError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
        dynamic_cast<const NotFoundError*>(&e) || dynamic_cast<const EmptyAnnotationError*>(&e) ||
        dynamic_cast<const PreconditionError*>(&e))
        return 3;
    return 1;
}

} // namespace maskcycle::pipeline
