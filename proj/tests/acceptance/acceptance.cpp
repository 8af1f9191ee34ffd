// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//
//   acceptance --cli <maskcycle> --toycorpus <maskcycle-toycorpus> [--only 1,4,...] [--work DIR] [--keep]
#include <spawn.h>
#include <sys/wait.h>

#include <fcntl.h>

#include <chrono>
#include <csignal>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "maskcycle/common/fileio.hpp"
#include "maskcycle/curation/store.hpp"
#include "maskcycle/imaging/io.hpp"
#include "maskcycle/metrics/metrics.hpp"
#include "maskcycle/metrics/report.hpp"
#include "maskcycle/nn/convert.hpp"
#include "maskcycle/pipeline/stages.hpp"
#include "maskcycle/segmentation/train.hpp"
#include "maskcycle/synthesis/cutout.hpp"
#include "maskcycle/synthesis/synthesize.hpp"
#include "maskcycle/toyworld/toyworld.hpp"
#include "maskcycle/translation/trainer.hpp"
#include "maskcycle/translation/translate.hpp"

// after Eigen: <resolv.h> defines a `_res` macro that collides with Eigen internals
#include <httplib.h>

extern char** environ;

using namespace maskcycle;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double limit_seconds; // 0 = no runtime bound
    std::function<Outcome(const fs::path& work)> run;
};

struct Tools {
    fs::path cli;
    fs::path toycorpus;
};

std::string fmt(double v, int precision = 4)
{
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

// Accumulates failed sub-checks into one line.
class Checks {
public:
    void expect(bool ok, const std::string& what)
    {
        ++total_;
        if (!ok && failures_.size() < 5)
            failures_.push_back(what);
        failed_ += ok ? 0 : 1;
    }
    Outcome outcome(const std::string& summary) const
    {
        if (failed_ == 0)
            return {true, summary};
        std::string d = std::to_string(failed_) + "/" + std::to_string(total_) + " checks failed:";
        for (const auto& f : failures_)
            d += " [" + f + "]";
        return {false, d + " " + summary};
    }

private:
    std::size_t total_ = 0, failed_ = 0;
    std::vector<std::string> failures_;
};

// ---- 1: metric oracle -------------------------------------------------------

Outcome metric_oracle(const fs::path&)
{
    std::mt19937_64 rng(20240601);
    Checks checks;
    double worst_identity = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const double pa = std::uniform_real_distribution<double>(0, 1)(rng);
        const double pb = std::uniform_real_distribution<double>(0, 1)(rng);
        // every 50th pair is empty on one or both sides
        const bool empty_a = trial % 50 == 0, empty_b = trial % 100 == 0;
        BinaryMask a(16, 16), b(16, 16);
        long na = 0, nb = 0, inter = 0, uni = 0;
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                const bool va = !empty_a && std::bernoulli_distribution(pa)(rng);
                const bool vb = !empty_b && std::bernoulli_distribution(pb)(rng);
                a(y, x) = va;
                b(y, x) = vb;
                na += va;
                nb += vb;
                inter += va && vb;
                uni += va || vb;
            }
        const double oracle_dice = na + nb == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
        const double oracle_iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
        const double d = metrics::dice(a, b), j = metrics::iou(a, b);
        checks.expect(d == oracle_dice, "dice trial " + std::to_string(trial));
        checks.expect(j == oracle_iou, "iou trial " + std::to_string(trial));
        const double identity = std::abs(d - 2 * j / (1 + j));
        worst_identity = std::max(worst_identity, identity);
        checks.expect(identity <= 1e-12, "identity trial " + std::to_string(trial));
    }
    return checks.outcome("1000 pairs exact; max |dice - 2iou/(1+iou)| = " + fmt(worst_identity));
}

// ---- 2: compositor ----------------------------------------------------------

Outcome compositor(const fs::path& work)
{
    toyworld::FrameParams fp;
    fp.height = fp.width = 128;
    fp.heads_min = 8;
    fp.heads_max = 12;
    Rng rng = substream(7, 0);
    const MaskedSample annotated = toyworld::real_frame(fp, rng);
    const CutoutLibrary library = extract_cutouts(annotated);

    // Quantize backgrounds through PNG so on-disk composites can match them bit for bit.
    std::vector<ImageBuffer> backgrounds;
    fs::create_directories(work / "bg");
    for (int i = 0; i < 5; ++i) {
        Rng b = substream(7, 1 + static_cast<std::uint64_t>(i));
        save_image(toyworld::synthetic_background(160, 160, b), work / "bg" / (std::to_string(i) + ".png"));
        backgrounds.push_back(load_image(work / "bg" / (std::to_string(i) + ".png")));
    }

    SynthesisParams params;
    params.output_height = params.output_width = 128;
    params.heads_min = 5;
    params.heads_max = 15;
    params.seed = 99;
    SynthesisStats stats;
    synthesize_dataset(backgrounds, library, params, 500, work / "a", 0.1, &stats, 2);
    synthesize_dataset(backgrounds, library, params, 500, work / "b", 0.1, nullptr, 1);

    Checks checks;
    std::size_t compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(work / "a")) {
        if (!e.is_regular_file())
            continue;
        const fs::path other = work / "b" / fs::relative(e.path(), work / "a");
        checks.expect(fs::exists(other) && read_file(e.path()) == read_file(other),
                      "rerun differs: " + fs::relative(e.path(), work).string());
        ++compared;
    }

    const auto manifest = DatasetManifest::load(work / "a" / "manifest.jsonl");
    checks.expect(manifest.size() == 500, "manifest size");
    std::size_t background_pixels = 0;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        Rng r = substream(params.seed, i);
        const ImageBuffer& bg = backgrounds[i % backgrounds.size()];
        const SynthesisResult replay = synthesize_sample(bg, library, params, r);
        const ImageBuffer bg_crop = crop(bg, replay.background_crop);
        const MaskedSample disk = manifest.load_sample(manifest.entries()[i]);
        checks.expect(disk.mask == replay.sample.mask, "mask " + std::to_string(i));
        bool equal = true;
        for (Index y = 0; y < 128; ++y)
            for (Index x = 0; x < 128; ++x) {
                if (disk.mask(y, x) != 0)
                    continue;
                ++background_pixels;
                for (Index c = 0; c < 3; ++c)
                    equal = equal && disk.image(c, y, x) == bg_crop(c, y, x) &&
                            replay.sample.image(c, y, x) == bg_crop(c, y, x);
            }
        checks.expect(equal, "background altered in sample " + std::to_string(i));
    }
    return checks.outcome("500 samples, " + std::to_string(stats.placements) + " placements, " +
                          std::to_string(background_pixels) + " mask=0 pixels bit-equal; " + std::to_string(compared) +
                          " files byte-identical on rerun");
}

// ---- 3: translation contracts ---------------------------------------------

template <typename Scalar>
nn::Tensor<Scalar> random_tensor(nn::Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1)
{
    nn::Tensor<Scalar> t(s);
    std::uniform_real_distribution<double> d(lo, hi);
    for (nn::Index i = 0; i < t.size(); ++i)
        t.values()[i] = static_cast<Scalar>(d(rng));
    return t;
}

template <typename Scalar>
translation::MaskedBatch<Scalar> random_masked(nn::Index n, nn::Index size, std::mt19937_64& rng)
{
    nn::Tensor<Scalar> m(nn::Shape{n, 1, size, size});
    std::bernoulli_distribution d(0.4);
    for (nn::Index i = 0; i < m.size(); ++i)
        m.values()[i] = d(rng) ? Scalar(1) : Scalar(0);
    return {random_tensor<Scalar>({n, 3, size, size}, rng), m};
}

template <typename F>
bool throws_shape_error(F&& f)
{
    try {
        f();
    } catch (const ShapeError&) {
        return true;
    } catch (...) {
        return false;
    }
    return false;
}

Outcome translation_contracts(const fs::path&)
{
    using namespace translation;
    Checks checks;
    std::mt19937_64 rng(3);

    // Default architecture, random weights.
    TranslationModel<float> model(TranslationConfig{});
    const auto x = random_masked<float>(1, 32, rng);
    const auto fake = forward_s2r(model, x);
    checks.expect(fake.shape() == nn::Shape{1, 3, 32, 32}, "s2r emits 3 channels");
    const auto back = forward_r2s(model, fake);
    checks.expect(back.images.shape() == nn::Shape{1, 3, 32, 32} && back.masks.shape() == nn::Shape{1, 1, 32, 32},
                  "r2s emits 3+1 channels");
    checks.expect(back.masks.values().minCoeff() >= 0 && back.masks.values().maxCoeff() <= 1, "mask in [0,1]");
    checks.expect(throws_shape_error([&] { forward_s2r(model, x.images); }), "s2r rejects 3 channels");
    checks.expect(throws_shape_error([&] { forward_r2s(model, nn::concat_channels(x.images, x.masks)); }),
                  "r2s rejects 4 channels");

    const auto same = cycle_loss(x, x, LossWeights{});
    checks.expect(same.total == 0.0 && same.image == 0.0 && same.mask == 0.0, "cycle_loss(x,x) == 0");

    // Toy generator pair in double: analytic vs central differences.
    TranslationConfig toy;
    toy.generator = {3, 1, 1, 3};
    toy.discriminator = {2, 1};
    TranslationModel<double> dmodel(toy);
    const auto xs = random_masked<double>(1, 8, rng);
    const auto yr = random_tensor<double>({1, 3, 8, 8}, rng);
    auto params = dmodel.generator_parameters();
    nn::zero_grad(params);
    generator_objective(dmodel, xs, yr);
    std::vector<nn::Parameter<double>::Matrix> analytic;
    for (auto* p : params)
        analytic.push_back(p->grad);
    auto total = [&] {
        nn::zero_grad(params);
        return generator_objective(dmodel, xs, yr).report.generator_total;
    };
    const double h = 1e-6;
    // Central-difference roundoff is about eps*|L|/h. Entries where both the
    // analytic and numeric values sit below it are zero gradients (biases
    // feeding instance norm) and carry no relative-error information.
    const double noise_floor = 100 * std::numeric_limits<double>::epsilon() * std::abs(total()) / h;
    double worst = 0;
    int checked = 0, zero = 0;
    std::mt19937_64 pick(4);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& v = params[k]->value;
        for (nn::Index i = 0; i < v.size(); ++i) {
            if (v.cols() != 1 && std::uniform_int_distribution<int>(0, 4)(pick) != 0)
                continue;
            const double orig = v.data()[i];
            v.data()[i] = orig + h;
            const double up = total();
            v.data()[i] = orig - h;
            const double down = total();
            v.data()[i] = orig;
            const double numeric = (up - down) / (2 * h);
            const double a = analytic[k].data()[i];
            const double diff = std::abs(a - numeric);
            if (std::max(std::abs(a), std::abs(numeric)) < noise_floor) {
                ++zero;
                continue;
            }
            worst = std::max(worst, diff / (std::abs(a) + std::abs(numeric)));
            ++checked;
        }
    }
    checks.expect(checked > 100, "enough parameters checked");
    checks.expect(worst < 1e-3, "gradient rel-err " + fmt(worst));
    return checks.outcome("channel contracts hold; gradient rel-err " + fmt(worst) + " over " +
                          std::to_string(checked) + " parameters (" + std::to_string(zero) + " zero-gradient entries)");
}

// ---- 4, 5: GAN smoke and label passthrough ----------------------------------

struct ToyDomains {
    std::vector<MaskedSample> synthetic;
    std::vector<ImageBuffer> real;
};

ToyDomains toy_domains(int count, Index size, std::uint64_t seed)
{
    toyworld::FrameParams fp;
    fp.height = fp.width = size;
    Rng a = substream(seed, 0, fnv1a64("acceptance.annotated"));
    fp.heads_min = fp.heads_max = 8;
    const CutoutLibrary library = extract_cutouts(toyworld::real_frame(fp, a));
    fp.heads_min = 3;
    fp.heads_max = 7;
    SynthesisParams sp;
    sp.output_height = sp.output_width = size;
    sp.heads_min = 3;
    sp.heads_max = 8;
    ToyDomains d;
    for (int i = 0; i < count; ++i) {
        Rng b = substream(seed, static_cast<std::uint64_t>(i), fnv1a64("acceptance.background"));
        const ImageBuffer bg = toyworld::synthetic_background(size + 16, size + 16, b);
        d.synthetic.push_back(synthesize_sample(bg, library, sp, b).sample);
        Rng r = substream(seed, static_cast<std::uint64_t>(i), fnv1a64("acceptance.real"));
        d.real.push_back(toyworld::real_frame(fp, r).image);
    }
    return d;
}

translation::TranslationConfig smoke_gan_config(long steps, std::uint64_t seed)
{
    translation::TranslationConfig c;
    c.generator = {8, 2, 2, 7};
    c.discriminator = {8, 2};
    c.schedule.total_steps = steps;
    c.schedule.batch_size = 1;
    c.seed = seed;
    return c;
}

Outcome gan_smoke(const fs::path&)
{
    const ToyDomains d = toy_domains(8, 64, 41);
    translation::TranslationModel<float> model(smoke_gan_config(200, 41));
    translation::TranslationTrainer<float> trainer(model);
    std::mt19937_64 rng(42);
    std::vector<double> cycle;
    bool finite = true;
    for (int step = 0; step < 200; ++step) {
        const auto& s = d.synthetic[std::uniform_int_distribution<std::size_t>(0, 7)(rng)];
        const auto& r = d.real[std::uniform_int_distribution<std::size_t>(0, 7)(rng)];
        const translation::MaskedBatch<float> bs{
            nn::images_to_tensor<float>(std::span(&s.image, 1), nn::Range::Signed),
            nn::masks_to_tensor<float>(std::span(&s.mask, 1))};
        try {
            const auto rep = trainer.train_step(bs, nn::images_to_tensor<float>(std::span(&r, 1), nn::Range::Signed));
            finite = finite && rep.all_finite();
            cycle.push_back(rep.cycle_total);
        } catch (const NumericError& e) {
            return {false, std::string("non-finite loss: ") + e.what()};
        }
    }
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) {
        first += cycle[static_cast<std::size_t>(i)] / 10;
        last += cycle[cycle.size() - 10 + static_cast<std::size_t>(i)] / 10;
    }
    Checks checks;
    checks.expect(finite, "all losses finite");
    checks.expect(last < 0.5 * first, "cycle loss did not halve");
    return checks.outcome("cycle loss first10=" + fmt(first) + " last10=" + fmt(last) + " ratio=" + fmt(last / first));
}

Outcome label_passthrough(const fs::path& work)
{
    const ToyDomains d = toy_domains(100, 32, 51);
    DatasetManifest source(work / "source");
    fs::create_directories(work / "source" / "images");
    fs::create_directories(work / "source" / "masks");
    for (std::size_t i = 0; i < d.synthetic.size(); ++i) {
        const std::string id = zero_padded_id(i);
        save_image(d.synthetic[i].image, work / "source" / "images" / (id + ".png"));
        save_mask(d.synthetic[i].mask, work / "source" / "masks" / (id + ".png"));
        source.add({id, fs::path("images") / (id + ".png"), fs::path("masks") / (id + ".png"), "toy",
                    i % 10 == 0 ? "val" : "train"});
    }
    source.save(work / "source" / "manifest.jsonl");

    translation::TranslationModel<float> model(smoke_gan_config(1, 52));
    const DatasetManifest out = translation::translate_dataset(model, source, work / "translated");
    const DatasetManifest reloaded = DatasetManifest::load(work / "translated" / "manifest.jsonl");
    Checks checks;
    checks.expect(reloaded.size() == 100, "100 entries");
    double min_dice = 1.0;
    std::size_t changed_images = 0;
    for (std::size_t i = 0; i < std::min<std::size_t>(reloaded.size(), 100); ++i) {
        const auto& e = reloaded.entries()[i];
        const auto& s = source.entries()[i];
        checks.expect(e.id == s.id && e.split == s.split, "entry metadata " + e.id);
        const double dc = metrics::dice(load_mask(source.mask_path(s)), load_mask(reloaded.mask_path(e)));
        min_dice = std::min(min_dice, dc);
        checks.expect(dc == 1.0, "dice " + e.id);
        changed_images += read_file(source.image_path(s)) != read_file(reloaded.image_path(e));
    }
    checks.expect(changed_images == 100, "images were translated");
    return checks.outcome("100 entries, min Dice(mask_in, mask_out) = " + fmt(min_dice));
}

// ---- 6: segmentation overfit -----------------------------------------------

Outcome segmentation_overfit(const fs::path&)
{
    toyworld::FrameParams fp;
    std::vector<MaskedSample> samples;
    for (int i = 0; i < 4; ++i) {
        Rng r = substream(61, static_cast<std::uint64_t>(i));
        samples.push_back(toyworld::real_frame(fp, r));
    }
    segmentation::TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 1;
    cfg.learning_rate = 2e-3;
    cfg.augment_flip = false;
    auto model = segmentation::build_model({3, 16, 62});
    segmentation::train_on_samples(model, samples, {}, cfg);
    double mean = 0;
    for (const auto& s : samples)
        mean += metrics::dice(segmentation::predict(model, s.image).mask, s.mask) / 4;

    auto frozen = segmentation::build_model({3, 16, 63});
    std::vector<nn::Parameter<float>::Matrix> before;
    for (auto* p : frozen.parameters())
        before.push_back(p->value);
    cfg.epochs = 3;
    cfg.learning_rate = 0;
    segmentation::train_on_samples(frozen, samples, {}, cfg);
    bool unchanged = true;
    const auto after = frozen.parameters();
    for (std::size_t i = 0; i < after.size(); ++i)
        unchanged = unchanged && (after[i]->value.array() == before[i].array()).all();

    Checks checks;
    checks.expect(mean >= 0.95, "train Dice " + fmt(mean));
    checks.expect(unchanged, "lr=0 changed parameters");
    return checks.outcome("train Dice " + fmt(mean) + " after 200 epochs; lr=0 parameters bit-unchanged");
}

// ---- 7: curation replay ----------------------------------------------------

Outcome curation_replay(const fs::path& work)
{
    using namespace curation;
    std::mt19937_64 rng(71);
    Checks checks;
    std::size_t decisions = 0, exports = 0, empty_exports = 0;
    for (int seq = 0; seq < 1000; ++seq) {
        const fs::path dir = work / ("s" + std::to_string(seq));
        const int n = std::uniform_int_distribution<int>(1, 5)(rng);
        std::vector<Candidate> candidates;
        for (int i = 0; i < n; ++i) {
            const std::string id = "k" + std::to_string(i);
            const fs::path assets = fs::path("assets") / id;
            fs::create_directories(dir / assets);
            BinaryMask m(2, 2);
            m(0, i % 2) = 1;
            save_mask(m, dir / assets / "mask.png");
            save_mask(m, dir / assets / "probmap.png");
            save_image(ImageBuffer(2, 2, 3, 0.25f), dir / assets / "image.png");
            candidates.push_back({id, assets / "image.png", assets / "probmap.png", assets / "mask.png", id, "t",
                                  "", std::nullopt});
        }
        auto live = CurationStore::create(dir, candidates);
        std::map<std::string, Decision> oracle; // decided ids only
        const int steps = std::uniform_int_distribution<int>(0, 25)(rng);
        for (int k = 0; k < steps; ++k) {
            const std::string id = "k" + std::to_string(std::uniform_int_distribution<int>(0, n - 1)(rng));
            const auto d = static_cast<Decision>(std::uniform_int_distribution<int>(0, 2)(rng));
            live.record_decision(id, d, "annotator" + std::to_string(k % 3));
            oracle[id] = d;
            ++decisions;
        }
        const auto reopened = CurationStore::open(dir);
        checks.expect(live.effective_state() == oracle, "live state seq " + std::to_string(seq));
        checks.expect(reopened.effective_state() == live.effective_state(), "replay seq " + std::to_string(seq));
        checks.expect(replay(reopened.log()) == oracle, "log replay seq " + std::to_string(seq));
        for (const auto& c : candidates) {
            const auto it = oracle.find(c.id);
            const Decision expected = it == oracle.end() ? Decision::Undecided : it->second;
            checks.expect(reopened.state(c.id) == expected && live.state(c.id) == expected,
                          "state of " + c.id + " seq " + std::to_string(seq));
        }

        std::size_t accepted = 0;
        for (const auto& [id, d] : oracle)
            accepted += d == Decision::Accepted;
        try {
            const auto exported = export_curated(reopened, dir / "export");
            checks.expect(exported.size() == accepted && accepted > 0, "export count seq " + std::to_string(seq));
            checks.expect(DatasetManifest::load(dir / "export" / "manifest.jsonl").size() == accepted,
                          "exported manifest seq " + std::to_string(seq));
            ++exports;
        } catch (const EmptyExportError&) {
            checks.expect(accepted == 0, "empty export with accepted items, seq " + std::to_string(seq));
            ++empty_exports;
        }
        fs::remove_all(dir);
    }
    return checks.outcome("1000 sequences, " + std::to_string(decisions) + " decisions; " + std::to_string(exports) +
                          " exports matched the latest-wins accepted count, " + std::to_string(empty_exports) +
                          " correctly refused as empty");
}

// ---- 8: end-to-end CLI -----------------------------------------------------

pid_t spawn(const std::vector<std::string>& args, const fs::path& log)
{
    std::vector<char*> argv;
    for (const auto& a : args)
        argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, 1, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_adddup2(&actions, 1, 2);
    pid_t pid = 0;
    const int rc = posix_spawn(&pid, argv[0], &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0)
        throw IoError("cannot spawn " + args[0] + ": " + std::strerror(rc));
    return pid;
}

int wait_exit(pid_t pid)
{
    int status = 0;
    if (waitpid(pid, &status, 0) < 0)
        return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
}

std::string tail_of(const fs::path& log)
{
    std::string text = fs::exists(log) ? read_file(log) : "";
    if (text.size() > 300)
        text = "..." + text.substr(text.size() - 300);
    for (char& c : text)
        if (c == '\n')
            c = ' ';
    return text;
}

Outcome end_to_end(const fs::path& work, const Tools& tools)
{
    const fs::path corpus = work / "corpus", run = work / "run", logs = work / "logs";
    fs::create_directories(logs);
    if (int rc = wait_exit(spawn({tools.toycorpus.string(), "-o", corpus.string(), "--seed", "8"}, logs / "corpus.log"));
        rc != 0)
        return {false, "corpus generation exited " + std::to_string(rc) + ": " + tail_of(logs / "corpus.log")};
    std::size_t corpus_images = 1; // the annotated frame
    for (const auto* video : {"backgrounds.mkv", "real.mkv"})
        corpus_images += extract_frames(corpus / video, 1).size();
    corpus_images += DatasetManifest::load(corpus / "heldout" / "manifest.jsonl").size();

    const fs::path config = corpus / "pipeline.ini";
    auto stage_args = [&](const std::string& stage) {
        return std::vector<std::string>{tools.cli.string(), stage, "--config", config.string(), "--out", run.string()};
    };
    std::vector<std::string> timings;
    auto run_stage = [&](const std::string& stage) -> std::optional<Outcome> {
        const auto t0 = std::chrono::steady_clock::now();
        const int rc = wait_exit(spawn(stage_args(stage), logs / (stage + ".log")));
        timings.push_back(stage + " " +
                          fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 3) + "s");
        if (rc != 0)
            return Outcome{false, stage + " exited " + std::to_string(rc) + ": " + tail_of(logs / (stage + ".log"))};
        return std::nullopt;
    };

    for (const auto* stage : {"synth", "train-gan", "translate", "train-seg"})
        if (auto fail = run_stage(stage))
            return *fail;

    // curate serves in the background; this process plays the annotator.
    auto curate_args = stage_args("curate");
    curate_args.insert(curate_args.end(), {"--port", "0", "--exit-after-export"});
    const auto t0 = std::chrono::steady_clock::now();
    const pid_t curate = spawn(curate_args, logs / "curate.log");
    const fs::path server_file = run / "curate" / "server.json";
    int port = 0;
    for (int i = 0; i < 1200 && port == 0; ++i) {
        int status = 0;
        if (waitpid(curate, &status, WNOHANG) == curate)
            return {false, "curate exited before serving: " + tail_of(logs / "curate.log")};
        if (fs::exists(server_file)) {
            try {
                port = json::parse(read_file(server_file)).at("port").get<int>();
            } catch (const std::exception&) {
            }
        }
        if (port == 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    if (port == 0) {
        kill(curate, SIGTERM);
        wait_exit(curate);
        return {false, "curate never published its port"};
    }
    httplib::Client http("127.0.0.1", port);
    http.set_read_timeout(30);
    Checks checks;
    std::size_t accepted = 0;
    std::size_t listed = 0;
    if (auto res = http.Get("/candidates?state=undecided"); res && res->status == 200) {
        const auto list = json::parse(res->body);
        listed = list.size();
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string id = list[i].at("id");
            checks.expect(http.Get("/candidates/" + id + "/probmap")->status == 200, "probmap " + id);
            const std::string decision = i % 3 == 2 ? "rejected" : "accepted";
            const auto r = http.Post("/candidates/" + id + "/decision",
                                     json{{"decision", decision}, {"annotator", "acceptance"}}.dump(),
                                     "application/json");
            checks.expect(r && r->status == 200, "decision " + id);
            accepted += decision == "accepted";
        }
    } else {
        checks.expect(false, "GET /candidates");
    }
    const auto exported = http.Post("/export", "", "application/json");
    checks.expect(exported && exported->status == 200, "POST /export");
    if (exported && exported->status == 200)
        checks.expect(json::parse(exported->body).at("count") == accepted, "export count");
    const int curate_rc = wait_exit(curate);
    timings.push_back("curate " +
                      fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 3) + "s");
    checks.expect(curate_rc == 0, "curate exited " + std::to_string(curate_rc));

    for (const auto* stage : {"finetune", "eval"})
        if (auto fail = run_stage(stage))
            return *fail;

    const auto report = json::parse(read_file(run / "eval" / "report.json"));
    const auto problems = metrics::validate_report_json(report);
    checks.expect(problems.empty(), problems.empty() ? "" : "schema: " + problems.front());
    checks.expect(report.at("model_tag") == "finetune", "report from the fine-tuned model");
    checks.expect(corpus_images == 32, "corpus has " + std::to_string(corpus_images) + " images");

    std::string times;
    for (const auto& t : timings)
        times += (times.empty() ? "" : ", ") + t;
    return checks.outcome(std::to_string(corpus_images) + "-image corpus; " + std::to_string(listed) +
                          " candidates reviewed over HTTP, " + std::to_string(accepted) +
                          " accepted; report.json schema-valid, mean Dice " +
                          fmt(report.value("mean_dice", -1.0)) + " (" + times + ")");
}

// ---- 9: directional sanity ---------------------------------------------------

Outcome directional(const fs::path& work)
{
    std::string detail;
    bool any = false;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const fs::path root = work / ("seed" + std::to_string(seed));
        toyworld::CorpusSpec spec;
        spec.seed = seed;
        spec.heldout = 16;
        toyworld::write_corpus(spec, root / "corpus");
        write_file_atomic(root / "corpus" / "pipeline.ini", toyworld::pipeline_config(seed));

        pipeline::StageContext ctx;
        ctx.config = pipeline::load_pipeline_config(root / "corpus" / "pipeline.ini");
        ctx.layout.root = root / "run";
        std::map<std::string, double> dice;
        for (const auto* stage : {"synth", "train-gan", "translate"})
            pipeline::run_stage(stage, ctx);
        for (const std::string source : {"synthetic", "translated"}) {
            ctx.config.seg.train_on = source;
            pipeline::run_train_seg(ctx);
            pipeline::run_eval(ctx);
            dice[source] = json::parse(read_file(ctx.layout.report())).at("mean_dice").get<double>();
        }
        const bool ok = dice["translated"] >= dice["synthetic"];
        any = any || ok;
        detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) +
                  ": translated " + fmt(dice["translated"]) + " vs synthetic " + fmt(dice["synthetic"]) +
                  (ok ? " (ok)" : " (reversed)");
    }
    return {any, "held-out Dice " + detail};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"maskcycle acceptance run"};
    Tools tools;
    std::string only;
    std::string work_arg;
    bool keep = false;
    app.add_option("--cli", tools.cli, "maskcycle executable")->required()->check(CLI::ExistingFile);
    app.add_option("--toycorpus", tools.toycorpus, "maskcycle-toycorpus executable")->required()->check(CLI::ExistingFile);
    app.add_option("--only", only, "comma-separated criterion numbers");
    app.add_option("--work", work_arg, "scratch directory (default: a fresh temp dir)");
    app.add_flag("--keep", keep, "keep the scratch directory");
    CLI11_PARSE(app, argc, argv);

    std::set<int> selected;
    std::stringstream list(only);
    for (std::string tok; std::getline(list, tok, ',');)
        if (!tok.empty())
            selected.insert(std::stoi(tok));

    const fs::path work = work_arg.empty() ? fs::temp_directory_path() / ("maskcycle-acceptance-" +
                                                                          std::to_string(::getpid()))
                                           : fs::path(work_arg);
    fs::remove_all(work);
    fs::create_directories(work);
    tools.cli = fs::absolute(tools.cli);
    tools.toycorpus = fs::absolute(tools.toycorpus);

    const std::vector<Criterion> criteria{
        {1, "metric oracle", 10, metric_oracle},
        {2, "compositor consistency", 60, compositor},
        {3, "translation contracts", 60, translation_contracts},
        {4, "GAN smoke training", 15 * 60, gan_smoke},
        {5, "label passthrough", 0, label_passthrough},
        {6, "segmentation overfit", 10 * 60, segmentation_overfit},
        {7, "curation log replay", 0, curation_replay},
        {8, "end-to-end toy pipeline", 30 * 60, [&](const fs::path& w) { return end_to_end(w, tools); }},
        {9, "directional sanity", 0, directional},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.id))
            continue;
        const fs::path dir = work / ("ac" + std::to_string(c.id));
        fs::create_directories(dir);
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run(dir);
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::string timing = fmt(secs, 3) + "s";
        if (c.limit_seconds > 0) {
            timing += " / limit " + fmt(c.limit_seconds, 4) + "s";
            if (secs >= c.limit_seconds) {
                o.pass = false;
                o.detail += " [runtime limit exceeded]";
            }
        }
        failed += o.pass ? 0 : 1;
        std::cout << "AC" << c.id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << o.detail << " ("
                  << timing << ")" << std::endl;
        if (!keep)
            fs::remove_all(dir);
    }
    if (!keep)
        fs::remove_all(work);
    std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << std::endl;
    return failed == 0 ? 0 : 1;
}
