#include "maskcycle/pipeline/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace maskcycle::pipeline {

namespace fs = std::filesystem;

ConfigFile ConfigFile::parse(const std::string& text, const fs::path& base_dir)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
    }
    ConfigFile file;
    file.base_dir_ = base_dir;
    for (const auto& [key, node] : tree) {
        if (node.empty()) {
            file.values_[key] = node.data();
            continue;
        }
        for (const auto& [sub, leaf] : node)
            file.values_[key + "." + sub] = leaf.data();
    }
    return file;
}

ConfigFile ConfigFile::load(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), fs::absolute(path).parent_path());
}

const std::string* ConfigFile::find(const std::string& key) const
{
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const
{
    const auto* v = find(key);
    return v ? *v : fallback;
}

long ConfigFile::get_int(const std::string& key, long fallback) const
{
    const auto* v = find(key);
    if (!v)
        return fallback;
    std::size_t used = 0;
    try {
        const long out = std::stol(*v, &used);
        if (used == v->size())
            return out;
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected an integer, got '" + *v + "'");
}

double ConfigFile::get_double(const std::string& key, double fallback) const
{
    const auto* v = find(key);
    if (!v)
        return fallback;
    std::size_t used = 0;
    try {
        const double out = std::stod(*v, &used);
        if (used == v->size())
            return out;
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected a number, got '" + *v + "'");
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const
{
    const auto* v = find(key);
    if (!v)
        return fallback;
    if (*v == "true" || *v == "yes" || *v == "1" || *v == "on")
        return true;
    if (*v == "false" || *v == "no" || *v == "0" || *v == "off")
        return false;
    throw ConfigError(key + ": expected a boolean, got '" + *v + "'");
}

fs::path ConfigFile::get_path(const std::string& key) const
{
    const auto* v = find(key);
    if (!v || v->empty())
        return {};
    const fs::path p(*v);
    return p.is_absolute() ? p : (base_dir_ / p).lexically_normal();
}

std::vector<std::string> ConfigFile::unused_keys() const
{
    std::vector<std::string> out;
    for (const auto& [key, value] : values_)
        if (!used_.count(key))
            out.push_back(key);
    return out;
}

std::uint64_t stage_seed(std::uint64_t global_seed, const std::string& stage)
{
    Rng rng = stage_stream(global_seed, stage);
    return rng();
}

namespace {

segmentation::TrainConfig read_train(const ConfigFile& f, const std::string& section,
                                     segmentation::TrainConfig defaults)
{
    segmentation::TrainConfig t = defaults;
    t.epochs = static_cast<int>(f.get_int(section + ".epochs", t.epochs));
    t.learning_rate = f.get_double(section + ".learning_rate", t.learning_rate);
    t.batch_size = f.get_int(section + ".batch_size", t.batch_size);
    t.augment_flip = f.get_bool(section + ".augment_flip", t.augment_flip);
    t.checkpoint_every = static_cast<int>(f.get_int(section + ".checkpoint_every", t.checkpoint_every));
    t.threshold = f.get_double(section + ".threshold", t.threshold);
    t.workers = static_cast<unsigned>(f.get_int(section + ".workers", t.workers));
    t.validate();
    return t;
}

nlohmann::json train_json(const segmentation::TrainConfig& t)
{
    return {{"epochs", t.epochs},
            {"learning_rate", t.learning_rate},
            {"batch_size", t.batch_size},
            {"augment_flip", t.augment_flip},
            {"checkpoint_every", t.checkpoint_every},
            {"threshold", t.threshold},
            {"seed", t.seed}};
}

std::string path_string(const fs::path& p) { return p.generic_string(); }

} // namespace

PipelineConfig parse_pipeline_config(const ConfigFile& f, std::optional<std::uint64_t> seed_override)
{
    PipelineConfig c;
    const long seed = f.get_int("seed", 0);
    if (seed < 0)
        throw ConfigError("seed must be non-negative");
    c.seed = seed_override.value_or(static_cast<std::uint64_t>(seed));

    c.paths.annotated_image = f.get_path("paths.annotated_image");
    c.paths.annotated_mask = f.get_path("paths.annotated_mask");
    c.paths.backgrounds = f.get_path("paths.backgrounds");
    c.paths.real_frames = f.get_path("paths.real_frames");
    c.paths.eval_manifest = f.get_path("paths.eval_manifest");
    c.paths.unlabeled = f.get_path("paths.unlabeled");
    c.paths.background_stride = f.get_int("paths.background_stride", 1);
    c.paths.real_stride = f.get_int("paths.real_stride", 1);
    if (c.paths.background_stride < 1 || c.paths.real_stride < 1)
        throw ConfigError("frame strides must be at least 1");

    auto& sp = c.synth.params;
    sp.heads_min = static_cast<int>(f.get_int("synth.heads_min", sp.heads_min));
    sp.heads_max = static_cast<int>(f.get_int("synth.heads_max", sp.heads_max));
    sp.scale_min = f.get_double("synth.scale_min", sp.scale_min);
    sp.scale_max = f.get_double("synth.scale_max", sp.scale_max);
    sp.rotation_deg = f.get_double("synth.rotation_deg", sp.rotation_deg);
    sp.allow_flip = f.get_bool("synth.allow_flip", sp.allow_flip);
    sp.output_height = f.get_int("synth.height", sp.output_height);
    sp.output_width = f.get_int("synth.width", sp.output_width);
    sp.seed = stage_seed(c.seed, "synth");
    sp.validate();
    c.synth.count = f.get_int("synth.count", c.synth.count);
    c.synth.val_fraction = f.get_double("synth.val_fraction", c.synth.val_fraction);
    c.synth.workers = static_cast<unsigned>(f.get_int("synth.workers", c.synth.workers));
    if (c.synth.count < 1)
        throw ConfigError("synth.count must be at least 1");
    if (!(c.synth.val_fraction >= 0 && c.synth.val_fraction < 1))
        throw ConfigError("synth.val_fraction must lie in [0,1)");

    auto& g = c.gan.model;
    g.generator.base_width = f.get_int("gan.base_width", g.generator.base_width);
    g.generator.residual_blocks = f.get_int("gan.residual_blocks", g.generator.residual_blocks);
    g.generator.downsampling = f.get_int("gan.downsampling", g.generator.downsampling);
    g.generator.outer_kernel = f.get_int("gan.outer_kernel", g.generator.outer_kernel);
    g.discriminator.base_width = f.get_int("gan.d_base_width", g.discriminator.base_width);
    g.discriminator.layers = f.get_int("gan.d_layers", g.discriminator.layers);
    g.weights.lambda_cycle_image = f.get_double("gan.lambda_cycle_image", g.weights.lambda_cycle_image);
    g.weights.lambda_cycle_mask = f.get_double("gan.lambda_cycle_mask", g.weights.lambda_cycle_mask);
    g.weights.lambda_adv = f.get_double("gan.lambda_adv", g.weights.lambda_adv);
    g.mask_loss = translation::parse_mask_loss(f.get_string("gan.mask_loss", "l1"));
    g.schedule.learning_rate = f.get_double("gan.learning_rate", g.schedule.learning_rate);
    g.schedule.beta1 = f.get_double("gan.beta1", g.schedule.beta1);
    g.schedule.total_steps = f.get_int("gan.steps", g.schedule.total_steps);
    g.schedule.decay_start = f.get_double("gan.decay_start", g.schedule.decay_start);
    const long pool = f.get_int("gan.pool_size", static_cast<long>(g.schedule.pool_size));
    if (pool < 0)
        throw ConfigError("gan.pool_size must be non-negative");
    g.schedule.pool_size = static_cast<std::size_t>(pool);
    g.schedule.batch_size = f.get_int("gan.batch_size", g.schedule.batch_size);
    g.seed = stage_seed(c.seed, "train-gan");
    g.validate();
    if (g.schedule.total_steps < 1)
        throw ConfigError("gan.steps must be at least 1");
    c.gan.checkpoint_every = f.get_int("gan.checkpoint_every", c.gan.checkpoint_every);
    c.gan.log_every = f.get_int("gan.log_every", c.gan.log_every);

    c.seg.net.depth = f.get_int("seg.depth", c.seg.net.depth);
    c.seg.net.base_width = f.get_int("seg.base_width", c.seg.net.base_width);
    c.seg.net.seed = stage_seed(c.seed, "train-seg");
    c.seg.net.validate();
    segmentation::TrainConfig seg_defaults;
    seg_defaults.seed = stage_seed(c.seed, "train-seg.data");
    c.seg.train = read_train(f, "seg", seg_defaults);
    c.seg.train_on = f.get_string("seg.train_on", c.seg.train_on);
    if (c.seg.train_on != "translated" && c.seg.train_on != "synthetic")
        throw ConfigError("seg.train_on must be 'translated' or 'synthetic'");

    const long samples = f.get_int("curate.sample_count", static_cast<long>(c.curate.sample_count));
    if (samples < 1)
        throw ConfigError("curate.sample_count must be at least 1");
    c.curate.sample_count = static_cast<std::size_t>(samples);
    c.curate.threshold = f.get_double("curate.threshold", c.curate.threshold);
    c.curate.host = f.get_string("curate.host", c.curate.host);
    c.curate.port = static_cast<int>(f.get_int("curate.port", c.curate.port));
    c.curate.serve = f.get_bool("curate.serve", c.curate.serve);
    c.curate.exit_after_export = f.get_bool("curate.exit_after_export", c.curate.exit_after_export);
    c.curate.static_dir = f.get_path("curate.static_dir");
    if (c.curate.port < 0 || c.curate.port > 65535)
        throw ConfigError("curate.port out of range");

    segmentation::TrainConfig ft_defaults;
    ft_defaults.epochs = 5;
    ft_defaults.learning_rate = 2e-4;
    ft_defaults.seed = stage_seed(c.seed, "finetune");
    c.finetune.train = read_train(f, "finetune", ft_defaults);

    c.eval.model = f.get_string("eval.model", c.eval.model);
    if (c.eval.model != "auto" && c.eval.model != "seg" && c.eval.model != "finetune")
        throw ConfigError("eval.model must be auto, seg or finetune");
    c.eval.threshold = f.get_double("eval.threshold", c.eval.threshold);
    if (!(c.eval.threshold >= 0 && c.eval.threshold <= 1))
        throw ConfigError("eval.threshold must lie in [0,1]");
    c.eval.dataset_tag = f.get_string("eval.dataset_tag", c.eval.dataset_tag);

    if (const auto unknown = f.unused_keys(); !unknown.empty()) {
        std::string list;
        for (const auto& k : unknown)
            list += (list.empty() ? "" : ", ") + k;
        throw ConfigError("unknown config keys: " + list);
    }
    return c;
}

PipelineConfig load_pipeline_config(const fs::path& path, std::optional<std::uint64_t> seed_override)
{
    return parse_pipeline_config(ConfigFile::load(path), seed_override);
}

nlohmann::json stage_settings(const PipelineConfig& c, const std::string& stage)
{
    if (stage == "synth") {
        const auto& p = c.synth.params;
        return {{"annotated_image", path_string(c.paths.annotated_image)},
                {"annotated_mask", path_string(c.paths.annotated_mask)},
                {"backgrounds", path_string(c.paths.backgrounds)},
                {"background_stride", c.paths.background_stride},
                {"heads", {p.heads_min, p.heads_max}},
                {"scale", {p.scale_min, p.scale_max}},
                {"rotation_deg", p.rotation_deg},
                {"allow_flip", p.allow_flip},
                {"size", {p.output_height, p.output_width}},
                {"seed", p.seed},
                {"count", c.synth.count},
                {"val_fraction", c.synth.val_fraction}};
    }
    if (stage == "train-gan")
        return {{"model", translation::to_json(c.gan.model)},
                {"real_frames", path_string(c.paths.real_frames)},
                {"real_stride", c.paths.real_stride}};
    if (stage == "translate")
        return nlohmann::json::object();
    if (stage == "train-seg")
        return {{"net", segmentation::to_json(c.seg.net)}, {"train", train_json(c.seg.train)},
                {"train_on", c.seg.train_on}};
    if (stage == "curate")
        return {{"sample_count", c.curate.sample_count},
                {"threshold", c.curate.threshold},
                {"pool", path_string(c.paths.unlabeled.empty() ? c.paths.real_frames : c.paths.unlabeled)},
                {"real_stride", c.paths.real_stride},
                {"seed", stage_seed(c.seed, "curate")}};
    if (stage == "finetune")
        return {{"train", train_json(c.finetune.train)}};
    if (stage == "eval")
        return {{"model", c.eval.model},
                {"threshold", c.eval.threshold},
                {"dataset_tag", c.eval.dataset_tag},
                {"eval_manifest", path_string(c.paths.eval_manifest)}};
    throw ConfigError("unknown stage '" + stage + "'");
}

} // namespace maskcycle::pipeline
