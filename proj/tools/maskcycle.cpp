// Command-line driver: one subcommand per pipeline stage.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "maskcycle/pipeline/stages.hpp"

namespace mp = maskcycle::pipeline;

namespace {

struct CommonArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "run";
    bool force = false;
    bool quiet = false;
};

struct CurateArgs {
    std::optional<std::string> host;
    std::optional<int> port;
    bool no_serve = false;
    bool exit_after_export = false;
    std::optional<std::string> static_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args)
{
    cmd->add_option("-c,--config", args.config, "pipeline config file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed, "override the config's global seed");
    cmd->add_option("-o,--out", args.out, "run directory holding every stage's outputs")->capture_default_str();
    cmd->add_flag("--force", args.force, "rerun even if outputs are up to date");
    cmd->add_flag("-q,--quiet", args.quiet, "suppress progress output");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"maskcycle: synthetic wheat-head data, domain translation and segmentation"};
    app.require_subcommand(1, 1);
    CommonArgs common;
    CurateArgs curate;

    for (const auto& name : mp::stage_names()) {
        std::string help;
        if (name == "synth")
            help = "paste annotated heads onto background frames";
        else if (name == "train-gan")
            help = "train the mask-conditioned translation model";
        else if (name == "translate")
            help = "translate the synthetic dataset into the real domain";
        else if (name == "train-seg")
            help = "train the segmentation model";
        else if (name == "curate")
            help = "generate pseudo-label candidates and serve the review API";
        else if (name == "finetune")
            help = "fine-tune the segmenter on accepted pseudo-labels";
        else
            help = "score a segmenter on the labeled evaluation set";
        CLI::App* cmd = app.add_subcommand(name, help);
        add_common(cmd, common);
        if (name == "curate") {
            cmd->add_option("--host", curate.host, "review server bind address");
            cmd->add_option("--port", curate.port, "review server port (0 picks a free one)")
                ->check(CLI::Range(0, 65535));
            cmd->add_flag("--no-serve", curate.no_serve, "only generate candidates");
            cmd->add_flag("--exit-after-export", curate.exit_after_export, "stop serving after the first export");
            cmd->add_option("--static-dir", curate.static_dir, "review UI assets to serve at /");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        mp::StageContext ctx;
        ctx.config = mp::load_pipeline_config(common.config, common.seed);
        if (curate.host)
            ctx.config.curate.host = *curate.host;
        if (curate.port)
            ctx.config.curate.port = *curate.port;
        if (curate.no_serve)
            ctx.config.curate.serve = false;
        if (curate.exit_after_export)
            ctx.config.curate.exit_after_export = true;
        if (curate.static_dir)
            ctx.config.curate.static_dir = *curate.static_dir;
        ctx.layout.root = common.out;
        ctx.log = common.quiet ? nullptr : &std::cout;
        ctx.force = common.force;
        mp::run_stage(stage, ctx);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "maskcycle " << stage << ": error: " << e.what() << '\n';
        return mp::exit_code_for(e);
    }
}
