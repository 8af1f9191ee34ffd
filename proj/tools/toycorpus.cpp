// Writes a small procedural corpus plus a matching pipeline config, for
// trying the full pipeline on a CPU in minutes.
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "maskcycle/common/fileio.hpp"
#include "maskcycle/toyworld/toyworld.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv)
{
    CLI::App app{"Write a procedural toy corpus and its pipeline.ini"};
    std::string out;
    maskcycle::toyworld::CorpusSpec spec;
    app.add_option("-o,--out", out, "output directory")->required();
    app.add_option("--seed", spec.seed, "corpus and pipeline seed")->capture_default_str();
    app.add_option("--size", spec.size, "edge of real-style frames")->capture_default_str()->check(CLI::Range(16, 4096));
    app.add_option("--background-size", spec.background_size, "edge of background frames")
        ->capture_default_str()
        ->check(CLI::Range(16, 4096));
    app.add_option("--backgrounds", spec.backgrounds, "background frames")->capture_default_str()->check(CLI::Range(1, 100000));
    app.add_option("--real-frames", spec.real_frames, "unlabeled real-style frames")
        ->capture_default_str()
        ->check(CLI::Range(1, 100000));
    app.add_option("--heldout", spec.heldout, "labeled evaluation frames")->capture_default_str()->check(CLI::Range(1, 100000));
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        maskcycle::toyworld::write_corpus(spec, out);
        maskcycle::write_file_atomic(fs::path(out) / "pipeline.ini", maskcycle::toyworld::pipeline_config(spec.seed));
        std::cout << "wrote corpus and pipeline.ini to " << out << '\n';
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "maskcycle-toycorpus: error: " << e.what() << '\n';
        return 1;
    }
}
