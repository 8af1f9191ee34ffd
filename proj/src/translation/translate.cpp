#include "maskcycle/translation/translate.hpp"

#include <array>

#include "maskcycle/imaging/io.hpp"
#include "maskcycle/nn/convert.hpp"

namespace maskcycle::translation {

namespace fs = std::filesystem;

DatasetManifest translate_dataset(TranslationModel<float>& model, const DatasetManifest& source,
                                  const fs::path& out_dir)
{
    if (source.empty())
        throw DataError("cannot translate an empty manifest");
    source.validate();

    std::error_code ec;
    fs::create_directories(out_dir / "images", ec);
    if (!ec)
        fs::create_directories(out_dir / "masks", ec);
    if (ec)
        throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    DatasetManifest out(out_dir);
    for (const ManifestEntry& entry : source.entries()) {
        try {
            const MaskedSample sample = source.load_sample(entry);
            const std::array<ImageBuffer, 1> images{sample.image};
            const std::array<BinaryMask, 1> masks{sample.mask};
            const MaskedBatch<float> batch{nn::images_to_tensor<float>(images, nn::Range::Signed),
                                           nn::masks_to_tensor<float>(masks)};
            const nn::Tensor<float> fake = forward_s2r(model, batch);

            ManifestEntry translated;
            translated.id = entry.id;
            translated.image = fs::path("images") / (entry.id + ".png");
            translated.mask = fs::path("masks") / (entry.id + entry.mask.extension().string());
            translated.source_id = "translated:" + entry.id;
            translated.split = entry.split;

            save_image(nn::tensor_to_image(fake, 0, nn::Range::Signed), out_dir / translated.image);
            fs::copy_file(source.mask_path(entry), out_dir / translated.mask, fs::copy_options::overwrite_existing,
                          ec);
            if (ec)
                throw IoError("cannot copy mask " + source.mask_path(entry).string() + ": " + ec.message());
            out.add(std::move(translated));
        } catch (const IoError& e) {
            out.save(out_dir / "manifest.partial.jsonl");
            throw IoError("translation aborted at entry '" + entry.id + "' after " + std::to_string(out.size()) +
                          " of " + std::to_string(source.size()) + " entries (" + e.what() +
                          "); partial manifest at " + (out_dir / "manifest.partial.jsonl").string());
        }
    }
    out.save(out_dir / "manifest.jsonl");
    fs::remove(out_dir / "manifest.partial.jsonl", ec);
    return out;
}

} // namespace maskcycle::translation
