#pragma once

#include <filesystem>

#include "maskcycle/synthesis/manifest.hpp"
#include "maskcycle/translation/model.hpp"

namespace maskcycle::translation {

// Runs G_{S->R} over every entry of `source` and writes out_dir/images/<id>.png
// plus a byte-for-byte copy of the source mask under out_dir/masks. Splits and
// ids are carried over; source_id records the originating entry.
//
// On an I/O failure the entries written so far are listed in
// out_dir/manifest.partial.jsonl and an IoError naming the failing entry is
// thrown.
DatasetManifest translate_dataset(TranslationModel<float>& model, const DatasetManifest& source,
                                  const std::filesystem::path& out_dir);

} // namespace maskcycle::translation
