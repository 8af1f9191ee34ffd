#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "maskcycle/imaging/image.hpp"

namespace maskcycle {

// One line of manifest.jsonl: {id, image, mask, source_id, split}. Paths are
// stored relative to the manifest's directory when they live beneath it.
// `mask` is empty for unlabeled entries.
struct ManifestEntry {
    std::string id;
    std::filesystem::path image;
    std::filesystem::path mask;
    std::string source_id;
    std::string split = "train";

    bool operator==(const ManifestEntry&) const = default;
};

class DatasetManifest {
public:
    DatasetManifest() = default;
    explicit DatasetManifest(std::filesystem::path root) : root_(std::move(root)) {}

    static DatasetManifest load(const std::filesystem::path& manifest_file);
    // Writes manifest.jsonl (or the given file) atomically.
    void save(const std::filesystem::path& manifest_file) const;

    const std::filesystem::path& root() const { return root_; }
    std::vector<ManifestEntry>& entries() { return entries_; }
    const std::vector<ManifestEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    void add(ManifestEntry entry) { entries_.push_back(std::move(entry)); }

    std::filesystem::path resolve(const std::filesystem::path& p) const { return p.is_absolute() ? p : root_ / p; }
    std::filesystem::path image_path(const ManifestEntry& e) const { return resolve(e.image); }
    std::filesystem::path mask_path(const ManifestEntry& e) const { return resolve(e.mask); }

    DatasetManifest filter_split(std::string_view split) const;

    // Every referenced file exists and no image path repeats.
    void validate() const;

    MaskedSample load_sample(const ManifestEntry& entry, double mask_threshold = 0.5) const;

private:
    std::filesystem::path root_;
    std::vector<ManifestEntry> entries_;
};

std::string zero_padded_id(std::size_t index, int width = 6);

} // namespace maskcycle
