#include "maskcycle/synthesis/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "maskcycle/imaging/io.hpp"

namespace maskcycle {
namespace {

namespace fs = std::filesystem;

std::string relative_or_absolute(const fs::path& p, const fs::path& root)
{
    std::error_code ec;
    const fs::path rel = fs::relative(fs::absolute(p), fs::absolute(root), ec);
    if (!ec && !rel.empty() && *rel.begin() != "..")
        return rel.generic_string();
    return fs::absolute(p).lexically_normal().generic_string();
}

} // namespace

std::string zero_padded_id(std::size_t index, int width)
{
    std::string s = std::to_string(index);
    if (static_cast<int>(s.size()) < width)
        s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
    return s;
}

DatasetManifest DatasetManifest::load(const fs::path& manifest_file)
{
    std::ifstream in(manifest_file);
    if (!in)
        throw IoError("cannot open manifest " + manifest_file.string());
    DatasetManifest manifest(manifest_file.parent_path());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            const auto j = nlohmann::json::parse(line);
            ManifestEntry e;
            e.id = j.at("id").get<std::string>();
            e.image = j.at("image").get<std::string>();
            if (j.contains("mask") && !j.at("mask").is_null())
                e.mask = j.at("mask").get<std::string>();
            e.source_id = j.value("source_id", std::string{});
            e.split = j.value("split", std::string{"train"});
            manifest.add(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw DataError(manifest_file.string() + ":" + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return manifest;
}

void DatasetManifest::save(const fs::path& manifest_file) const
{
    const fs::path dir = manifest_file.parent_path();
    if (!dir.empty())
        fs::create_directories(dir);
    std::ostringstream text;
    for (const auto& e : entries_) {
        nlohmann::json j{{"id", e.id},
                         {"image", relative_or_absolute(resolve(e.image), dir)},
                         {"mask", e.mask.empty() ? nlohmann::json(nullptr)
                                                 : nlohmann::json(relative_or_absolute(resolve(e.mask), dir))},
                         {"source_id", e.source_id},
                         {"split", e.split}};
        text << j.dump() << '\n';
    }
    fs::path tmp = manifest_file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out)
            throw IoError("cannot write manifest " + manifest_file.string());
        out << text.str();
        if (!out.flush())
            throw IoError("cannot write manifest " + manifest_file.string());
    }
    fs::rename(tmp, manifest_file);
}

DatasetManifest DatasetManifest::filter_split(std::string_view split) const
{
    DatasetManifest out(root_);
    for (const auto& e : entries_)
        if (e.split == split)
            out.add(e);
    return out;
}

void DatasetManifest::validate() const
{
    std::set<fs::path> seen;
    for (const auto& e : entries_) {
        const fs::path image = fs::weakly_canonical(image_path(e));
        if (!fs::is_regular_file(image))
            throw DataError("manifest entry " + e.id + ": missing image " + image.string());
        if (!e.mask.empty() && !fs::is_regular_file(mask_path(e)))
            throw DataError("manifest entry " + e.id + ": missing mask " + mask_path(e).string());
        if (!seen.insert(image).second)
            throw DataError("manifest entry " + e.id + ": duplicate image path " + image.string());
    }
}

MaskedSample DatasetManifest::load_sample(const ManifestEntry& entry, double mask_threshold) const
{
    if (entry.mask.empty())
        throw DataError("manifest entry " + entry.id + " has no mask");
    MaskedSample sample{load_image(image_path(entry)), load_mask(mask_path(entry), mask_threshold), entry.source_id};
    try {
        sample.validate();
    } catch (const Error& e) {
        throw DataError("manifest entry " + entry.id + ": " + e.what());
    }
    return sample;
}

} // namespace maskcycle
