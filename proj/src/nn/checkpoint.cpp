#include "maskcycle/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string_view>

#include "maskcycle/common/rng.hpp"

namespace maskcycle::nn {
namespace {

namespace fs = std::filesystem;
constexpr std::string_view kMagic = "MCYCKPT1";

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view in, std::size_t& pos)
{
    if (pos + 8 > in.size())
        throw ChecksumError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 8;
    return v;
}

} // namespace

void write_checkpoint_file(const CheckpointFile& file, const fs::path& path)
{
    nlohmann::json header{{"kind", file.kind}, {"dtype", file.dtype}, {"meta", file.meta}, {"tensors", nlohmann::json::array()}};
    std::size_t payload_size = 0;
    for (const auto& t : file.tensors) {
        header["tensors"].push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}, {"bytes", t.bytes.size()}});
        payload_size += t.bytes.size();
    }
    const std::string header_text = header.dump();

    std::string blob(kMagic);
    put_u64(blob, header_text.size());
    blob += header_text;
    put_u64(blob, payload_size);
    for (const auto& t : file.tensors)
        blob.append(reinterpret_cast<const char*>(t.bytes.data()), t.bytes.size());
    put_u64(blob, fnv1a64(blob));

    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot write checkpoint " + tmp.string());
        out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
        if (!out.flush())
            throw IoError("cannot write checkpoint " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec)
        throw IoError("cannot move checkpoint into place: " + ec.message());
}

CheckpointFile read_checkpoint_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open checkpoint " + path.string());
    const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string_view view(blob);

    if (view.size() < kMagic.size() + 24 || view.substr(0, kMagic.size()) != kMagic)
        throw ChecksumError("not a checkpoint or truncated: " + path.string());
    std::size_t tail = view.size() - 8;
    std::size_t pos = tail;
    const std::uint64_t stored = get_u64(view, pos);
    if (fnv1a64(view.substr(0, tail)) != stored)
        throw ChecksumError("checkpoint checksum mismatch: " + path.string());

    pos = kMagic.size();
    const std::uint64_t header_len = get_u64(view, pos);
    if (pos + header_len > tail)
        throw ChecksumError("checkpoint header truncated");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(view.substr(pos, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw ChecksumError(std::string("checkpoint header corrupt: ") + e.what());
    }
    pos += header_len;
    const std::uint64_t payload_len = get_u64(view, pos);
    if (pos + payload_len != tail)
        throw ChecksumError("checkpoint payload length mismatch");

    CheckpointFile file;
    try {
        file.kind = header.at("kind").get<std::string>();
        file.dtype = header.at("dtype").get<std::string>();
        file.meta = header.at("meta");
        for (const auto& t : header.at("tensors")) {
            CheckpointTensor tensor{t.at("name").get<std::string>(), t.at("rows").get<Index>(), t.at("cols").get<Index>(), {}};
            const auto bytes = t.at("bytes").get<std::size_t>();
            if (pos + bytes > tail)
                throw ChecksumError("checkpoint tensor overruns payload");
            tensor.bytes.assign(blob.begin() + static_cast<std::ptrdiff_t>(pos),
                                blob.begin() + static_cast<std::ptrdiff_t>(pos + bytes));
            pos += bytes;
            file.tensors.push_back(std::move(tensor));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ChecksumError(std::string("checkpoint header malformed: ") + e.what());
    }
    return file;
}

} // namespace maskcycle::nn
