#pragma once

#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "maskcycle/nn/layers.hpp"

namespace maskcycle::nn {

// Self-describing parameter container shared by every trainable model.
//
//   "MCYCKPT1" | u64 header length | header JSON | u64 payload length |
//   payload (raw little-endian scalars, row-major, in header tensor order) |
//   u64 FNV-1a checksum of all preceding bytes
//
// The header carries {kind, dtype, meta, tensors:[{name, rows, cols}]};
// `meta` holds the model's architecture config and training counters.
struct CheckpointTensor {
    std::string name;
    Index rows = 0;
    Index cols = 0;
    std::vector<unsigned char> bytes;
};

struct CheckpointFile {
    std::string kind;
    std::string dtype;
    nlohmann::json meta;
    std::vector<CheckpointTensor> tensors;
};

void write_checkpoint_file(const CheckpointFile& file, const std::filesystem::path& path);
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

template <typename Scalar>
constexpr const char* dtype_name()
{
    static_assert(std::is_same_v<Scalar, float> || std::is_same_v<Scalar, double>);
    return std::is_same_v<Scalar, float> ? "float32" : "float64";
}

template <typename Scalar>
CheckpointFile pack_parameters(std::string kind, nlohmann::json meta, const std::vector<Parameter<Scalar>*>& params)
{
    CheckpointFile file{std::move(kind), dtype_name<Scalar>(), std::move(meta), {}};
    for (const auto* p : params) {
        CheckpointTensor t{p->name, p->value.rows(), p->value.cols(), {}};
        t.bytes.resize(static_cast<std::size_t>(p->value.size()) * sizeof(Scalar));
        std::memcpy(t.bytes.data(), p->value.data(), t.bytes.size());
        file.tensors.push_back(std::move(t));
    }
    return file;
}

// Copies tensors into `params`, which must match the file in count, order,
// names and shapes; anything else is a ConfigError.
template <typename Scalar>
void unpack_parameters(const CheckpointFile& file, const std::vector<Parameter<Scalar>*>& params)
{
    if (file.dtype != dtype_name<Scalar>())
        throw ConfigError("checkpoint dtype " + file.dtype + " does not match model dtype " + dtype_name<Scalar>());
    if (file.tensors.size() != params.size())
        throw ConfigError("checkpoint holds " + std::to_string(file.tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = file.tensors[i];
        auto& p = *params[i];
        if (t.name != p.name || t.rows != p.value.rows() || t.cols != p.value.cols())
            throw ConfigError("checkpoint tensor " + t.name + " does not match model parameter " + p.name);
        std::memcpy(p.value.data(), t.bytes.data(), t.bytes.size());
    }
}

} // namespace maskcycle::nn
