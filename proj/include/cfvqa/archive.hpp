#pragma once

#include "cfvqa/optim.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cfvqa::tensor {

inline constexpr std::string_view kCheckpointMagic = "CFVQA-CKPT-1";
inline constexpr std::string_view kManifestFile = "manifest.txt";
inline constexpr std::string_view kPayloadFile = "payload.bin";

// Named tensors plus free-form metadata. On disk this is a text manifest
//
//   CFVQA-CKPT-1
//   payload payload.bin <total bytes>
//   meta <key> <value>
//   tensor <name> <d0>x<d1>... <byte offset>
//
// next to a payload of little-endian float32 values, row-major, in manifest
// order. Rank-0 tensors are written with the shape token "scalar".
struct Archive {
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<NamedParameter> tensors;

    const std::string &meta_value(const std::string &key) const;
};

std::string encode_manifest(const Archive &archive);
std::string encode_payload(const Archive &archive);
Archive decode_archive(std::string_view manifest, std::string_view payload);

void save_archive(const std::filesystem::path &dir, const Archive &archive);
Archive load_archive(const std::filesystem::path &dir);

}  // namespace cfvqa::tensor
