#include "cfvqa/archive.hpp"

#include "cfvqa/errors.hpp"
#include "cfvqa/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <sstream>

namespace cfvqa::tensor {

namespace {

void append_le(std::string &out, float value) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>(bits & 0xffu));
        bits >>= 8;
    }
}

float read_le(std::string_view bytes, std::size_t offset) {
    std::uint32_t bits = 0;
    for (int i = 3; i >= 0; --i) {
        bits = (bits << 8) | static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)]);
    }
    return std::bit_cast<float>(bits);
}

std::string encode_shape(const Shape &shape) {
    if (shape.empty()) {
        return "scalar";
    }
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) {
            s += 'x';
        }
        s += std::to_string(shape[i]);
    }
    return s;
}

Shape decode_shape(const std::string &token) {
    if (token == "scalar") {
        return {};
    }
    Shape shape;
    std::istringstream in(token);
    std::string part;
    while (std::getline(in, part, 'x')) {
        try {
            std::size_t used = 0;
            const unsigned long d = std::stoul(part, &used);
            if (used != part.size() || d == 0) {
                throw ValidationError("");
            }
            shape.push_back(d);
        } catch (const std::exception &) {
            throw ValidationError("bad shape token in checkpoint manifest: " + token);
        }
    }
    return shape;
}

}  // namespace

const std::string &Archive::meta_value(const std::string &key) const {
    for (const auto &[k, v] : meta) {
        if (k == key) {
            return v;
        }
    }
    throw ValidationError("checkpoint metadata has no key " + key);
}

std::string encode_manifest(const Archive &archive) {
    std::size_t total = 0;
    for (const auto &t : archive.tensors) {
        total += 4 * t.value.numel();
    }
    std::ostringstream out;
    out << kCheckpointMagic << '\n';
    out << "payload " << kPayloadFile << ' ' << total << '\n';
    for (const auto &[key, value] : archive.meta) {
        if (key.find_first_of(" \n") != std::string::npos || value.find('\n') != std::string::npos) {
            throw ValidationError("checkpoint metadata must be single-line with a space-free key: " + key);
        }
        out << "meta " << key << ' ' << value << '\n';
    }
    std::size_t offset = 0;
    for (const auto &t : archive.tensors) {
        out << "tensor " << t.name << ' ' << encode_shape(t.value.shape()) << ' ' << offset << '\n';
        offset += 4 * t.value.numel();
    }
    return out.str();
}

std::string encode_payload(const Archive &archive) {
    std::string out;
    for (const auto &t : archive.tensors) {
        for (const float v : t.value.data()) {
            append_le(out, v);
        }
    }
    return out;
}

Archive decode_archive(std::string_view manifest, std::string_view payload) {
    std::istringstream in{std::string(manifest)};
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic) {
        throw ValidationError("not a checkpoint manifest (expected magic " + std::string(kCheckpointMagic) + ")");
    }
    Archive archive;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream fields(line);
        std::string kind;
        fields >> kind;
        if (kind == "payload") {
            std::string file;
            std::size_t bytes = 0;
            fields >> file >> bytes;
            if (bytes != payload.size()) {
                throw ValidationError("checkpoint payload is " + std::to_string(payload.size()) +
                                      " bytes, manifest says " + std::to_string(bytes));
            }
        } else if (kind == "meta") {
            std::string key;
            fields >> key;
            std::string value;
            std::getline(fields, value);
            if (!value.empty() && value.front() == ' ') {
                value.erase(0, 1);
            }
            archive.meta.emplace_back(key, value);
        } else if (kind == "tensor") {
            std::string name;
            std::string shape_token;
            std::size_t offset = 0;
            if (!(fields >> name >> shape_token >> offset)) {
                throw ValidationError("malformed tensor line in checkpoint manifest: " + line);
            }
            Shape shape = decode_shape(shape_token);
            const std::size_t n = shape_numel(shape);
            if (offset + 4 * n > payload.size()) {
                throw ValidationError("tensor " + name + " runs past the end of the payload");
            }
            std::vector<float> values(n);
            for (std::size_t i = 0; i < n; ++i) {
                values[i] = read_le(payload, offset + 4 * i);
            }
            archive.tensors.push_back({name, Tensor::from(std::move(shape), std::move(values))});
        } else {
            throw ValidationError("unknown checkpoint manifest line: " + line);
        }
    }
    return archive;
}

void save_archive(const std::filesystem::path &dir, const Archive &archive) {
    io::write_file_atomic(dir / kPayloadFile, encode_payload(archive));
    io::write_file_atomic(dir / kManifestFile, encode_manifest(archive));
}

Archive load_archive(const std::filesystem::path &dir) {
    return decode_archive(io::read_file(dir / kManifestFile), io::read_file(dir / kPayloadFile));
}

}  // namespace cfvqa::tensor
