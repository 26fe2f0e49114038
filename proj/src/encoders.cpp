#include "cfvqa/encoders.hpp"

#include "cfvqa/errors.hpp"
#include "cfvqa/io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace cfvqa::model {

using tensor::ParameterList;
using tensor::Shape;

Tensor init_uniform(Rng &rng, Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<float> data(tensor::shape_numel(shape));
    for (auto &x : data) {
        x = static_cast<float>(rng.uniform(-bound, bound));
    }
    return Tensor::from(std::move(shape), std::move(data), true);
}

EncoderParams init_encoder(const Dims &d, Rng &rng) {
    EncoderParams p;
    p.embedding = init_uniform(rng, {d.vocab, d.embed}, 1);
    p.question_w = init_uniform(rng, {d.embed, d.question}, d.embed);
    p.question_b = init_uniform(rng, {d.question}, d.embed);
    p.image_w = init_uniform(rng, {d.image_in, d.image}, d.image_in);
    p.image_b = init_uniform(rng, {d.image}, d.image_in);
    p.fusion_w = init_uniform(rng, {d.question + d.image, d.knowledge}, d.question + d.image);
    p.fusion_b = init_uniform(rng, {d.knowledge}, d.question + d.image);
    return p;
}

void register_encoder(ParameterList &list, const EncoderParams &p) {
    list.add("encoder.embedding", p.embedding);
    list.add("encoder.question_w", p.question_w);
    list.add("encoder.question_b", p.question_b);
    list.add("encoder.image_w", p.image_w);
    list.add("encoder.image_b", p.image_b);
    list.add("encoder.fusion_w", p.fusion_w);
    list.add("encoder.fusion_b", p.fusion_b);
}

EncoderParams encoder_from(const ParameterList &list) {
    return {list.at("encoder.embedding"), list.at("encoder.question_w"), list.at("encoder.question_b"),
            list.at("encoder.image_w"),   list.at("encoder.image_b"),    list.at("encoder.fusion_w"),
            list.at("encoder.fusion_b")};
}

Tensor encode_question(const std::vector<std::size_t> &tokens, const EncoderParams &p) {
    if (tokens.empty()) {
        throw ValidationError("encode_question: empty token list");
    }
    const Tensor e = tensor::embedding_bag_mean(p.embedding, tokens);
    return tensor::relu(tensor::matmul(e, p.question_w) + p.question_b);
}

Tensor encode_image(const std::vector<float> &input, const EncoderParams &p) {
    const std::size_t expected = p.image_w.shape()[0];
    if (input.size() != expected) {
        throw InputError("image input has " + std::to_string(input.size()) + " values, model expects " +
                         std::to_string(expected));
    }
    const Tensor x = Tensor::vector(input);
    return tensor::relu(tensor::matmul(x, p.image_w) + p.image_b);
}

Tensor fuse(const Tensor &q, const Tensor &v, const EncoderParams &p) {
    return tensor::relu(tensor::matmul(tensor::concat(q, v), p.fusion_w) + p.fusion_b);
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::string_view bytes, std::size_t &pos) {
    for (;;) {
        while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (pos < bytes.size() && bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
}

std::size_t pgm_number(std::string_view bytes, std::size_t &pos, const char *what) {
    const std::string t = pgm_token(bytes, pos);
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) {
        throw ValidationError(std::string("PGM: bad ") + what + " '" + t + "'");
    }
    return std::stoul(t);
}

}  // namespace

GrayImage parse_pgm(std::string_view bytes) {
    std::size_t pos = 0;
    if (pgm_token(bytes, pos) != "P5") {
        throw ValidationError("PGM: expected binary P5 header");
    }
    GrayImage img;
    img.width = pgm_number(bytes, pos, "width");
    img.height = pgm_number(bytes, pos, "height");
    const std::size_t maxval = pgm_number(bytes, pos, "maxval");
    if (img.width == 0 || img.height == 0 || maxval == 0 || maxval > 65535) {
        throw ValidationError("PGM: invalid dimensions or maxval");
    }
    ++pos;  // single whitespace byte before the raster
    const std::size_t bpp = maxval < 256 ? 1 : 2;
    const std::size_t n = img.width * img.height;
    if (bytes.size() < pos + n * bpp) {
        throw ValidationError("PGM: truncated raster");
    }
    img.pixels.resize(n);
    const auto *raw = reinterpret_cast<const unsigned char *>(bytes.data() + pos);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t v = bpp == 1 ? raw[i] : (static_cast<std::size_t>(raw[2 * i]) << 8 | raw[2 * i + 1]);
        img.pixels[i] = static_cast<float>(std::min<double>(1.0, static_cast<double>(v) / maxval));
    }
    return img;
}

GrayImage read_pgm(const std::filesystem::path &path) { return parse_pgm(io::read_file(path)); }

std::vector<float> downscale_area(const GrayImage &img, std::size_t side) {
    // Each output cell averages the source area it covers, with fractional
    // weights for partially covered source pixels.
    auto weights = [side](std::size_t src, std::size_t cell) {
        const double lo = static_cast<double>(cell) * src / side;
        const double hi = static_cast<double>(cell + 1) * src / side;
        std::vector<std::pair<std::size_t, double>> w;
        for (auto i = static_cast<std::size_t>(lo); i < src && static_cast<double>(i) < hi; ++i) {
            const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
            if (overlap > 0) w.emplace_back(i, overlap);
        }
        return w;
    };
    std::vector<float> out(side * side);
    for (std::size_t r = 0; r < side; ++r) {
        const auto wr = weights(img.height, r);
        for (std::size_t c = 0; c < side; ++c) {
            const auto wc = weights(img.width, c);
            double acc = 0.0, area = 0.0;
            for (const auto &[y, a] : wr) {
                for (const auto &[x, b] : wc) {
                    acc += a * b * img.pixels[y * img.width + x];
                    area += a * b;
                }
            }
            out[r * side + c] = static_cast<float>(acc / area);
        }
    }
    return out;
}

ImageSource ImageSource::from_features(const std::filesystem::path &path) {
    return from_feature_text(io::read_file(path));
}

ImageSource ImageSource::from_feature_text(std::string_view text) {
    ImageSource src;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            src.add_feature(j.at("image_ref").get<std::string>(), j.at("vector").get<std::vector<float>>());
        } catch (const nlohmann::json::exception &e) {
            throw ValidationError("feature file line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return src;
}

ImageSource ImageSource::from_pgm_root(std::filesystem::path root) {
    ImageSource src;
    src.set_pgm_root(std::move(root));
    return src;
}

void ImageSource::add_feature(const std::string &image_ref, std::vector<float> vector) {
    if (vector.empty()) {
        throw ValidationError("empty feature vector for " + image_ref);
    }
    if (feature_dim_ && *feature_dim_ != vector.size()) {
        throw ValidationError("feature vector for " + image_ref + " has length " + std::to_string(vector.size()) +
                              ", expected " + std::to_string(*feature_dim_));
    }
    for (const float x : vector) {
        if (!std::isfinite(x)) throw ValidationError("non-finite feature value for " + image_ref);
    }
    feature_dim_ = vector.size();
    features_[image_ref] = std::move(vector);
}

std::vector<float> ImageSource::load(const std::string &image_ref) const {
    if (const auto it = features_.find(image_ref); it != features_.end()) {
        return it->second;
    }
    if (!feature_dim_ && pgm_root_) {
        const auto path = *pgm_root_ / image_ref;
        if (std::filesystem::is_regular_file(path)) {
            try {
                return downscale_area(read_pgm(path));
            } catch (const ValidationError &e) {
                throw InputError("image " + image_ref + ": " + e.what());
            }
        }
    }
    throw InputError("no image file or feature vector for image_ref '" + image_ref + "'");
}

}  // namespace cfvqa::model
