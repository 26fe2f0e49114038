#pragma once

#include "cfvqa/optim.hpp"
#include "cfvqa/rng.hpp"
#include "cfvqa/tensor.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace cfvqa::model {

using tensor::Tensor;

inline constexpr std::size_t kImageSide = 32;

struct Dims {
    std::size_t vocab = 1;          // question vocabulary size, including <unk>
    std::size_t embed = 64;         // d_e
    std::size_t question = 128;     // d_q
    std::size_t image_in = kImageSide * kImageSide;
    std::size_t image = 128;        // d_v
    std::size_t knowledge = 128;    // d_k
    std::size_t answers = 1;        // |A|, including <unk>

    bool operator==(const Dims &) const = default;
};

struct EncoderParams {
    Tensor embedding;   // [vocab x embed]
    Tensor question_w;  // [embed x question]
    Tensor question_b;  // [question]
    Tensor image_w;     // [image_in x image]
    Tensor image_b;     // [image]
    Tensor fusion_w;    // [(question + image) x knowledge]
    Tensor fusion_b;    // [knowledge]
};

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for layers; the embedding
// table has fan-in 1.
Tensor init_uniform(Rng &rng, tensor::Shape shape, std::size_t fan_in);
EncoderParams init_encoder(const Dims &dims, Rng &rng);
void register_encoder(tensor::ParameterList &list, const EncoderParams &p);
EncoderParams encoder_from(const tensor::ParameterList &list);

// Mean token embedding, then one relu layer. Unknown tokens are index 0.
Tensor encode_question(const std::vector<std::size_t> &tokens, const EncoderParams &p);
// Flattened pixels in [0,1] or a feature vector, then one relu layer.
Tensor encode_image(const std::vector<float> &input, const EncoderParams &p);
// concat(q, v), then one relu layer.
Tensor fuse(const Tensor &q, const Tensor &v, const EncoderParams &p);

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> pixels;  // row-major, [0,1]
};

// Binary PGM (P5), 8 or 16 bit.
GrayImage read_pgm(const std::filesystem::path &path);
GrayImage parse_pgm(std::string_view bytes);
// Area-average resampling to side x side.
std::vector<float> downscale_area(const GrayImage &image, std::size_t side = kImageSide);

// Resolves image_ref to model input: a precomputed feature vector when one
// is registered, otherwise <pgm_root>/<image_ref> read as PGM.
class ImageSource {
  public:
    ImageSource() = default;

    // JSONL lines {"image_ref": ..., "vector": [...]}; all vectors must share
    // one length.
    static ImageSource from_features(const std::filesystem::path &path);
    static ImageSource from_feature_text(std::string_view text);
    static ImageSource from_pgm_root(std::filesystem::path root);

    void add_feature(const std::string &image_ref, std::vector<float> vector);
    void set_pgm_root(std::filesystem::path root) { pgm_root_ = std::move(root); }

    bool uses_features() const { return feature_dim_.has_value(); }
    // Length of every vector returned by load().
    std::size_t input_dim() const { return feature_dim_.value_or(kImageSide * kImageSide); }
    std::vector<float> load(const std::string &image_ref) const;

  private:
    std::unordered_map<std::string, std::vector<float>> features_;
    std::optional<std::size_t> feature_dim_;
    std::optional<std::filesystem::path> pgm_root_;
};

}  // namespace cfvqa::model
