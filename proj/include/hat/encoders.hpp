#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hat/features_io.hpp"
#include "hat/params.hpp"
#include "hat/tape.hpp"

namespace hat {

struct TextEncoderConfig {
  enum class Kind { Transformer, Recurrent };

  int vocab_size = 0;  // set from the corpus
  int model_dim = 64;
  int num_layers = 12;
  int num_heads = 4;
  int max_len = 32;
  std::vector<int> tap_layers = {4, 10, 12};  // 1-based
  Kind kind = Kind::Transformer;

  void validate() const;
};

struct ImageEncoderConfig {
  int grid_side = 16;  // initial token grid is grid_side x grid_side
  int patch_dim = 48;  // values per input patch token
  std::vector<int> stage_dims = {32, 64, 128, 256};
  std::vector<int> blocks_per_stage = {1, 1, 1, 1};
  std::vector<int> tap_stages = {2, 3, 4};  // 1-based; stage 1 output is discarded

  void validate() const;
  int num_stages() const { return static_cast<int>(stage_dims.size()); }
  // Grid side length at a stage's output (1-based stage index).
  int side_at_stage(int stage) const;
  int tokens_at_stage(int stage) const;
  // Self-attention heads per stage: the largest of 4, 2, 1 dividing the dim.
  int heads_at_stage(int stage) const;
};

// Two-stream model: text encoder, image encoder, and one affine projection
// per (modality, level) mapping raw features into the shared alignment space.
// Projections belong to ParamGroup::Alignment; everything else is Encoder.
class Model {
public:
  // Fresh model with fan-in-scaled uniform init drawn from the seed.
  Model(TextEncoderConfig text, ImageEncoderConfig image, int align_dim, uint64_t seed);
  // Same skeleton, values taken from a loaded store. Names, shapes, and
  // groups must match the configuration exactly.
  Model(TextEncoderConfig text, ImageEncoderConfig image, int align_dim, const ParamStore& loaded);

  const TextEncoderConfig& text_config() const { return text_; }
  const ImageEncoderConfig& image_config() const { return image_; }
  int align_dim() const { return align_dim_; }
  int num_levels() const { return static_cast<int>(image_.tap_stages.size()); }

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Leaves for one forward/backward pass. Encoder freezing is expressed by
  // binding with train_encoders=false.
  struct Bound {
    const Model* model = nullptr;
    Tape* tape = nullptr;
    std::vector<Var> vars;

    Var operator[](const std::string& name) const;
  };
  Bound bind(Tape& tape, bool train_encoders, bool train_alignment) const;

  // Projected per-level features (tokens x align_dim per level).
  std::vector<Var> encode_text(Bound& bound, const std::vector<int>& tokens) const;
  std::vector<Var> encode_image(Bound& bound, const Mat& grid) const;

  // NoGrad convenience paths; arithmetic identical to the tape paths.
  LevelledFeatures encode_text(const std::vector<int>& tokens) const;
  LevelledFeatures encode_image(const Mat& grid) const;

private:
  std::vector<Var> tap_transformer_text(Bound& b, const std::vector<int>& tokens) const;
  std::vector<Var> tap_recurrent_text(Bound& b, const std::vector<int>& tokens) const;

  TextEncoderConfig text_;
  ImageEncoderConfig image_;
  int align_dim_;
  ParamStore params_;
};

}  // namespace hat
