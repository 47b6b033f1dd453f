#include "hat/encoders.hpp"

#include <cmath>

#include "hat/rng.hpp"

namespace hat {

namespace {

constexpr Real kLnEps = 1e-5;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

void check_taps(const std::vector<int>& taps, int lo, int hi, const std::string& what) {
  require(!taps.empty(), what + " must not be empty");
  int prev = lo - 1;
  for (int t : taps) {
    require(t > prev, what + " must be strictly increasing");
    require(t >= lo && t <= hi,
            what + " entry " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                std::to_string(hi) + "]");
    prev = t;
  }
}

enum class Init { Weight, Embed, Zero, One };

// Declares the parameter skeleton once; values come either from the seed or
// from a loaded store that must match name-for-name.
struct Builder {
  ParamStore store;
  Rng* rng = nullptr;
  const ParamStore* loaded = nullptr;

  void add(const std::string& name, int rows, int cols, ParamGroup group, Init init) {
    if (loaded) {
      const int i = loaded->index_of(name);
      if (i < 0) throw InputError("checkpoint is missing parameter " + name);
      const ParamEntry& e = loaded->entry(i);
      if (e.value.rows() != rows || e.value.cols() != cols)
        throw InputError("checkpoint parameter " + name + " has shape " + e.value.shape_str() +
                         ", model expects " + std::to_string(rows) + "x" + std::to_string(cols));
      if (e.group != group) throw InputError("checkpoint parameter " + name + " has the wrong group");
      store.add(name, e.value, group);
      return;
    }
    Mat m(rows, cols);
    switch (init) {
      case Init::Weight: {
        const Real bound = 1.0 / std::sqrt(static_cast<Real>(rows));
        m = rng->uniform_mat(rows, cols, -bound, bound);
        break;
      }
      case Init::Embed: {
        const Real bound = 1.0 / std::sqrt(static_cast<Real>(cols));
        m = rng->uniform_mat(rows, cols, -bound, bound);
        break;
      }
      case Init::Zero:
        break;
      case Init::One:
        m = Mat::full(rows, cols, 1.0);
        break;
    }
    store.add(name, std::move(m), group);
  }

  void add_block(const std::string& prefix, int dim, ParamGroup g) {
    add(prefix + "attn.wq", dim, dim, g, Init::Weight);
    add(prefix + "attn.bq", 1, dim, g, Init::Zero);
    add(prefix + "attn.wk", dim, dim, g, Init::Weight);
    add(prefix + "attn.bk", 1, dim, g, Init::Zero);
    add(prefix + "attn.wv", dim, dim, g, Init::Weight);
    add(prefix + "attn.bv", 1, dim, g, Init::Zero);
    add(prefix + "attn.wo", dim, dim, g, Init::Weight);
    add(prefix + "attn.bo", 1, dim, g, Init::Zero);
    add(prefix + "ln1.g", 1, dim, g, Init::One);
    add(prefix + "ln1.b", 1, dim, g, Init::Zero);
    add(prefix + "mlp.w1", dim, 4 * dim, g, Init::Weight);
    add(prefix + "mlp.b1", 1, 4 * dim, g, Init::Zero);
    add(prefix + "mlp.w2", 4 * dim, dim, g, Init::Weight);
    add(prefix + "mlp.b2", 1, dim, g, Init::Zero);
    add(prefix + "ln2.g", 1, dim, g, Init::One);
    add(prefix + "ln2.b", 1, dim, g, Init::Zero);
  }
};

Var mha(Tape& t, const Model::Bound& b, const std::string& p, Var x, int heads) {
  const Var q = t.add_row(t.matmul(x, b[p + "wq"]), b[p + "bq"]);
  const Var k = t.add_row(t.matmul(x, b[p + "wk"]), b[p + "bk"]);
  const Var v = t.add_row(t.matmul(x, b[p + "wv"]), b[p + "bv"]);
  const int dim = t.val(x).cols();
  const int hd = dim / heads;
  const Real scale = 1.0 / std::sqrt(static_cast<Real>(hd));
  std::vector<Var> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = t.slice_cols(q, h * hd, hd);
    const Var kh = t.slice_cols(k, h * hd, hd);
    const Var vh = t.slice_cols(v, h * hd, hd);
    const Var att = t.softmax_rows(t.matmul_nt(qh, kh), scale);
    outs.push_back(t.matmul(att, vh));
  }
  const Var cat = heads == 1 ? outs[0] : t.concat_cols(outs);
  return t.add_row(t.matmul(cat, b[p + "wo"]), b[p + "bo"]);
}

// Post-norm transformer block: x = LN(x + attention); x = LN(x + MLP).
Var transformer_block(Tape& t, const Model::Bound& b, const std::string& p, Var x, int heads) {
  const Var h = mha(t, b, p + "attn.", x, heads);
  x = t.layer_norm_rows(t.add(x, h), b[p + "ln1.g"], b[p + "ln1.b"], kLnEps);
  const Var inner = t.gelu(t.add_row(t.matmul(x, b[p + "mlp.w1"]), b[p + "mlp.b1"]));
  const Var m = t.add_row(t.matmul(inner, b[p + "mlp.w2"]), b[p + "mlp.b2"]);
  return t.layer_norm_rows(t.add(x, m), b[p + "ln2.g"], b[p + "ln2.b"], kLnEps);
}

}  // namespace

void TextEncoderConfig::validate() const {
  require(vocab_size >= 1, "text vocab_size must be at least 1, got " + std::to_string(vocab_size));
  require(model_dim >= 1, "text model_dim must be positive");
  require(num_heads >= 1, "text num_heads must be positive");
  require(model_dim % num_heads == 0, "text model_dim " + std::to_string(model_dim) +
                                          " not divisible by num_heads " +
                                          std::to_string(num_heads));
  require(num_layers >= 1, "text num_layers must be positive");
  require(max_len >= 1, "text max_len must be positive");
  check_taps(tap_layers, 1, num_layers, "text tap_layers");
}

void ImageEncoderConfig::validate() const {
  require(patch_dim >= 1, "image patch_dim must be positive");
  require(!stage_dims.empty(), "image stage_dims must not be empty");
  for (int d : stage_dims) require(d >= 1, "image stage dims must be positive");
  require(blocks_per_stage.size() == stage_dims.size(),
          "image blocks_per_stage length " + std::to_string(blocks_per_stage.size()) +
              " does not match " + std::to_string(stage_dims.size()) + " stages");
  for (int b : blocks_per_stage) require(b >= 1, "image blocks per stage must be positive");
  require(num_stages() >= 2, "image encoder needs at least 2 stages (stage 1 is never tapped)");
  const int down = 1 << (num_stages() - 1);
  require(grid_side >= 2 && grid_side % down == 0,
          "image grid_side " + std::to_string(grid_side) + " not divisible by " +
              std::to_string(down) + " across " + std::to_string(num_stages()) + " stages");
  check_taps(tap_stages, 2, num_stages(), "image tap_stages");
}

int ImageEncoderConfig::side_at_stage(int stage) const { return grid_side >> (stage - 1); }

int ImageEncoderConfig::tokens_at_stage(int stage) const {
  const int s = side_at_stage(stage);
  return s * s;
}

int ImageEncoderConfig::heads_at_stage(int stage) const {
  const int dim = stage_dims[static_cast<size_t>(stage - 1)];
  if (dim % 4 == 0) return 4;
  if (dim % 2 == 0) return 2;
  return 1;
}

namespace {

ParamStore build_params(const TextEncoderConfig& text, const ImageEncoderConfig& image,
                        int align_dim, Rng* rng, const ParamStore* loaded) {
  Builder b;
  b.rng = rng;
  b.loaded = loaded;
  const auto E = ParamGroup::Encoder;
  const auto A = ParamGroup::Alignment;

  const int d = text.model_dim;
  b.add("txt.tok", text.vocab_size, d, E, Init::Embed);
  if (text.kind == TextEncoderConfig::Kind::Transformer) {
    b.add("txt.pos", text.max_len, d, E, Init::Embed);
    b.add("txt.seg", 1, d, E, Init::Embed);
    b.add("txt.emb_ln.g", 1, d, E, Init::One);
    b.add("txt.emb_ln.b", 1, d, E, Init::Zero);
    for (int l = 1; l <= text.num_layers; ++l)
      b.add_block("txt.l" + std::to_string(l) + ".", d, E);
  } else {
    for (const char* gate : {"z", "r", "h"}) {
      b.add(std::string("txt.gru.w") + gate, d, d, E, Init::Weight);
      b.add(std::string("txt.gru.u") + gate, d, d, E, Init::Weight);
      b.add(std::string("txt.gru.b") + gate, 1, d, E, Init::Zero);
    }
  }

  b.add("img.patch.w", image.patch_dim, image.stage_dims[0], E, Init::Weight);
  b.add("img.patch.b", 1, image.stage_dims[0], E, Init::Zero);
  b.add("img.pos", image.tokens_at_stage(1), image.stage_dims[0], E, Init::Embed);
  for (int s = 1; s <= image.num_stages(); ++s) {
    const int dim = image.stage_dims[static_cast<size_t>(s - 1)];
    for (int k = 1; k <= image.blocks_per_stage[static_cast<size_t>(s - 1)]; ++k)
      b.add_block("img.s" + std::to_string(s) + ".b" + std::to_string(k) + ".", dim, E);
    if (s < image.num_stages()) {
      const int next = image.stage_dims[static_cast<size_t>(s)];
      b.add("img.m" + std::to_string(s) + ".w", 4 * dim, next, E, Init::Weight);
      b.add("img.m" + std::to_string(s) + ".b", 1, next, E, Init::Zero);
    }
  }

  for (size_t j = 0; j < image.tap_stages.size(); ++j) {
    const int raw = image.stage_dims[static_cast<size_t>(image.tap_stages[j] - 1)];
    b.add("proj.img." + std::to_string(j) + ".w", raw, align_dim, A, Init::Weight);
    b.add("proj.img." + std::to_string(j) + ".b", 1, align_dim, A, Init::Zero);
    b.add("proj.txt." + std::to_string(j) + ".w", d, align_dim, A, Init::Weight);
    b.add("proj.txt." + std::to_string(j) + ".b", 1, align_dim, A, Init::Zero);
  }

  if (loaded && loaded->size() != b.store.size())
    throw InputError("checkpoint has " + std::to_string(loaded->size()) +
                     " parameters, model expects " + std::to_string(b.store.size()));
  return std::move(b.store);
}

}  // namespace

Model::Model(TextEncoderConfig text, ImageEncoderConfig image, int align_dim, uint64_t seed)
    : text_(std::move(text)), image_(std::move(image)), align_dim_(align_dim) {
  text_.validate();
  image_.validate();
  require(align_dim_ >= 1, "align_dim must be positive");
  require(text_.tap_layers.size() == image_.tap_stages.size(),
          "text taps " + std::to_string(text_.tap_layers.size()) + " vs image taps " +
              std::to_string(image_.tap_stages.size()) + ": level counts must match");
  Rng rng(seed);
  params_ = build_params(text_, image_, align_dim_, &rng, nullptr);
}

Model::Model(TextEncoderConfig text, ImageEncoderConfig image, int align_dim,
             const ParamStore& loaded)
    : text_(std::move(text)), image_(std::move(image)), align_dim_(align_dim) {
  text_.validate();
  image_.validate();
  require(align_dim_ >= 1, "align_dim must be positive");
  require(text_.tap_layers.size() == image_.tap_stages.size(),
          "text taps " + std::to_string(text_.tap_layers.size()) + " vs image taps " +
              std::to_string(image_.tap_stages.size()) + ": level counts must match");
  params_ = build_params(text_, image_, align_dim_, nullptr, &loaded);
}

Var Model::Bound::operator[](const std::string& name) const {
  const int i = model->params().index_of(name);
  if (i < 0) throw InputError("unknown parameter " + name);
  return vars[static_cast<size_t>(i)];
}

Model::Bound Model::bind(Tape& tape, bool train_encoders, bool train_alignment) const {
  Bound b;
  b.model = this;
  b.tape = &tape;
  b.vars = params_.bind(tape, train_encoders, train_alignment);
  return b;
}

std::vector<Var> Model::tap_transformer_text(Bound& b, const std::vector<int>& tokens) const {
  Tape& t = *b.tape;
  const int n = static_cast<int>(tokens.size());
  std::vector<int> positions(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) positions[static_cast<size_t>(i)] = i;
  Var x = t.add(t.embedding_rows(b["txt.tok"], tokens), t.embedding_rows(b["txt.pos"], positions));
  x = t.add_row(x, b["txt.seg"]);
  x = t.layer_norm_rows(x, b["txt.emb_ln.g"], b["txt.emb_ln.b"], kLnEps);
  std::vector<Var> taps;
  taps.reserve(text_.tap_layers.size());
  size_t next_tap = 0;
  for (int l = 1; l <= text_.num_layers; ++l) {
    x = transformer_block(t, b, "txt.l" + std::to_string(l) + ".", x, text_.num_heads);
    if (next_tap < text_.tap_layers.size() && text_.tap_layers[next_tap] == l) {
      taps.push_back(x);
      ++next_tap;
    }
  }
  return taps;
}

std::vector<Var> Model::tap_recurrent_text(Bound& b, const std::vector<int>& tokens) const {
  Tape& t = *b.tape;
  const int d = text_.model_dim;
  Var h = t.constant(Mat(1, d));
  std::vector<Var> states;
  states.reserve(tokens.size());
  for (int id : tokens) {
    const Var x = t.embedding_rows(b["txt.tok"], {id});
    const Var z = t.sigmoid(t.add_row(
        t.add(t.matmul(x, b["txt.gru.wz"]), t.matmul(h, b["txt.gru.uz"])), b["txt.gru.bz"]));
    const Var r = t.sigmoid(t.add_row(
        t.add(t.matmul(x, b["txt.gru.wr"]), t.matmul(h, b["txt.gru.ur"])), b["txt.gru.br"]));
    const Var cand = t.tanh(t.add_row(
        t.add(t.matmul(x, b["txt.gru.wh"]), t.matmul(t.mul(r, h), b["txt.gru.uh"])),
        b["txt.gru.bh"]));
    // h = (1-z)*h + z*cand
    h = t.add(t.mul(t.affine(z, -1.0, 1.0), h), t.mul(z, cand));
    states.push_back(h);
  }
  const Var all = states.size() == 1 ? states[0] : t.concat_rows(states);
  // One recurrent pass has no depth hierarchy; every level reads the same
  // final-layer token states and only the projections differ.
  return std::vector<Var>(text_.tap_layers.size(), all);
}

std::vector<Var> Model::encode_text(Bound& b, const std::vector<int>& tokens) const {
  if (b.model != this) throw InputError("bound parameters belong to a different model");
  if (tokens.empty()) throw InputError("empty token sequence");
  if (static_cast<int>(tokens.size()) > text_.max_len)
    throw InputError("token sequence length " + std::to_string(tokens.size()) + " exceeds max_len " +
                     std::to_string(text_.max_len));
  for (int id : tokens)
    if (id < 0 || id >= text_.vocab_size)
      throw InputError("token id " + std::to_string(id) + " out of vocabulary [0, " +
                       std::to_string(text_.vocab_size) + ")");
  Tape& t = *b.tape;
  const std::vector<Var> raw = text_.kind == TextEncoderConfig::Kind::Transformer
                                   ? tap_transformer_text(b, tokens)
                                   : tap_recurrent_text(b, tokens);
  std::vector<Var> out;
  out.reserve(raw.size());
  for (size_t j = 0; j < raw.size(); ++j) {
    const std::string p = "proj.txt." + std::to_string(j);
    out.push_back(t.add_row(t.matmul(raw[j], b[p + ".w"]), b[p + ".b"]));
  }
  return out;
}

std::vector<Var> Model::encode_image(Bound& b, const Mat& grid) const {
  if (b.model != this) throw InputError("bound parameters belong to a different model");
  const int tokens = image_.tokens_at_stage(1);
  if (grid.rows() != tokens || grid.cols() != image_.patch_dim)
    throw InputError("patch grid is " + grid.shape_str() + ", config expects " +
                     std::to_string(tokens) + "x" + std::to_string(image_.patch_dim));
  Tape& t = *b.tape;
  Var x = t.add(t.add_row(t.matmul(t.constant(grid), b["img.patch.w"]), b["img.patch.b"]),
                b["img.pos"]);
  std::vector<Var> raw(image_.tap_stages.size());
  int side = image_.grid_side;
  for (int s = 1; s <= image_.num_stages(); ++s) {
    for (int k = 1; k <= image_.blocks_per_stage[static_cast<size_t>(s - 1)]; ++k)
      x = transformer_block(t, b, "img.s" + std::to_string(s) + ".b" + std::to_string(k) + ".", x,
                            image_.heads_at_stage(s));
    for (size_t j = 0; j < image_.tap_stages.size(); ++j)
      if (image_.tap_stages[j] == s) raw[j] = x;
    if (s < image_.num_stages()) {
      const std::string m = "img.m" + std::to_string(s);
      x = t.add_row(t.matmul(t.merge_2x2(x, side / 2, side / 2), b[m + ".w"]), b[m + ".b"]);
      side /= 2;
    }
  }
  std::vector<Var> out;
  out.reserve(raw.size());
  for (size_t j = 0; j < raw.size(); ++j) {
    const std::string p = "proj.img." + std::to_string(j);
    out.push_back(t.add_row(t.matmul(raw[j], b[p + ".w"]), b[p + ".b"]));
  }
  return out;
}

LevelledFeatures Model::encode_text(const std::vector<int>& tokens) const {
  Tape t(Tape::Mode::NoGrad);
  Bound b = bind(t, false, false);
  LevelledFeatures out;
  for (Var v : encode_text(b, tokens)) out.push_back(t.val(v));
  return out;
}

LevelledFeatures Model::encode_image(const Mat& grid) const {
  Tape t(Tape::Mode::NoGrad);
  Bound b = bind(t, false, false);
  LevelledFeatures out;
  for (Var v : encode_image(b, grid)) out.push_back(t.val(v));
  return out;
}

}  // namespace hat
