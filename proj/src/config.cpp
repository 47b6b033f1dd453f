#include "hat/config.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <sstream>

#include "hat/errors.hpp"
#include "hat/io_util.hpp"

namespace hat {

namespace {

int checked_int(const std::string& v, const std::string& src) {
  const long long x = parse_int(v, src);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    throw ParseError(src + ": value " + v + " out of range");
  return static_cast<int>(x);
}

bool checked_bool(const std::string& v, const std::string& src) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError(src + ": expected true or false, got '" + v + "'");
}

std::vector<int> checked_int_list(const std::string& v, const std::string& src) {
  std::vector<int> out;
  size_t start = 0;
  while (start <= v.size()) {
    size_t comma = v.find(',', start);
    if (comma == std::string::npos) comma = v.size();
    out.push_back(checked_int(v.substr(start, comma - start), src));
    start = comma + 1;
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

struct KeyDef {
  std::string name;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class F>  // F: (RunConfig&) -> int&
KeyDef int_key(const char* name, F field) {
  return {name,
          [field](RunConfig& c, const std::string& v, const std::string& s) {
            field(c) = checked_int(v, s);
          },
          [field](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); }};
}

template <class F>  // F: (RunConfig&) -> Real&
KeyDef real_key(const char* name, F field) {
  return {name,
          [field](RunConfig& c, const std::string& v, const std::string& s) {
            field(c) = parse_real(v, s);
          },
          [field](const RunConfig& c) { return format_real(field(const_cast<RunConfig&>(c))); }};
}

template <class F>  // F: (RunConfig&) -> bool&
KeyDef bool_key(const char* name, F field) {
  return {name,
          [field](RunConfig& c, const std::string& v, const std::string& s) {
            field(c) = checked_bool(v, s);
          },
          [field](const RunConfig& c) {
            return field(const_cast<RunConfig&>(c)) ? "true" : "false";
          }};
}

template <class F>  // F: (RunConfig&) -> std::vector<int>&
KeyDef int_list_key(const char* name, F field) {
  return {name,
          [field](RunConfig& c, const std::string& v, const std::string& s) {
            field(c) = checked_int_list(v, s);
          },
          [field](const RunConfig& c) { return join_ints(field(const_cast<RunConfig&>(c))); }};
}

std::vector<KeyDef> build_key_table() {
  std::vector<KeyDef> keys;
  keys.push_back({"seed",
                  [](RunConfig& c, const std::string& v, const std::string& s) {
                    const long long x = parse_int(v, s);
                    if (x < 0) throw ParseError(s + ": seed must be non-negative");
                    c.seed = static_cast<uint64_t>(x);
                  },
                  [](const RunConfig& c) { return std::to_string(c.seed); }});

  keys.push_back(int_key("data.num_pairs", [](RunConfig& c) -> int& { return c.data.num_pairs; }));
  keys.push_back(
      int_key("data.vocab_size", [](RunConfig& c) -> int& { return c.data.vocab_size; }));
  keys.push_back(
      int_key("data.concept_count", [](RunConfig& c) -> int& { return c.data.concept_count; }));
  keys.push_back(int_key("data.concepts_per_pair",
                         [](RunConfig& c) -> int& { return c.data.concepts_per_pair; }));
  keys.push_back(int_key("data.captions_per_image",
                         [](RunConfig& c) -> int& { return c.data.captions_per_image; }));
  keys.push_back(real_key("data.noise", [](RunConfig& c) -> Real& { return c.data.noise_level; }));
  keys.push_back(int_key("data.sentence_len_min",
                         [](RunConfig& c) -> int& { return c.data.sentence_len_min; }));
  keys.push_back(int_key("data.sentence_len_max",
                         [](RunConfig& c) -> int& { return c.data.sentence_len_max; }));
  keys.push_back(int_key("data.grid_side", [](RunConfig& c) -> int& { return c.data.grid_side; }));
  keys.push_back(int_key("data.patch_dim", [](RunConfig& c) -> int& { return c.data.patch_dim; }));

  keys.push_back({"text.kind",
                  [](RunConfig& c, const std::string& v, const std::string& s) {
                    if (v == "transformer")
                      c.text.kind = TextEncoderConfig::Kind::Transformer;
                    else if (v == "recurrent")
                      c.text.kind = TextEncoderConfig::Kind::Recurrent;
                    else
                      throw ParseError(s + ": expected transformer or recurrent, got '" + v + "'");
                  },
                  [](const RunConfig& c) {
                    return c.text.kind == TextEncoderConfig::Kind::Transformer
                               ? std::string("transformer")
                               : std::string("recurrent");
                  }});
  keys.push_back(
      int_key("text.vocab_size", [](RunConfig& c) -> int& { return c.text.vocab_size; }));
  keys.push_back(int_key("text.model_dim", [](RunConfig& c) -> int& { return c.text.model_dim; }));
  keys.push_back(
      int_key("text.num_layers", [](RunConfig& c) -> int& { return c.text.num_layers; }));
  keys.push_back(int_key("text.num_heads", [](RunConfig& c) -> int& { return c.text.num_heads; }));
  keys.push_back(int_key("text.max_len", [](RunConfig& c) -> int& { return c.text.max_len; }));
  keys.push_back(int_list_key("text.tap_layers",
                              [](RunConfig& c) -> std::vector<int>& { return c.text.tap_layers; }));

  keys.push_back(
      int_key("image.grid_side", [](RunConfig& c) -> int& { return c.image.grid_side; }));
  keys.push_back(
      int_key("image.patch_dim", [](RunConfig& c) -> int& { return c.image.patch_dim; }));
  keys.push_back(int_list_key(
      "image.stage_dims", [](RunConfig& c) -> std::vector<int>& { return c.image.stage_dims; }));
  keys.push_back(
      int_list_key("image.blocks_per_stage",
                   [](RunConfig& c) -> std::vector<int>& { return c.image.blocks_per_stage; }));
  keys.push_back(int_list_key(
      "image.tap_stages", [](RunConfig& c) -> std::vector<int>& { return c.image.tap_stages; }));

  keys.push_back(int_key("align.dim", [](RunConfig& c) -> int& { return c.align_dim; }));
  keys.push_back(real_key("align.lambda", [](RunConfig& c) -> Real& { return c.align.lambda; }));
  keys.push_back(real_key("align.eps", [](RunConfig& c) -> Real& { return c.align.eps; }));
  keys.push_back({"align.direction",
                  [](RunConfig& c, const std::string& v, const std::string&) {
                    c.align.direction = parse_direction(v);
                  },
                  [](const RunConfig& c) { return direction_name(c.align.direction); }});
  keys.push_back({"align.levels",
                  [](RunConfig& c, const std::string& v, const std::string&) {
                    c.align_levels = v;
                  },
                  [](const RunConfig& c) { return c.align_levels; }});
  keys.push_back(bool_key("align.per_level_mean",
                          [](RunConfig& c) -> bool& { return c.align.per_level_mean; }));

  keys.push_back(real_key("train.lr0", [](RunConfig& c) -> Real& { return c.train.lr0; }));
  keys.push_back(
      int_key("train.decay_every", [](RunConfig& c) -> int& { return c.train.decay_every; }));
  keys.push_back(
      real_key("train.decay_factor", [](RunConfig& c) -> Real& { return c.train.decay_factor; }));
  keys.push_back(
      int_key("train.freeze_epochs", [](RunConfig& c) -> int& { return c.train.freeze_epochs; }));
  keys.push_back(int_key("train.epochs", [](RunConfig& c) -> int& { return c.train.epochs; }));
  keys.push_back(real_key("train.margin", [](RunConfig& c) -> Real& { return c.train.margin; }));
  keys.push_back(int_key("train.batch_size", [](RunConfig& c) -> int& { return c.batch_size; }));
  keys.push_back({"train.negatives",
                  [](RunConfig& c, const std::string& v, const std::string&) {
                    parse_neg_strategy(v);  // reject bad values at parse time
                    c.negatives = v;
                  },
                  [](const RunConfig& c) { return c.negatives; }});
  keys.push_back(int_key("train.val_every", [](RunConfig& c) -> int& { return c.val_every; }));
  keys.push_back(
      real_key("train.early_stop_r1", [](RunConfig& c) -> Real& { return c.early_stop_r1; }));

  keys.push_back(int_key("eval.num_folds", [](RunConfig& c) -> int& { return c.eval_num_folds; }));
  keys.push_back(int_key("eval.fold_size", [](RunConfig& c) -> int& { return c.eval_fold_size; }));
  return keys;
}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = build_key_table();
  return table;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void set_key(RunConfig& cfg, const std::string& key, const std::string& value,
             const std::string& source) {
  for (const KeyDef& def : key_table())
    if (def.name == key) {
      def.set(cfg, value, source);
      return;
    }
  throw ConfigError(source + ": unknown key '" + key + "'");
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(where + ": empty key");
    set_key(cfg, key, value, where);
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  apply_config_text(cfg, read_file(path), path);
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const KeyDef& def : key_table()) {
    out += def.name;
    out += '=';
    out += def.get(cfg);
    out += '\n';
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> names;
  for (const KeyDef& def : key_table()) names.push_back(def.name);
  return names;
}

void resolve_with_manifest(RunConfig& cfg, const SyntheticSpec& manifest) {
  cfg.data = manifest;

  if (cfg.text.vocab_size == 0)
    cfg.text.vocab_size = manifest.vocab_size;
  else if (cfg.text.vocab_size < manifest.vocab_size)
    throw ConfigError("text.vocab_size " + std::to_string(cfg.text.vocab_size) +
                      " is smaller than the corpus vocabulary of " +
                      std::to_string(manifest.vocab_size));

  if (cfg.image.grid_side == -1)
    cfg.image.grid_side = manifest.grid_side;
  else if (cfg.image.grid_side != manifest.grid_side)
    throw ConfigError("image.grid_side " + std::to_string(cfg.image.grid_side) +
                      " contradicts the corpus grid of " + std::to_string(manifest.grid_side));

  if (cfg.image.patch_dim == -1)
    cfg.image.patch_dim = manifest.patch_dim;
  else if (cfg.image.patch_dim != manifest.patch_dim)
    throw ConfigError("image.patch_dim " + std::to_string(cfg.image.patch_dim) +
                      " contradicts the corpus patch dim of " + std::to_string(manifest.patch_dim));
}

AlignmentConfig resolve_alignment(const RunConfig& cfg) {
  AlignmentConfig align = cfg.align;
  if (cfg.align_levels == "all") {
    align.levels_enabled.clear();
    return align;
  }
  const std::vector<int> wanted = checked_int_list(cfg.align_levels, "align.levels");
  for (int label : wanted)
    if (std::find(cfg.image.tap_stages.begin(), cfg.image.tap_stages.end(), label) ==
        cfg.image.tap_stages.end())
      throw ConfigError("align.levels names stage " + std::to_string(label) +
                        " but the tapped stages are " + join_ints(cfg.image.tap_stages));
  align.levels_enabled.clear();
  for (int tap : cfg.image.tap_stages)
    align.levels_enabled.push_back(std::find(wanted.begin(), wanted.end(), tap) != wanted.end());
  return align;
}

}  // namespace hat
