#pragma once

#include <string>
#include <vector>

#include "hat/align.hpp"
#include "hat/data.hpp"
#include "hat/encoders.hpp"
#include "hat/objective.hpp"

namespace hat {

// Every knob of a run, addressable by a flat dotted key (see config_keys()).
// Layering: defaults, then a checkpoint's embedded config, then the config
// file, then command-line flags; later layers win key by key.
struct RunConfig {
  uint64_t seed = 1;
  SyntheticSpec data;        // data.*; generation uses the top-level seed
  TextEncoderConfig text;    // text.vocab_size 0 means take it from the corpus
  ImageEncoderConfig image;  // grid_side / patch_dim -1 mean take them from the corpus
  int align_dim = 64;
  AlignmentConfig align;
  std::string align_levels = "all";  // "all" or comma list of image tap stages
  TrainSchedule train;               // train.seed follows the top-level seed
  int batch_size = 16;
  std::string negatives = "hardest";
  int val_every = 1;
  Real early_stop_r1 = 0;
  int eval_num_folds = 1;
  int eval_fold_size = 0;  // 0 puts the whole corpus in one fold

  RunConfig() {
    image.grid_side = -1;
    image.patch_dim = -1;
    // toy-scale default; the reference schedule starts at 1e-5
    train.lr0 = 1e-3;
  }
};

// Sets one key from its text form. Bad values raise a parse error naming the
// source, unknown keys a config error.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value,
             const std::string& source);

// key=value lines, # comments, blank lines ignored. Errors carry source:line.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source);
void apply_config_file(RunConfig& cfg, const std::string& path);

// Every key in a fixed order; parsing the result reproduces the config.
std::string serialize_config(const RunConfig& cfg);
std::vector<std::string> config_keys();

// Fills the from-corpus sentinels (text vocabulary, image grid geometry) and
// copies the corpus recipe in, so the serialized effective config is
// self-contained. Explicit values that contradict the manifest are rejected.
void resolve_with_manifest(RunConfig& cfg, const SyntheticSpec& manifest);

// Translates align_levels into the per-level mask against image.tap_stages.
AlignmentConfig resolve_alignment(const RunConfig& cfg);

}  // namespace hat
