#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "hat/config.hpp"
#include "hat/eval.hpp"
#include "hat/objective.hpp"

namespace hat {

// Configuration sources beyond the defaults, in override order: a checkpoint's
// embedded text (supplied by the caller), then the config file, then explicit
// (key, value) assignments from command-line flags.
struct ConfigLayers {
  std::string config_file;  // empty means no file
  std::vector<std::pair<std::string, std::string>> flag_values;
};

RunConfig layer_config(const std::string& checkpoint_config, const ConfigLayers& layers);

// Resolves a checkpoint argument that may name the file itself or the
// directory a train run wrote (then model.ckpt inside it).
std::string resolve_checkpoint_path(const std::string& path);

// Writes a synthetic corpus under out_dir.
void cmd_gen_data(const ConfigLayers& layers, const std::string& out_dir, std::ostream& log);

struct TrainSummary {
  std::string checkpoint_path;
  std::string config_text;  // effective configuration, as embedded in the checkpoint
  TrainResult result;
};

// Trains on the corpus in data_dir and writes model.ckpt plus run.cfg under
// out_dir. The effective configuration is echoed to the log before training.
TrainSummary cmd_train(const ConfigLayers& layers, const std::string& data_dir,
                       const std::string& out_dir, std::ostream& log);

struct EvalSummary {
  RetrievalReport report;
  std::string kv_text;  // machine-readable metric=value lines
};

// Scores the corpus with a trained model and reports retrieval metrics.
// out_path, when non-empty, receives the key-value report.
EvalSummary cmd_eval(const ConfigLayers& layers, const std::string& data_dir,
                     const std::string& ckpt_path, const std::string& out_path, std::ostream& log);

struct RetrieveHit {
  int candidate = 0;
  Real score = 0;
  bool ground_truth = false;
};

// Ranks all candidates of the other modality for one query item.
// query_kind is "image" or "text".
std::vector<RetrieveHit> cmd_retrieve(const ConfigLayers& layers, const std::string& data_dir,
                                      const std::string& ckpt_path, const std::string& query_kind,
                                      int query_id, int topk, std::ostream& log);

// Writes the per-level attention weights of one (image, text) pair as CSV.
// Needs a single direction; the ensemble has no single weight matrix.
void cmd_export_attn(const ConfigLayers& layers, const std::string& data_dir,
                     const std::string& ckpt_path, int image_id, int text_id,
                     const std::string& out_path, std::ostream& log);

// Runs the finite-difference gradient audit; true when every parameter
// group stays within tolerance.
bool cmd_grad_check(uint64_t seed, Real tolerance, std::ostream& log);

}  // namespace hat
