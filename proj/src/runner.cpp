#include "hat/runner.hpp"

#include <algorithm>
#include <filesystem>
#include <ostream>

#include "hat/align.hpp"
#include "hat/data.hpp"
#include "hat/encoders.hpp"
#include "hat/errors.hpp"
#include "hat/io_util.hpp"
#include "hat/params.hpp"

namespace hat {

RunConfig layer_config(const std::string& checkpoint_config, const ConfigLayers& layers) {
  RunConfig cfg;
  if (!checkpoint_config.empty()) apply_config_text(cfg, checkpoint_config, "checkpoint");
  if (!layers.config_file.empty()) apply_config_file(cfg, layers.config_file);
  for (const auto& [key, value] : layers.flag_values) set_key(cfg, key, value, "flag " + key);
  return cfg;
}

std::string resolve_checkpoint_path(const std::string& path) {
  if (std::filesystem::is_directory(path))
    return (std::filesystem::path(path) / "model.ckpt").string();
  return path;
}

namespace {

void echo_config(std::ostream& log, const RunConfig& cfg) {
  log << "# effective configuration\n" << serialize_config(cfg) << "# end configuration\n";
}

struct LoadedRun {
  RunConfig cfg;
  Corpus corpus;
};

// Shared preamble of every command that reads a trained model: checkpoint
// first, then corpus, then the resolved configuration layered on top of the
// checkpoint's embedded one.
LoadedRun load_for_inference(const ConfigLayers& layers, const std::string& data_dir,
                             const Checkpoint& ck) {
  LoadedRun run{layer_config(ck.config_text, layers), read_corpus(data_dir)};
  resolve_with_manifest(run.cfg, run.corpus.spec);
  return run;
}

void encode_corpus(const Model& model, const Corpus& corpus,
                   std::vector<LevelledFeatures>& images, std::vector<LevelledFeatures>& texts) {
  images.reserve(corpus.images.size());
  texts.reserve(corpus.captions.size());
  for (const Mat& grid : corpus.images) images.push_back(model.encode_image(grid));
  for (const auto& caption : corpus.captions) texts.push_back(model.encode_text(caption));
}

}  // namespace

void cmd_gen_data(const ConfigLayers& layers, const std::string& out_dir, std::ostream& log) {
  RunConfig cfg = layer_config("", layers);
  echo_config(log, cfg);
  SyntheticSpec spec = cfg.data;
  spec.seed = cfg.seed;
  const Corpus corpus = generate_corpus(spec);
  write_corpus(out_dir, corpus);
  log << "wrote " << corpus.images.size() << " images and " << corpus.captions.size()
      << " captions to " << out_dir << "\n";
}

TrainSummary cmd_train(const ConfigLayers& layers, const std::string& data_dir,
                       const std::string& out_dir, std::ostream& log) {
  RunConfig cfg = layer_config("", layers);
  const Corpus corpus = read_corpus(data_dir);
  resolve_with_manifest(cfg, corpus.spec);
  echo_config(log, cfg);

  std::filesystem::create_directories(out_dir);

  Model model(cfg.text, cfg.image, cfg.align_dim, cfg.seed);
  TrainOptions options;
  options.schedule = cfg.train;
  options.schedule.seed = cfg.seed;
  options.align = resolve_alignment(cfg);
  options.batch_size = cfg.batch_size;
  options.negatives = parse_neg_strategy(cfg.negatives);
  options.val_every = cfg.val_every;
  options.early_stop_r1 = cfg.early_stop_r1;

  log << "# epoch\tlr\tmean_loss\tr1_i2t\tr1_t2i\n";
  TrainSummary summary;
  summary.result = train_model(model, corpus.images, corpus.captions, corpus.gt, options, &log);
  summary.config_text = serialize_config(cfg);
  summary.checkpoint_path = (std::filesystem::path(out_dir) / "model.ckpt").string();

  save_checkpoint(summary.checkpoint_path, model.params(), summary.config_text);
  atomic_write_file((std::filesystem::path(out_dir) / "run.cfg").string(), summary.config_text);

  log << "trained " << summary.result.epochs_run << " epochs"
      << (summary.result.early_stopped ? " (early stop)" : "") << ", checkpoint at "
      << summary.checkpoint_path << "\n";
  if (!summary.result.epochs.empty()) {
    const EpochLog& last = summary.result.epochs.back();
    if (last.val_r1_i2t >= 0)
      log << "final R@1 i2t=" << format_real(last.val_r1_i2t)
          << " t2i=" << format_real(last.val_r1_t2i) << "\n";
  }
  return summary;
}

EvalSummary cmd_eval(const ConfigLayers& layers, const std::string& data_dir,
                     const std::string& ckpt_path, const std::string& out_path,
                     std::ostream& log) {
  const Checkpoint ck = load_checkpoint(resolve_checkpoint_path(ckpt_path));
  LoadedRun run = load_for_inference(layers, data_dir, ck);
  echo_config(log, run.cfg);

  const Model model(run.cfg.text, run.cfg.image, run.cfg.align_dim, ck.params);
  std::vector<LevelledFeatures> images, texts;
  encode_corpus(model, run.corpus, images, texts);
  const Mat scores = score_all_pairs(images, texts, resolve_alignment(run.cfg));

  const int fold_size =
      run.cfg.eval_fold_size > 0 ? run.cfg.eval_fold_size : run.corpus.gt.num_images();
  EvalSummary summary;
  summary.report = folded_eval(scores, run.corpus.gt, fold_size, run.cfg.eval_num_folds);
  summary.kv_text = format_report_kv(summary.report);

  log << format_report_table(summary.report);
  if (!out_path.empty()) {
    atomic_write_file(out_path, summary.kv_text);
    log << "report written to " << out_path << "\n";
  }
  return summary;
}

std::vector<RetrieveHit> cmd_retrieve(const ConfigLayers& layers, const std::string& data_dir,
                                      const std::string& ckpt_path, const std::string& query_kind,
                                      int query_id, int topk, std::ostream& log) {
  if (query_kind != "image" && query_kind != "text")
    throw InputError("query kind must be image or text, got '" + query_kind + "'");
  if (topk < 1) throw InputError("topk must be at least 1");

  const Checkpoint ck = load_checkpoint(resolve_checkpoint_path(ckpt_path));
  LoadedRun run = load_for_inference(layers, data_dir, ck);
  echo_config(log, run.cfg);

  const Model model(run.cfg.text, run.cfg.image, run.cfg.align_dim, ck.params);
  const AlignmentConfig align = resolve_alignment(run.cfg);
  const GroundTruth& gt = run.corpus.gt;

  std::vector<Real> scores;
  std::vector<bool> is_match;
  if (query_kind == "image") {
    if (query_id < 0 || query_id >= gt.num_images())
      throw InputError("image id " + std::to_string(query_id) + " outside [0, " +
                       std::to_string(gt.num_images()) + ")");
    std::vector<LevelledFeatures> texts;
    texts.reserve(run.corpus.captions.size());
    for (const auto& caption : run.corpus.captions) texts.push_back(model.encode_text(caption));
    const std::vector<LevelledFeatures> query{
        model.encode_image(run.corpus.images[static_cast<size_t>(query_id)])};
    const Mat row = score_all_pairs(query, texts, align);
    is_match.assign(static_cast<size_t>(gt.num_texts()), false);
    for (int t : gt.image_to_texts[static_cast<size_t>(query_id)])
      is_match[static_cast<size_t>(t)] = true;
    for (int t = 0; t < row.cols(); ++t) scores.push_back(row(0, t));
  } else {
    if (query_id < 0 || query_id >= gt.num_texts())
      throw InputError("text id " + std::to_string(query_id) + " outside [0, " +
                       std::to_string(gt.num_texts()) + ")");
    std::vector<LevelledFeatures> images;
    images.reserve(run.corpus.images.size());
    for (const Mat& grid : run.corpus.images) images.push_back(model.encode_image(grid));
    const std::vector<LevelledFeatures> query{
        model.encode_text(run.corpus.captions[static_cast<size_t>(query_id)])};
    const Mat col = score_all_pairs(images, query, align);
    is_match.assign(static_cast<size_t>(gt.num_images()), false);
    is_match[static_cast<size_t>(gt.text_to_image[static_cast<size_t>(query_id)])] = true;
    for (int i = 0; i < col.rows(); ++i) scores.push_back(col(i, 0));
  }

  const std::vector<int> order = rank_candidates(scores);
  const int shown = std::min<int>(topk, static_cast<int>(order.size()));
  std::vector<RetrieveHit> hits;
  log << "rank\tcandidate\tscore\tmatch\n";
  for (int r = 0; r < shown; ++r) {
    RetrieveHit hit;
    hit.candidate = order[static_cast<size_t>(r)];
    hit.score = scores[static_cast<size_t>(hit.candidate)];
    hit.ground_truth = is_match[static_cast<size_t>(hit.candidate)];
    log << (r + 1) << '\t' << hit.candidate << '\t' << format_real(hit.score) << '\t'
        << (hit.ground_truth ? "yes" : "no") << "\n";
    hits.push_back(hit);
  }
  return hits;
}

void cmd_export_attn(const ConfigLayers& layers, const std::string& data_dir,
                     const std::string& ckpt_path, int image_id, int text_id,
                     const std::string& out_path, std::ostream& log) {
  const Checkpoint ck = load_checkpoint(resolve_checkpoint_path(ckpt_path));
  LoadedRun run = load_for_inference(layers, data_dir, ck);
  echo_config(log, run.cfg);

  const AlignmentConfig align = resolve_alignment(run.cfg);
  if (align.direction == Direction::Ensemble)
    throw InputError(
        "attention export needs a single direction; pass --direction i2t or --direction t2i");

  const GroundTruth& gt = run.corpus.gt;
  if (image_id < 0 || image_id >= gt.num_images())
    throw InputError("image id " + std::to_string(image_id) + " outside [0, " +
                     std::to_string(gt.num_images()) + ")");
  if (text_id < 0 || text_id >= gt.num_texts())
    throw InputError("text id " + std::to_string(text_id) + " outside [0, " +
                     std::to_string(gt.num_texts()) + ")");

  const Model model(run.cfg.text, run.cfg.image, run.cfg.align_dim, ck.params);
  const LevelledFeatures img =
      model.encode_image(run.corpus.images[static_cast<size_t>(image_id)]);
  const LevelledFeatures txt =
      model.encode_text(run.corpus.captions[static_cast<size_t>(text_id)]);

  std::vector<LevelAttention> atts;
  const std::vector<int>& labels = run.cfg.image.tap_stages;
  const Real score = hierarchical_similarity(img, txt, align, &labels, &atts);
  export_attention_file(out_path, atts);
  log << "pair (" << image_id << ", " << text_id << ") similarity " << format_real(score)
      << ", attention written to " << out_path << "\n";
}

bool cmd_grad_check(uint64_t seed, Real tolerance, std::ostream& log) {
  const GradCheckReport report = grad_check(seed);
  log << format_grad_report(report);
  const bool ok = report.ok(tolerance);
  log << (ok ? "grad check passed" : "grad check FAILED") << " at tolerance "
      << format_real(tolerance) << "\n";
  return ok;
}

}  // namespace hat
