#include "hat/objective.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unordered_map>

#include "hat/io_util.hpp"

namespace hat {

Real triplet_loss(Real s_pos, Real s_neg_text, Real s_neg_img, Real margin) {
  if (!std::isfinite(margin) || margin < 0) throw InputError("margin must be finite and >= 0");
  if (!std::isfinite(s_pos) || !std::isfinite(s_neg_text) || !std::isfinite(s_neg_img))
    throw InputError("triplet scores must be finite");
  const Real text_term = margin + (s_neg_text - s_pos);
  const Real img_term = margin + (s_neg_img - s_pos);
  return (text_term > 0 ? text_term : 0.0) + (img_term > 0 ? img_term : 0.0);
}

Var triplet_loss_var(Tape& tape, Var s_pos, Var s_neg_text, Var s_neg_img, Real margin) {
  if (!std::isfinite(margin) || margin < 0) throw InputError("margin must be finite and >= 0");
  for (Var v : {s_pos, s_neg_text, s_neg_img})
    if (tape.val(v).rows() != 1 || tape.val(v).cols() != 1)
      throw ShapeError("triplet scores must be 1x1, got " + tape.val(v).shape_str());
  const Var text_term = tape.relu(tape.affine(tape.sub(s_neg_text, s_pos), 1.0, margin));
  const Var img_term = tape.relu(tape.affine(tape.sub(s_neg_img, s_pos), 1.0, margin));
  return tape.add(text_term, img_term);
}

void TrainSchedule::validate() const {
  if (!std::isfinite(lr0) || lr0 <= 0) throw ConfigError("learning rate must be finite and > 0");
  if (decay_every < 1) throw ConfigError("decay_every must be at least 1 epoch");
  if (!std::isfinite(decay_factor) || decay_factor < 1)
    throw ConfigError("decay_factor must be finite and >= 1");
  if (freeze_epochs < 0) throw ConfigError("freeze_epochs must be >= 0");
  if (!std::isfinite(margin) || margin < 0) throw ConfigError("margin must be finite and >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
}

Real TrainSchedule::lr_at(int epoch) const {
  if (epoch < 0) throw InputError("epoch must be >= 0");
  Real lr = lr0;
  for (int k = epoch / decay_every; k > 0; --k) lr /= decay_factor;
  return lr;
}

Adam::Adam(Real beta1, Real beta2, Real eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw InputError("Adam betas must lie in [0, 1)");
  if (!(eps > 0)) throw InputError("Adam eps must be > 0");
}

void Adam::step(ParamStore& params, Tape& tape, const std::vector<Var>& vars, Real lr) {
  if (!std::isfinite(lr) || lr <= 0) throw InputError("learning rate must be finite and > 0");
  const int n = params.size();
  if (static_cast<int>(vars.size()) != n)
    throw InputError("bound variable count does not match parameter store");
  if (m_.empty()) {
    m_.reserve(static_cast<size_t>(n));
    v_.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const Mat& value = params.value(i);
      m_.emplace_back(value.rows(), value.cols());
      v_.emplace_back(value.rows(), value.cols());
    }
    steps_.assign(static_cast<size_t>(n), 0);
  } else if (static_cast<int>(m_.size()) != n) {
    throw InputError("optimizer state was built for a different parameter store");
  }
  for (int i = 0; i < n; ++i) {
    if (!tape.requires_grad(vars[i])) continue;
    const Mat& g = tape.grad(vars[i]);
    Mat& value = params.value(i);
    check_same_shape(g, value, "adam");
    if (!g.all_finite())
      throw TrainError("non-finite gradient for parameter " + params.entry(i).name);
    const size_t idx = static_cast<size_t>(i);
    ++steps_[idx];
    const Real t = static_cast<Real>(steps_[idx]);
    const Real bc1 = 1.0 - std::pow(beta1_, t);
    const Real bc2 = 1.0 - std::pow(beta2_, t);
    Mat& m = m_[idx];
    Mat& v = v_[idx];
    for (int r = 0; r < value.rows(); ++r)
      for (int c = 0; c < value.cols(); ++c) {
        const Real grad = g(r, c);
        m(r, c) = beta1_ * m(r, c) + (1.0 - beta1_) * grad;
        v(r, c) = beta2_ * v(r, c) + (1.0 - beta2_) * grad * grad;
        value(r, c) -= lr * (m(r, c) / bc1) / (std::sqrt(v(r, c) / bc2) + eps_);
      }
  }
}

NegStrategy parse_neg_strategy(const std::string& name) {
  if (name == "random") return NegStrategy::Random;
  if (name == "hardest") return NegStrategy::HardestInBatch;
  throw ConfigError("unknown negative strategy '" + name + "', expected random or hardest");
}

std::string neg_strategy_name(NegStrategy s) {
  return s == NegStrategy::Random ? "random" : "hardest";
}

namespace {

int pick_hardest(const std::vector<int>& candidates, const std::vector<Real>& scores) {
  int best = -1;
  for (int c : candidates)
    if (best < 0 || scores[static_cast<size_t>(c)] > scores[static_cast<size_t>(best)]) best = c;
  return best;
}

}  // namespace

std::vector<TripletChoice> sample_negatives(const Mat& scores, const std::vector<int>& row_images,
                                            const std::vector<int>& col_texts,
                                            const GroundTruth& gt, NegStrategy strategy,
                                            Rng& rng) {
  if (scores.rows() != static_cast<int>(row_images.size()) ||
      scores.cols() != static_cast<int>(col_texts.size()))
    throw ShapeError("score matrix " + scores.shape_str() + " does not match " +
                     std::to_string(row_images.size()) + " images x " +
                     std::to_string(col_texts.size()) + " texts");
  std::unordered_map<int, int> row_of_image;
  for (size_t r = 0; r < row_images.size(); ++r)
    row_of_image[row_images[r]] = static_cast<int>(r);

  std::vector<TripletChoice> choices(col_texts.size());
  for (size_t c = 0; c < col_texts.size(); ++c) {
    const int text = col_texts[c];
    if (text < 0 || text >= gt.num_texts())
      throw InputError("text id " + std::to_string(text) + " outside corpus");
    const int image = gt.text_to_image[static_cast<size_t>(text)];
    const auto row_it = row_of_image.find(image);
    if (row_it == row_of_image.end())
      throw InputError("image " + std::to_string(image) + " owning text " + std::to_string(text) +
                       " is not in the batch");
    const int row = row_it->second;

    std::vector<int> text_candidates;
    for (size_t c2 = 0; c2 < col_texts.size(); ++c2)
      if (gt.text_to_image[static_cast<size_t>(col_texts[c2])] != image)
        text_candidates.push_back(static_cast<int>(c2));
    std::vector<int> image_candidates;
    for (size_t r2 = 0; r2 < row_images.size(); ++r2)
      if (row_images[r2] != image) image_candidates.push_back(static_cast<int>(r2));

    TripletChoice choice;
    if (strategy == NegStrategy::HardestInBatch) {
      std::vector<Real> row_scores, col_scores;
      for (int c2 = 0; c2 < scores.cols(); ++c2) row_scores.push_back(scores(row, c2));
      for (int r2 = 0; r2 < scores.rows(); ++r2)
        col_scores.push_back(scores(r2, static_cast<int>(c)));
      choice.neg_text = pick_hardest(text_candidates, row_scores);
      choice.neg_image = pick_hardest(image_candidates, col_scores);
    } else {
      if (!text_candidates.empty())
        choice.neg_text = text_candidates[static_cast<size_t>(
            rng.uniform_int(static_cast<int>(text_candidates.size())))];
      if (!image_candidates.empty())
        choice.neg_image = image_candidates[static_cast<size_t>(
            rng.uniform_int(static_cast<int>(image_candidates.size())))];
    }
    choices[c] = choice;
  }
  return choices;
}

namespace {

struct ValScores {
  Real r1_i2t = -1;
  Real r1_t2i = -1;
};

ValScores run_validation(const Model& model, const std::vector<Mat>& grids,
                         const std::vector<std::vector<int>>& captions, const GroundTruth& gt,
                         const AlignmentConfig& align) {
  std::vector<LevelledFeatures> image_feats, text_feats;
  image_feats.reserve(grids.size());
  text_feats.reserve(captions.size());
  for (const Mat& g : grids) image_feats.push_back(model.encode_image(g));
  for (const auto& c : captions) text_feats.push_back(model.encode_text(c));
  const Mat scores = score_all_pairs(image_feats, text_feats, align);
  const RetrievalReport report = evaluate(scores, gt);
  return {report.i2t.r1, report.t2i.r1};
}

void log_epoch(std::ostream* log, const EpochLog& e) {
  if (!log) return;
  *log << e.epoch << '\t' << format_real(e.lr) << '\t' << format_real(e.mean_loss) << '\t';
  if (e.val_r1_i2t >= 0)
    *log << format_real(e.val_r1_i2t) << '\t' << format_real(e.val_r1_t2i) << '\n';
  else
    *log << "-\t-\n";
  log->flush();
}

}  // namespace

TrainResult train_model(Model& model, const std::vector<Mat>& image_grids,
                        const std::vector<std::vector<int>>& captions, const GroundTruth& gt,
                        const TrainOptions& options, std::ostream* log) {
  options.schedule.validate();
  options.align.validate(static_cast<size_t>(model.num_levels()));
  gt.validate();
  if (static_cast<int>(image_grids.size()) != gt.num_images() ||
      static_cast<int>(captions.size()) != gt.num_texts())
    throw InputError("corpus size does not match ground truth");
  if (options.batch_size < 2)
    throw InputError("batch_size must be at least 2 so in-batch distractors exist");
  if (options.val_every < 0) throw ConfigError("val_every must be >= 0");
  if (options.early_stop_r1 > 0 && options.val_every == 0)
    throw ConfigError("early stopping needs validation enabled (val_every > 0)");

  const TrainSchedule& sched = options.schedule;
  Adam adam;
  TrainResult result;

  // one (image, caption) training pair per text
  std::vector<std::pair<int, int>> all_pairs;
  for (int t = 0; t < gt.num_texts(); ++t)
    all_pairs.emplace_back(gt.text_to_image[static_cast<size_t>(t)], t);

  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    const Real lr = sched.lr_at(epoch);
    const bool train_encoders = epoch >= sched.freeze_epochs;
    std::vector<std::pair<int, int>> pairs = all_pairs;
    Rng shuffle_rng(sched.seed, 1000 + static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(pairs);
    Rng mining_rng(sched.seed, 3000 + static_cast<uint64_t>(epoch));

    Real loss_sum = 0;
    int loss_batches = 0;
    const int num_pairs = static_cast<int>(pairs.size());
    for (int start = 0; start < num_pairs; start += options.batch_size) {
      const int end = std::min(start + options.batch_size, num_pairs);
      if (end - start < 2) continue;  // a single pair has no distractors

      Tape tape(Tape::Mode::Grad);
      Model::Bound bound = model.bind(tape, train_encoders, true);

      // encode each distinct image once, texts are unique within an epoch
      std::vector<int> row_images, col_texts, col_rows;
      std::unordered_map<int, int> row_of_image;
      std::vector<std::vector<Var>> img_vars, txt_vars;
      for (int p = start; p < end; ++p) {
        const auto [img, txt] = pairs[static_cast<size_t>(p)];
        auto it = row_of_image.find(img);
        if (it == row_of_image.end()) {
          it = row_of_image.emplace(img, static_cast<int>(row_images.size())).first;
          row_images.push_back(img);
          img_vars.push_back(model.encode_image(bound, image_grids[static_cast<size_t>(img)]));
        }
        col_rows.push_back(it->second);
        col_texts.push_back(txt);
        txt_vars.push_back(model.encode_text(bound, captions[static_cast<size_t>(txt)]));
      }

      // mine on plain values so only the chosen triplets touch the tape
      std::vector<LevelledFeatures> img_vals, txt_vals;
      for (const auto& vars : img_vars) {
        LevelledFeatures levels;
        for (Var v : vars) levels.push_back(tape.val(v));
        img_vals.push_back(std::move(levels));
      }
      for (const auto& vars : txt_vars) {
        LevelledFeatures levels;
        for (Var v : vars) levels.push_back(tape.val(v));
        txt_vals.push_back(std::move(levels));
      }
      const Mat batch_scores = score_all_pairs(img_vals, txt_vals, options.align);
      const std::vector<TripletChoice> choices =
          sample_negatives(batch_scores, row_images, col_texts, gt, options.negatives, mining_rng);

      Var loss;
      int num_terms = 0;
      for (size_t c = 0; c < col_texts.size(); ++c) {
        const TripletChoice& choice = choices[c];
        if (choice.neg_text < 0 && choice.neg_image < 0) continue;
        const int row = col_rows[c];
        const Var pos = hierarchical_similarity_var(tape, img_vars[static_cast<size_t>(row)],
                                                    txt_vars[c], options.align);
        for (const auto& [neg_row, neg_col] :
             {std::pair<int, int>{row, choice.neg_text},
              std::pair<int, int>{choice.neg_image, static_cast<int>(c)}}) {
          if (neg_row < 0 || neg_col < 0) continue;
          const Var neg =
              hierarchical_similarity_var(tape, img_vars[static_cast<size_t>(neg_row)],
                                          txt_vars[static_cast<size_t>(neg_col)], options.align);
          const Var term = tape.relu(tape.affine(tape.sub(neg, pos), 1.0, sched.margin));
          loss = num_terms == 0 ? term : tape.add(loss, term);
          ++num_terms;
        }
      }
      if (num_terms == 0) continue;
      loss = tape.affine(loss, 1.0 / num_terms, 0.0);

      const Real loss_value = tape.val(loss)(0, 0);
      if (!std::isfinite(loss_value))
        throw TrainError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at pair " +
                         std::to_string(start));
      loss_sum += loss_value;
      ++loss_batches;

      tape.backward(loss);
      adam.step(model.params(), tape, bound.vars, lr);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.mean_loss = loss_batches > 0 ? loss_sum / loss_batches : 0.0;

    const bool last_epoch = epoch == sched.epochs - 1;
    if (options.val_every > 0 && ((epoch + 1) % options.val_every == 0 || last_epoch)) {
      const ValScores val = run_validation(model, image_grids, captions, gt, options.align);
      entry.val_r1_i2t = val.r1_i2t;
      entry.val_r1_t2i = val.r1_t2i;
    }
    log_epoch(log, entry);
    result.epochs.push_back(entry);
    result.epochs_run = epoch + 1;

    if (options.early_stop_r1 > 0 && entry.val_r1_i2t >= 0 &&
        std::min(entry.val_r1_i2t, entry.val_r1_t2i) >= options.early_stop_r1) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

namespace {

// Small but structurally complete model for gradient verification: two taps,
// multi-head attention at every stage, both parameter groups in play.
struct CheckSetup {
  TextEncoderConfig text;
  ImageEncoderConfig image;
  int align_dim = 7;
  AlignmentConfig align;
  Real margin = 0.2;
  Mat grid_pos, grid_neg;
  std::vector<int> tokens_pos, tokens_neg;

  explicit CheckSetup(uint64_t seed) {
    text.vocab_size = 13;
    text.model_dim = 8;
    text.num_layers = 3;
    text.num_heads = 2;
    text.max_len = 8;
    text.tap_layers = {2, 3};
    image.grid_side = 4;
    image.patch_dim = 5;
    image.stage_dims = {6, 8, 10};
    image.blocks_per_stage = {1, 1, 1};
    image.tap_stages = {2, 3};
    align.lambda = 9.0;
    align.direction = Direction::Ensemble;

    Rng rng(seed, 7777);
    const int patches = image.grid_side * image.grid_side;
    grid_pos = rng.normal_mat(patches, image.patch_dim);
    grid_neg = rng.normal_mat(patches, image.patch_dim);
    tokens_pos = random_tokens(rng);
    tokens_neg = random_tokens(rng);
  }

  std::vector<int> random_tokens(Rng& rng) const {
    const int len = 3 + rng.uniform_int(3);
    std::vector<int> out;
    for (int i = 0; i < len; ++i) out.push_back(rng.uniform_int(text.vocab_size));
    return out;
  }
};

Real check_loss(const Model& model, const CheckSetup& s) {
  Tape tape(Tape::Mode::NoGrad);
  Model::Bound bound = model.bind(tape, false, false);
  const std::vector<Var> img_pos = model.encode_image(bound, s.grid_pos);
  const std::vector<Var> img_neg = model.encode_image(bound, s.grid_neg);
  const std::vector<Var> txt_pos = model.encode_text(bound, s.tokens_pos);
  const std::vector<Var> txt_neg = model.encode_text(bound, s.tokens_neg);
  const Var pos = hierarchical_similarity_var(tape, img_pos, txt_pos, s.align);
  const Var neg_text = hierarchical_similarity_var(tape, img_pos, txt_neg, s.align);
  const Var neg_img = hierarchical_similarity_var(tape, img_neg, txt_pos, s.align);
  const Var loss = triplet_loss_var(tape, pos, neg_text, neg_img, s.margin);
  return tape.val(loss)(0, 0);
}

// Keeps both hinge terms strictly active and well away from the kink, so the
// loss is differentiable around the checked point and never flat.
void activate_hinges(const Model& model, CheckSetup& s) {
  const LevelledFeatures img_pos = model.encode_image(s.grid_pos);
  const LevelledFeatures img_neg = model.encode_image(s.grid_neg);
  const LevelledFeatures txt_pos = model.encode_text(s.tokens_pos);
  const LevelledFeatures txt_neg = model.encode_text(s.tokens_neg);
  const Real pos = hierarchical_similarity(img_pos, txt_pos, s.align);
  const Real neg_text = hierarchical_similarity(img_pos, txt_neg, s.align);
  const Real neg_img = hierarchical_similarity(img_neg, txt_pos, s.align);
  const Real tightest = pos - std::min(neg_text, neg_img);
  s.margin = std::max(0.2, tightest + 0.1);
}

Real frob_norm(const Mat& m) {
  Real sum = 0;
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) sum += m(r, c) * m(r, c);
  return std::sqrt(sum);
}

}  // namespace

GradCheckReport grad_check(unsigned long long seed) {
  CheckSetup setup(seed);
  Model model(setup.text, setup.image, setup.align_dim, seed);
  activate_hinges(model, setup);

  // analytic gradients from one backward pass
  Tape tape(Tape::Mode::Grad);
  Model::Bound bound = model.bind(tape, true, true);
  const std::vector<Var> img_pos = model.encode_image(bound, setup.grid_pos);
  const std::vector<Var> img_neg = model.encode_image(bound, setup.grid_neg);
  const std::vector<Var> txt_pos = model.encode_text(bound, setup.tokens_pos);
  const std::vector<Var> txt_neg = model.encode_text(bound, setup.tokens_neg);
  const Var pos = hierarchical_similarity_var(tape, img_pos, txt_pos, setup.align);
  const Var neg_text = hierarchical_similarity_var(tape, img_pos, txt_neg, setup.align);
  const Var neg_img = hierarchical_similarity_var(tape, img_neg, txt_pos, setup.align);
  const Var loss = triplet_loss_var(tape, pos, neg_text, neg_img, setup.margin);
  tape.backward(loss);

  std::vector<Mat> analytic;
  for (int i = 0; i < model.params().size(); ++i) analytic.push_back(tape.grad(bound.vars[i]));

  // central finite differences, one report row per parameter tensor
  const Real h = 1e-4;
  GradCheckReport report;
  for (int i = 0; i < model.params().size(); ++i) {
    const ParamEntry& entry = model.params().entry(i);
    Mat& value = model.params().value(i);
    Mat fd(value.rows(), value.cols());
    for (int r = 0; r < value.rows(); ++r)
      for (int c = 0; c < value.cols(); ++c) {
        const Real saved = value(r, c);
        value(r, c) = saved + h;
        const Real up = check_loss(model, setup);
        value(r, c) = saved - h;
        const Real down = check_loss(model, setup);
        value(r, c) = saved;
        fd(r, c) = (up - down) / (2 * h);
      }

    GradCheckRow row;
    row.name = entry.name;
    row.group = entry.group;
    row.analytic_norm = frob_norm(analytic[static_cast<size_t>(i)]);
    row.fd_norm = frob_norm(fd);
    Real diff = 0;
    for (int r = 0; r < fd.rows(); ++r)
      for (int c = 0; c < fd.cols(); ++c) {
        const Real d = analytic[static_cast<size_t>(i)](r, c) - fd(r, c);
        diff += d * d;
      }
    // A parameter can have a genuinely zero gradient (an attention key bias
    // shifts all scores of a row equally, which softmax cancels). Both sides
    // then hold pure roundoff, where a relative comparison is meaningless.
    const Real kZeroBand = 1e-7;
    if (row.analytic_norm < kZeroBand && row.fd_norm < kZeroBand)
      row.rel_error = 0.0;
    else
      row.rel_error = std::sqrt(diff) / std::max(row.analytic_norm + row.fd_norm, 1e-12);
    if (row.rel_error > report.max_rel_error) {
      report.max_rel_error = row.rel_error;
      report.worst = row.name;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string format_grad_report(const GradCheckReport& report) {
  std::string out = "parameter\tgroup\trel_error\tanalytic_norm\tfd_norm\n";
  for (const GradCheckRow& row : report.rows) {
    out += row.name;
    out += '\t';
    out += row.group == ParamGroup::Encoder ? "encoder" : "alignment";
    out += '\t';
    out += format_real(row.rel_error);
    out += '\t';
    out += format_real(row.analytic_norm);
    out += '\t';
    out += format_real(row.fd_norm);
    out += '\n';
  }
  out += "max_rel_error=" + format_real(report.max_rel_error) + " worst=" + report.worst + "\n";
  return out;
}

}  // namespace hat
