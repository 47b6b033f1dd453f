#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hat/align.hpp"
#include "hat/encoders.hpp"
#include "hat/errors.hpp"
#include "hat/eval.hpp"
#include "hat/mat.hpp"
#include "hat/params.hpp"
#include "hat/rng.hpp"
#include "hat/tape.hpp"

namespace hat {

// Hinge ranking loss over one positive pair and its two hardest (or sampled)
// distractors: one wrong text for the image and one wrong image for the text.
Real triplet_loss(Real s_pos, Real s_neg_text, Real s_neg_img, Real margin);

// Tape twin of triplet_loss; every input is a 1x1 Var on the same tape.
Var triplet_loss_var(Tape& tape, Var s_pos, Var s_neg_text, Var s_neg_img, Real margin);

struct TrainSchedule {
  Real lr0 = 1e-5;
  int decay_every = 10;       // epochs between learning-rate drops
  Real decay_factor = 10.0;   // divide lr by this at each drop
  int freeze_epochs = 10;     // encoder parameters stay fixed this long
  Real margin = 0.2;
  int epochs = 30;
  unsigned long long seed = 1;

  void validate() const;
  Real lr_at(int epoch) const;  // lr0 / decay_factor^floor(epoch / decay_every)
};

// Adam with bias correction; step counts are per parameter tensor so a tensor
// frozen for the first epochs starts its moment schedule when it unfreezes.
class Adam {
 public:
  Adam(Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8);

  // Applies one update to every bound parameter whose Var requires grad.
  void step(ParamStore& params, Tape& tape, const std::vector<Var>& vars, Real lr);

 private:
  Real beta1_, beta2_, eps_;
  std::vector<Mat> m_, v_;
  std::vector<long long> steps_;
};

enum class NegStrategy { Random, HardestInBatch };

NegStrategy parse_neg_strategy(const std::string& name);
std::string neg_strategy_name(NegStrategy s);

struct TripletChoice {
  int neg_text = -1;  // column index into the batch score matrix, -1 drops the term
  int neg_image = -1;  // row index, -1 drops the term
};

// Picks a distractor text column and image row for every positive pair in a
// batch. Rows are distinct images, columns are texts; column c's positive
// image is the one owning text col_texts[c], which must be present among the
// rows. Hardest mining never picks a caption of the query image as the text
// distractor, and never picks the text's own image as the image distractor;
// random sampling draws uniformly from the same candidate sets. A choice of
// -1 means no valid candidate existed in this batch.
std::vector<TripletChoice> sample_negatives(const Mat& scores, const std::vector<int>& row_images,
                                            const std::vector<int>& col_texts,
                                            const GroundTruth& gt, NegStrategy strategy,
                                            Rng& rng);

struct TrainOptions {
  TrainSchedule schedule;
  AlignmentConfig align;
  int batch_size = 16;
  NegStrategy negatives = NegStrategy::HardestInBatch;
  int val_every = 1;       // epochs between retrieval checks; 0 disables them
  Real early_stop_r1 = 0;  // stop once both directions reach this R@1; 0 never stops
};

struct EpochLog {
  int epoch = 0;
  Real lr = 0;
  Real mean_loss = 0;
  Real val_r1_i2t = -1;  // -1 when no validation ran this epoch
  Real val_r1_t2i = -1;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int epochs_run = 0;
  bool early_stopped = false;
};

// Runs the triplet schedule over all (image, caption) pairs. image_grids are
// raw patch grids (side^2 x patch_dim), captions are token id sequences.
// Logs one tab-separated line per epoch to `log` when given.
TrainResult train_model(Model& model, const std::vector<Mat>& image_grids,
                        const std::vector<std::vector<int>>& captions, const GroundTruth& gt,
                        const TrainOptions& options, std::ostream* log);

struct GradCheckRow {
  std::string name;
  ParamGroup group = ParamGroup::Encoder;
  Real rel_error = 0;
  Real analytic_norm = 0;
  Real fd_norm = 0;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  Real max_rel_error = 0;
  std::string worst;

  bool ok(Real tol) const { return max_rel_error <= tol; }
};

// Compares backward-pass gradients of a triplet loss on a small random model
// against central finite differences, one relative error per parameter tensor.
GradCheckReport grad_check(unsigned long long seed);

std::string format_grad_report(const GradCheckReport& report);

}  // namespace hat
