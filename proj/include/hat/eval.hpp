#pragma once

#include <string>
#include <vector>

#include "hat/mat.hpp"

namespace hat {

// Bidirectional image/text pairing. Every text belongs to exactly one image;
// an image usually owns several texts (captions).
struct GroundTruth {
  std::vector<std::vector<int>> image_to_texts;
  std::vector<int> text_to_image;

  int num_images() const { return static_cast<int>(image_to_texts.size()); }
  int num_texts() const { return static_cast<int>(text_to_image.size()); }

  void validate() const;

  // The standard layout: image i owns texts [i*cpi, (i+1)*cpi).
  static GroundTruth contiguous(int num_images, int captions_per_image);
};

// Candidate ids ordered by descending score; ties broken by ascending id.
std::vector<int> rank_candidates(const std::vector<Real>& scores);

// 1-based rank of the best-scoring ground-truth candidate: one plus the
// number of candidates that would be listed ahead of it.
int best_rank(const std::vector<Real>& scores, const std::vector<int>& truth_ids);

// Fraction of queries whose best ground-truth rank is within the top K.
Real recall_at_k(const std::vector<int>& ranks, int k);

struct TaskMetrics {
  Real r1 = 0, r5 = 0, r10 = 0;
  Real mean_rank = 0, median_rank = 0;
};

struct RetrievalReport {
  TaskMetrics i2t, t2i;  // fold averages when folded
  struct Fold {
    TaskMetrics i2t, t2i;
  };
  std::vector<Fold> folds;
};

// Full-corpus protocol over a score matrix with images as rows and texts as
// columns. Equivalent to folded_eval with a single fold covering everything.
RetrievalReport evaluate(const Mat& scores, const GroundTruth& gt);

// Contiguous folds of fold_size images (plus their texts) evaluated
// independently; reported metrics are the arithmetic means over folds.
RetrievalReport folded_eval(const Mat& scores, const GroundTruth& gt, int fold_size,
                            int num_folds);

std::string format_report_table(const RetrievalReport& report);
std::string format_report_kv(const RetrievalReport& report);

}  // namespace hat
