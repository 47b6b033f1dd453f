#include "hat/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hat/io_util.hpp"

namespace hat {

void GroundTruth::validate() const {
  for (size_t i = 0; i < image_to_texts.size(); ++i) {
    if (image_to_texts[i].empty())
      throw InputError("image " + std::to_string(i) + " has no texts");
    for (int t : image_to_texts[i]) {
      if (t < 0 || t >= num_texts())
        throw InputError("image " + std::to_string(i) + " references text " + std::to_string(t) +
                         " outside [0, " + std::to_string(num_texts()) + ")");
      if (text_to_image[static_cast<size_t>(t)] != static_cast<int>(i))
        throw InputError("text " + std::to_string(t) + " maps to image " +
                         std::to_string(text_to_image[static_cast<size_t>(t)]) + " but image " +
                         std::to_string(i) + " claims it");
    }
  }
  for (size_t t = 0; t < text_to_image.size(); ++t) {
    const int i = text_to_image[t];
    if (i < 0 || i >= num_images())
      throw InputError("text " + std::to_string(t) + " references image " + std::to_string(i) +
                       " outside [0, " + std::to_string(num_images()) + ")");
    const auto& owned = image_to_texts[static_cast<size_t>(i)];
    if (std::find(owned.begin(), owned.end(), static_cast<int>(t)) == owned.end())
      throw InputError("text " + std::to_string(t) + " missing from image " + std::to_string(i) +
                       "'s text list");
  }
}

GroundTruth GroundTruth::contiguous(int num_images, int captions_per_image) {
  if (num_images < 1 || captions_per_image < 1)
    throw InputError("need at least one image and one caption per image");
  GroundTruth gt;
  gt.image_to_texts.resize(static_cast<size_t>(num_images));
  gt.text_to_image.resize(static_cast<size_t>(num_images) * captions_per_image);
  for (int i = 0; i < num_images; ++i)
    for (int c = 0; c < captions_per_image; ++c) {
      const int t = i * captions_per_image + c;
      gt.image_to_texts[static_cast<size_t>(i)].push_back(t);
      gt.text_to_image[static_cast<size_t>(t)] = i;
    }
  return gt;
}

std::vector<int> rank_candidates(const std::vector<Real>& scores) {
  if (scores.empty()) throw InputError("no candidates to rank");
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&scores](int a, int b) {
    const Real sa = scores[static_cast<size_t>(a)], sb = scores[static_cast<size_t>(b)];
    if (sa != sb) return sa > sb;
    return a < b;
  });
  return order;
}

int best_rank(const std::vector<Real>& scores, const std::vector<int>& truth_ids) {
  if (scores.empty()) throw InputError("no candidates to rank");
  if (truth_ids.empty()) throw InputError("no ground-truth candidates");
  int best = static_cast<int>(scores.size()) + 1;
  for (int id : truth_ids) {
    if (id < 0 || id >= static_cast<int>(scores.size()))
      throw InputError("ground-truth id " + std::to_string(id) + " outside candidate set");
    const Real s = scores[static_cast<size_t>(id)];
    int ahead = 0;
    for (size_t c = 0; c < scores.size(); ++c) {
      const Real sc = scores[c];
      if (sc > s || (sc == s && static_cast<int>(c) < id)) ++ahead;
    }
    best = std::min(best, ahead + 1);
  }
  return best;
}

Real recall_at_k(const std::vector<int>& ranks, int k) {
  if (ranks.empty()) throw InputError("no ranks to aggregate");
  if (k < 1) throw InputError("K must be at least 1");
  int hits = 0;
  for (int r : ranks) {
    if (r < 1) throw InputError("ranks are 1-based, got " + std::to_string(r));
    if (r <= k) ++hits;
  }
  return static_cast<Real>(hits) / static_cast<Real>(ranks.size());
}

namespace {

TaskMetrics metrics_from_ranks(std::vector<int> ranks) {
  TaskMetrics m;
  m.r1 = recall_at_k(ranks, 1);
  m.r5 = recall_at_k(ranks, 5);
  m.r10 = recall_at_k(ranks, 10);
  Real sum = 0.0;
  for (int r : ranks) sum += r;
  m.mean_rank = sum / static_cast<Real>(ranks.size());
  std::sort(ranks.begin(), ranks.end());
  const size_t n = ranks.size();
  m.median_rank = n % 2 == 1 ? ranks[n / 2]
                             : 0.5 * (ranks[n / 2 - 1] + ranks[n / 2]);
  return m;
}

// One fold: images [img_begin, img_end) against exactly their own texts.
RetrievalReport::Fold eval_fold(const Mat& scores, const GroundTruth& gt, int img_begin,
                                int img_end) {
  std::vector<int> fold_texts;
  for (int i = img_begin; i < img_end; ++i)
    for (int t : gt.image_to_texts[static_cast<size_t>(i)]) fold_texts.push_back(t);
  std::sort(fold_texts.begin(), fold_texts.end());

  // image queries over the fold's texts
  std::vector<int> i2t_ranks;
  for (int i = img_begin; i < img_end; ++i) {
    std::vector<Real> row;
    row.reserve(fold_texts.size());
    for (int t : fold_texts) row.push_back(scores(i, t));
    std::vector<int> truth;
    for (int t : gt.image_to_texts[static_cast<size_t>(i)]) {
      const auto it = std::lower_bound(fold_texts.begin(), fold_texts.end(), t);
      truth.push_back(static_cast<int>(it - fold_texts.begin()));
    }
    i2t_ranks.push_back(best_rank(row, truth));
  }

  // text queries over the fold's images
  std::vector<int> t2i_ranks;
  for (int t : fold_texts) {
    std::vector<Real> col;
    col.reserve(static_cast<size_t>(img_end - img_begin));
    for (int i = img_begin; i < img_end; ++i) col.push_back(scores(i, t));
    t2i_ranks.push_back(best_rank(col, {gt.text_to_image[static_cast<size_t>(t)] - img_begin}));
  }

  RetrievalReport::Fold fold;
  fold.i2t = metrics_from_ranks(std::move(i2t_ranks));
  fold.t2i = metrics_from_ranks(std::move(t2i_ranks));
  return fold;
}

TaskMetrics average(const std::vector<RetrievalReport::Fold>& folds, bool t2i) {
  TaskMetrics avg;
  for (const auto& f : folds) {
    const TaskMetrics& m = t2i ? f.t2i : f.i2t;
    avg.r1 += m.r1;
    avg.r5 += m.r5;
    avg.r10 += m.r10;
    avg.mean_rank += m.mean_rank;
    avg.median_rank += m.median_rank;
  }
  const Real n = static_cast<Real>(folds.size());
  avg.r1 /= n;
  avg.r5 /= n;
  avg.r10 /= n;
  avg.mean_rank /= n;
  avg.median_rank /= n;
  return avg;
}

void check_scores(const Mat& scores, const GroundTruth& gt) {
  gt.validate();
  if (scores.rows() != gt.num_images() || scores.cols() != gt.num_texts())
    throw ShapeError("score matrix " + scores.shape_str() + " does not cover " +
                     std::to_string(gt.num_images()) + " images x " +
                     std::to_string(gt.num_texts()) + " texts");
  if (!scores.all_finite()) throw InputError("score matrix contains non-finite values");
}

}  // namespace

RetrievalReport evaluate(const Mat& scores, const GroundTruth& gt) {
  return folded_eval(scores, gt, gt.num_images(), 1);
}

RetrievalReport folded_eval(const Mat& scores, const GroundTruth& gt, int fold_size,
                            int num_folds) {
  check_scores(scores, gt);
  if (fold_size < 1 || num_folds < 1) throw InputError("fold_size and num_folds must be positive");
  if (static_cast<long long>(fold_size) * num_folds > gt.num_images())
    throw InputError("corpus has " + std::to_string(gt.num_images()) + " images, need " +
                     std::to_string(fold_size) + " x " + std::to_string(num_folds));
  RetrievalReport report;
  for (int f = 0; f < num_folds; ++f)
    report.folds.push_back(eval_fold(scores, gt, f * fold_size, (f + 1) * fold_size));
  report.i2t = average(report.folds, false);
  report.t2i = average(report.folds, true);
  return report;
}

namespace {

void table_row(std::ostringstream& out, const std::string& name, const TaskMetrics& m) {
  out << name << "  R@1 " << format_real(m.r1) << "  R@5 " << format_real(m.r5) << "  R@10 "
      << format_real(m.r10) << "  mean_rank " << format_real(m.mean_rank) << "  median_rank "
      << format_real(m.median_rank) << "\n";
}

void kv_block(std::ostringstream& out, const std::string& prefix, const TaskMetrics& m) {
  out << prefix << ".r1=" << format_real(m.r1) << "\n";
  out << prefix << ".r5=" << format_real(m.r5) << "\n";
  out << prefix << ".r10=" << format_real(m.r10) << "\n";
  out << prefix << ".mean_rank=" << format_real(m.mean_rank) << "\n";
  out << prefix << ".median_rank=" << format_real(m.median_rank) << "\n";
}

}  // namespace

std::string format_report_table(const RetrievalReport& report) {
  std::ostringstream out;
  table_row(out, "image-to-text", report.i2t);
  table_row(out, "text-to-image", report.t2i);
  if (report.folds.size() > 1)
    for (size_t f = 0; f < report.folds.size(); ++f) {
      table_row(out, "fold" + std::to_string(f) + " i2t    ", report.folds[f].i2t);
      table_row(out, "fold" + std::to_string(f) + " t2i    ", report.folds[f].t2i);
    }
  return out.str();
}

std::string format_report_kv(const RetrievalReport& report) {
  std::ostringstream out;
  kv_block(out, "i2t", report.i2t);
  kv_block(out, "t2i", report.t2i);
  if (report.folds.size() > 1)
    for (size_t f = 0; f < report.folds.size(); ++f) {
      kv_block(out, "fold" + std::to_string(f) + ".i2t", report.folds[f].i2t);
      kv_block(out, "fold" + std::to_string(f) + ".t2i", report.folds[f].t2i);
    }
  return out.str();
}

}  // namespace hat
