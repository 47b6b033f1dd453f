#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hat/features_io.hpp"
#include "hat/mat.hpp"
#include "hat/tape.hpp"

namespace hat {

// i2t: image regions attend over words; t2i: words attend over regions;
// ensemble averages the two directional scores.
enum class Direction { I2T, T2I, Ensemble };

std::string direction_name(Direction d);
Direction parse_direction(const std::string& s);

struct AlignmentConfig {
  Real lambda = 9.0;  // attention temperature
  Direction direction = Direction::Ensemble;
  std::vector<bool> levels_enabled;  // empty means all levels
  bool per_level_mean = false;       // divide each level score by its query token count
  Real eps = 1e-8;

  bool level_on(size_t j) const { return levels_enabled.empty() || levels_enabled[j]; }
  void validate(size_t level_count) const;
};

struct LevelAttention {
  int level = 0;  // tap label (image stage number)
  Direction direction = Direction::I2T;
  Mat weights;   // query x candidate attention, rows sum to 1
  Mat raw_sims;  // region x word cosine matrix, regardless of direction
};

// Pairwise cosine matrix: entry (k, t) compares region k with word t.
Mat region_word_sims(const Mat& V, const Mat& W, Real eps = 1e-8);

// Clamp negatives to zero, then scale each column to unit norm (eps-guarded).
// This normalizes over the region axis for each word; the t2i direction gets
// the mirror by feeding the transposed similarity matrix.
Mat hinge_normalize(const Mat& S, Real eps = 1e-8);

// Row-wise softmax attention at temperature lambda over the candidate axis,
// then the weighted sum of candidate vectors.
Mat attend(const Mat& sbar, const Mat& W, Real lambda);

// One level, one direction from AlignmentConfig (Ensemble averages both).
// Sum over query tokens of cos(query, attended counterpart); divided by the
// query token count when per_level_mean is set.
Real level_similarity(const Mat& V, const Mat& W, const AlignmentConfig& cfg,
                      std::vector<LevelAttention>* atts = nullptr, int level_label = 0);

// Sum of enabled level similarities, left to right, so it is bit-identical
// to adding up the individual level_similarity results.
Real hierarchical_similarity(const LevelledFeatures& img, const LevelledFeatures& txt,
                             const AlignmentConfig& cfg,
                             const std::vector<int>* level_labels = nullptr,
                             std::vector<LevelAttention>* atts = nullptr);

Real ensemble_score(Real s_i2t, Real s_t2i);

// CSV with a header, one row per attention weight:
// level,query_token,candidate_token,weight
void export_attention(const std::vector<LevelAttention>& atts, std::ostream& out);
void export_attention_file(const std::string& path, const std::vector<LevelAttention>& atts);

// Score matrix over whole corpora: rows are images, columns are texts.
// Per-item level features are normalized once and reused across pairs; the
// resulting entries are bit-identical to per-pair hierarchical_similarity.
Mat score_all_pairs(const std::vector<LevelledFeatures>& images,
                    const std::vector<LevelledFeatures>& texts, const AlignmentConfig& cfg);

// Tape twin of hierarchical_similarity used in training. Shares every
// forward kernel with the plain version, so scores match bit for bit.
Var hierarchical_similarity_var(Tape& t, const std::vector<Var>& img, const std::vector<Var>& txt,
                                const AlignmentConfig& cfg);

}  // namespace hat
