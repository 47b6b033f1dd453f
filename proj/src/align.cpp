#include "hat/align.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "hat/io_util.hpp"

namespace hat {

std::string direction_name(Direction d) {
  switch (d) {
    case Direction::I2T: return "i2t";
    case Direction::T2I: return "t2i";
    case Direction::Ensemble: return "ensemble";
  }
  throw InputError("bad direction value");
}

Direction parse_direction(const std::string& s) {
  if (s == "i2t") return Direction::I2T;
  if (s == "t2i") return Direction::T2I;
  if (s == "ensemble") return Direction::Ensemble;
  throw ConfigError("unknown direction '" + s + "', expected i2t, t2i, or ensemble");
}

void AlignmentConfig::validate(size_t level_count) const {
  if (!std::isfinite(lambda)) throw ConfigError("lambda must be finite");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (level_count == 0) throw ConfigError("at least one level is required");
  if (!levels_enabled.empty()) {
    if (levels_enabled.size() != level_count)
      throw ConfigError("levels_enabled has " + std::to_string(levels_enabled.size()) +
                        " entries for " + std::to_string(level_count) + " levels");
    bool any = false;
    for (bool on : levels_enabled) any = any || on;
    if (!any) throw ConfigError("at least one level must be enabled");
  }
}

Mat region_word_sims(const Mat& V, const Mat& W, Real eps) {
  if (V.rows() < 1 || W.rows() < 1) throw InputError("need at least one token on each side");
  if (V.cols() != W.cols())
    throw ShapeError("region/word dims disagree: " + V.shape_str() + " vs " + W.shape_str());
  return matmul_nt(l2_normalize_rows(V, eps), l2_normalize_rows(W, eps));
}

Mat hinge_normalize(const Mat& S, Real eps) { return hinge_normalize_cols(S, eps); }

Mat attend(const Mat& sbar, const Mat& W, Real lambda) {
  return matmul(softmax_rows(sbar, lambda), W);
}

Real ensemble_score(Real s_i2t, Real s_t2i) {
  if (!std::isfinite(s_i2t) || !std::isfinite(s_t2i))
    throw InputError("ensemble inputs must be finite");
  return 0.5 * (s_i2t + s_t2i) + 0.0;
}

namespace {

// Q attends over C. Qn is row-normalized Q, S the query-by-candidate cosine
// matrix, Craw the unnormalized candidate vectors.
Real one_direction_score(const Mat& Qn, const Mat& S, const Mat& Craw, const AlignmentConfig& cfg,
                         Direction dir, int label, std::vector<LevelAttention>* atts) {
  const Mat sbar = hinge_normalize_cols(S, cfg.eps);
  const Mat alpha = softmax_rows(sbar, cfg.lambda);
  const Mat attended = matmul(alpha, Craw);
  const Mat an = l2_normalize_rows(attended, cfg.eps);
  Real sum = 0.0;
  for (int k = 0; k < Qn.rows(); ++k) {
    Real dot = 0.0;
    for (int j = 0; j < Qn.cols(); ++j) dot += Qn(k, j) * an(k, j);
    sum += dot;
  }
  if (cfg.per_level_mean) sum = (1.0 / Qn.rows()) * sum + 0.0;
  if (atts) {
    LevelAttention att;
    att.level = label;
    att.direction = dir;
    att.weights = alpha;
    att.raw_sims = dir == Direction::I2T ? S : transpose(S);
    atts->push_back(std::move(att));
  }
  return sum;
}

Real level_score_prenorm(const Mat& Vraw, const Mat& Vn, const Mat& Wraw, const Mat& Wn,
                         const AlignmentConfig& cfg, int label, std::vector<LevelAttention>* atts) {
  switch (cfg.direction) {
    case Direction::I2T:
      return one_direction_score(Vn, matmul_nt(Vn, Wn), Wraw, cfg, Direction::I2T, label, atts);
    case Direction::T2I:
      return one_direction_score(Wn, matmul_nt(Wn, Vn), Vraw, cfg, Direction::T2I, label, atts);
    case Direction::Ensemble: {
      const Mat S = matmul_nt(Vn, Wn);
      const Real s1 = one_direction_score(Vn, S, Wraw, cfg, Direction::I2T, label, atts);
      const Real s2 = one_direction_score(Wn, transpose(S), Vraw, cfg, Direction::T2I, label, atts);
      return 0.5 * (s1 + s2) + 0.0;
    }
  }
  throw InputError("bad direction value");
}

void check_level_counts(size_t img_levels, size_t txt_levels) {
  if (img_levels != txt_levels)
    throw ConfigError("image has " + std::to_string(img_levels) + " levels, text has " +
                      std::to_string(txt_levels));
}

}  // namespace

Real level_similarity(const Mat& V, const Mat& W, const AlignmentConfig& cfg,
                      std::vector<LevelAttention>* atts, int level_label) {
  if (V.rows() < 1 || W.rows() < 1) throw InputError("need at least one token on each side");
  if (V.cols() != W.cols())
    throw ShapeError("region/word dims disagree: " + V.shape_str() + " vs " + W.shape_str());
  const Mat vn = l2_normalize_rows(V, cfg.eps);
  const Mat wn = l2_normalize_rows(W, cfg.eps);
  return level_score_prenorm(V, vn, W, wn, cfg, level_label, atts);
}

Real hierarchical_similarity(const LevelledFeatures& img, const LevelledFeatures& txt,
                             const AlignmentConfig& cfg, const std::vector<int>* level_labels,
                             std::vector<LevelAttention>* atts) {
  check_level_counts(img.size(), txt.size());
  cfg.validate(img.size());
  if (level_labels && level_labels->size() != img.size())
    throw ConfigError("got " + std::to_string(level_labels->size()) + " level labels for " +
                      std::to_string(img.size()) + " levels");
  Real total = 0.0;
  for (size_t j = 0; j < img.size(); ++j) {
    if (!cfg.level_on(j)) continue;
    const int label = level_labels ? (*level_labels)[j] : static_cast<int>(j);
    total += level_similarity(img[j], txt[j], cfg, atts, label);
  }
  return total;
}

void export_attention(const std::vector<LevelAttention>& atts, std::ostream& out) {
  out << "level,query_token,candidate_token,weight\n";
  for (const auto& att : atts)
    for (int i = 0; i < att.weights.rows(); ++i)
      for (int j = 0; j < att.weights.cols(); ++j)
        out << att.level << ',' << i << ',' << j << ',' << format_real(att.weights(i, j)) << '\n';
}

void export_attention_file(const std::string& path, const std::vector<LevelAttention>& atts) {
  std::ostringstream buf;
  export_attention(atts, buf);
  atomic_write_file(path, buf.str());
}

Mat score_all_pairs(const std::vector<LevelledFeatures>& images,
                    const std::vector<LevelledFeatures>& texts, const AlignmentConfig& cfg) {
  if (images.empty() || texts.empty()) throw InputError("need at least one item on each side");
  const size_t levels = images[0].size();
  for (const auto& it : images) check_level_counts(it.size(), levels);
  for (const auto& it : texts) check_level_counts(levels, it.size());
  cfg.validate(levels);

  const auto normalize_all = [&](const std::vector<LevelledFeatures>& items) {
    std::vector<LevelledFeatures> out(items.size());
    for (size_t i = 0; i < items.size(); ++i) {
      out[i].reserve(levels);
      for (const Mat& level : items[i]) out[i].push_back(l2_normalize_rows(level, cfg.eps));
    }
    return out;
  };
  const std::vector<LevelledFeatures> img_n = normalize_all(images);
  const std::vector<LevelledFeatures> txt_n = normalize_all(texts);

  Mat scores(static_cast<int>(images.size()), static_cast<int>(texts.size()));
  for (size_t i = 0; i < images.size(); ++i)
    for (size_t j = 0; j < texts.size(); ++j) {
      Real total = 0.0;
      for (size_t l = 0; l < levels; ++l) {
        if (!cfg.level_on(l)) continue;
        total += level_score_prenorm(images[i][l], img_n[i][l], texts[j][l], txt_n[j][l], cfg,
                                     static_cast<int>(l), nullptr);
      }
      scores(static_cast<int>(i), static_cast<int>(j)) = total;
    }
  return scores;
}

namespace {

Var one_direction_var(Tape& t, Var Qn, Var S, Var Craw, const AlignmentConfig& cfg) {
  const Var sbar = t.hinge_normalize_cols(S, cfg.eps);
  const Var alpha = t.softmax_rows(sbar, cfg.lambda);
  const Var an = t.l2_normalize_rows(t.matmul(alpha, Craw), cfg.eps);
  Var s = t.sum_all(t.rowwise_dot(Qn, an));
  if (cfg.per_level_mean) s = t.affine(s, 1.0 / t.val(Qn).rows(), 0.0);
  return s;
}

}  // namespace

Var hierarchical_similarity_var(Tape& t, const std::vector<Var>& img, const std::vector<Var>& txt,
                                const AlignmentConfig& cfg) {
  check_level_counts(img.size(), txt.size());
  cfg.validate(img.size());
  Var total;
  bool first = true;
  for (size_t j = 0; j < img.size(); ++j) {
    if (!cfg.level_on(j)) continue;
    const Var vn = t.l2_normalize_rows(img[j], cfg.eps);
    const Var wn = t.l2_normalize_rows(txt[j], cfg.eps);
    Var level;
    switch (cfg.direction) {
      case Direction::I2T:
        level = one_direction_var(t, vn, t.matmul_nt(vn, wn), txt[j], cfg);
        break;
      case Direction::T2I:
        level = one_direction_var(t, wn, t.matmul_nt(wn, vn), img[j], cfg);
        break;
      case Direction::Ensemble: {
        const Var S = t.matmul_nt(vn, wn);
        const Var s1 = one_direction_var(t, vn, S, txt[j], cfg);
        const Var s2 = one_direction_var(t, wn, t.transpose(S), img[j], cfg);
        level = t.affine(t.add(s1, s2), 0.5, 0.0);
        break;
      }
    }
    total = first ? level : t.add(total, level);
    first = false;
  }
  return total;
}

}  // namespace hat
