#include "hat/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

#include "hat/errors.hpp"
#include "hat/features_io.hpp"
#include "hat/io_util.hpp"
#include "hat/rng.hpp"

namespace hat {

void SyntheticSpec::validate() const {
  if (num_pairs < 1) throw ConfigError("num_pairs must be at least 1");
  if (concept_count < 1) throw ConfigError("concept_count must be at least 1");
  if (vocab_size <= concept_count)
    throw ConfigError("vocab_size must exceed concept_count so filler tokens exist");
  if (concepts_per_pair < 1 || concepts_per_pair > concept_count)
    throw ConfigError("concepts_per_pair must lie in [1, concept_count]");
  if (captions_per_image < 1) throw ConfigError("captions_per_image must be at least 1");
  if (!std::isfinite(noise_level) || noise_level < 0 || noise_level > 1)
    throw ConfigError("noise_level must lie in [0, 1]");
  if (sentence_len_min < concepts_per_pair)
    throw ConfigError("sentences of length " + std::to_string(sentence_len_min) +
                      " cannot hold " + std::to_string(concepts_per_pair) + " concept tokens");
  if (sentence_len_max < sentence_len_min)
    throw ConfigError("sentence_len_max must be >= sentence_len_min");
  if (grid_side < 2 || grid_side % 2 != 0) throw ConfigError("grid_side must be even and >= 2");
  if (patch_dim < 1) throw ConfigError("patch_dim must be at least 1");
  const int blocks = (grid_side / 2) * (grid_side / 2);
  if (concept_count > blocks)
    throw ConfigError("grid holds " + std::to_string(blocks) + " concept blocks, need " +
                      std::to_string(concept_count));
  // enough distinct concept subsets to give every image its own
  double subsets = 1;
  for (int i = 0; i < concepts_per_pair && subsets < 1e15; ++i)
    subsets = subsets * (concept_count - i) / (i + 1);
  if (subsets < static_cast<double>(num_pairs))
    throw ConfigError("only " + std::to_string(static_cast<long long>(subsets)) +
                      " distinct concept subsets exist, need " + std::to_string(num_pairs));
}

namespace {

// stream offsets keeping the independent draws of one corpus apart
constexpr uint64_t kStreamSubsets = 1;
constexpr uint64_t kStreamConcept = 500;
constexpr uint64_t kStreamImage = 1000000;
constexpr uint64_t kStreamCaption = 2000000;

std::vector<int> draw_distinct(Rng& rng, int pool_size, int count) {
  std::vector<int> pool(static_cast<size_t>(pool_size));
  std::iota(pool.begin(), pool.end(), 0);
  for (int m = 0; m < count; ++m) {
    const int j = m + rng.uniform_int(pool_size - m);
    std::swap(pool[static_cast<size_t>(m)], pool[static_cast<size_t>(j)]);
  }
  pool.resize(static_cast<size_t>(count));
  return pool;
}

std::vector<std::vector<int>> draw_concept_sets(const SyntheticSpec& s) {
  Rng rng(s.seed, kStreamSubsets);
  std::vector<std::vector<int>> sets;
  std::set<std::vector<int>> seen;
  const long long max_attempts = 1000LL * s.num_pairs + 10000;
  long long attempts = 0;
  while (static_cast<int>(sets.size()) < s.num_pairs) {
    if (++attempts > max_attempts)
      throw ConfigError("could not find " + std::to_string(s.num_pairs) +
                        " distinct concept subsets; spec is too tight");
    std::vector<int> subset = draw_distinct(rng, s.concept_count, s.concepts_per_pair);
    std::sort(subset.begin(), subset.end());
    if (seen.insert(subset).second) sets.push_back(std::move(subset));
  }
  return sets;
}

}  // namespace

Corpus generate_corpus(const SyntheticSpec& spec) {
  spec.validate();
  Corpus corpus;
  corpus.spec = spec;

  // one fixed signature per concept: four unit rows, one per cell of its block
  std::vector<Mat> signatures;
  for (int c = 0; c < spec.concept_count; ++c) {
    Rng rng(spec.seed, kStreamConcept + static_cast<uint64_t>(c));
    signatures.push_back(l2_normalize_rows(rng.normal_mat(4, spec.patch_dim), 1e-12));
  }

  const std::vector<std::vector<int>> sets = draw_concept_sets(spec);
  const int side = spec.grid_side;
  const int blocks_per_row = side / 2;

  for (int i = 0; i < spec.num_pairs; ++i) {
    Mat signal(side * side, spec.patch_dim);
    for (int c : sets[static_cast<size_t>(i)]) {
      const int block_r = 2 * (c / blocks_per_row);
      const int block_c = 2 * (c % blocks_per_row);
      for (int cell = 0; cell < 4; ++cell) {
        const int r = block_r + cell / 2;
        const int col = block_c + cell % 2;
        for (int d = 0; d < spec.patch_dim; ++d)
          signal(r * side + col, d) = signatures[static_cast<size_t>(c)](cell, d);
      }
    }
    Rng rng(spec.seed, kStreamImage + static_cast<uint64_t>(i));
    const Mat noise = rng.normal_mat(side * side, spec.patch_dim);
    Mat image(side * side, spec.patch_dim);
    for (int r = 0; r < image.rows(); ++r)
      for (int d = 0; d < spec.patch_dim; ++d)
        image(r, d) = (1.0 - spec.noise_level) * signal(r, d) + spec.noise_level * noise(r, d);
    corpus.images.push_back(std::move(image));
  }

  const int filler_range = spec.vocab_size - spec.concept_count;
  for (int i = 0; i < spec.num_pairs; ++i)
    for (int k = 0; k < spec.captions_per_image; ++k) {
      const int j = i * spec.captions_per_image + k;
      Rng rng(spec.seed, kStreamCaption + static_cast<uint64_t>(j));
      const int len =
          spec.sentence_len_min + rng.uniform_int(spec.sentence_len_max - spec.sentence_len_min + 1);
      std::vector<int> tokens(static_cast<size_t>(len));
      for (int& t : tokens) t = spec.concept_count + rng.uniform_int(filler_range);
      const std::vector<int> positions = draw_distinct(rng, len, spec.concepts_per_pair);
      for (int m = 0; m < spec.concepts_per_pair; ++m)
        tokens[static_cast<size_t>(positions[static_cast<size_t>(m)])] =
            sets[static_cast<size_t>(i)][static_cast<size_t>(m)];
      for (int& t : tokens)
        if (rng.uniform01() < spec.noise_level) t = rng.uniform_int(spec.vocab_size);
      corpus.captions.push_back(std::move(tokens));
    }

  corpus.gt = GroundTruth::contiguous(spec.num_pairs, spec.captions_per_image);
  return corpus;
}

namespace {

constexpr int kManifestVersion = 1;

void append_kv(std::string& out, const std::string& key, const std::string& value) {
  out += key;
  out += '=';
  out += value;
  out += '\n';
}

}  // namespace

std::string serialize_manifest(const Corpus& corpus) {
  const SyntheticSpec& s = corpus.spec;
  std::string out;
  append_kv(out, "version", std::to_string(kManifestVersion));
  append_kv(out, "num_pairs", std::to_string(s.num_pairs));
  append_kv(out, "vocab_size", std::to_string(s.vocab_size));
  append_kv(out, "concept_count", std::to_string(s.concept_count));
  append_kv(out, "concepts_per_pair", std::to_string(s.concepts_per_pair));
  append_kv(out, "captions_per_image", std::to_string(s.captions_per_image));
  append_kv(out, "noise_level", format_real(s.noise_level));
  append_kv(out, "sentence_len_min", std::to_string(s.sentence_len_min));
  append_kv(out, "sentence_len_max", std::to_string(s.sentence_len_max));
  append_kv(out, "grid_side", std::to_string(s.grid_side));
  append_kv(out, "patch_dim", std::to_string(s.patch_dim));
  append_kv(out, "seed", std::to_string(s.seed));
  out += "pairs:\n";
  for (int t = 0; t < corpus.gt.num_texts(); ++t)
    out += std::to_string(t) + " " +
           std::to_string(corpus.gt.text_to_image[static_cast<size_t>(t)]) + "\n";
  return out;
}

namespace {

struct ManifestData {
  SyntheticSpec spec;
  GroundTruth gt;
};

ManifestData parse_manifest(const std::string& text, const std::string& source) {
  ManifestData md;
  SyntheticSpec& s = md.spec;
  std::set<std::string> seen;
  std::vector<std::pair<int, int>> pairs;
  bool in_pairs = false;

  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    if (line.empty()) continue;
    if (line == "pairs:") {
      if (in_pairs) throw ParseError(where + ": duplicate pairs section");
      in_pairs = true;
      continue;
    }
    if (in_pairs) {
      std::istringstream fields(line);
      long long t = -1, i = -1;
      if (!(fields >> t >> i) || !(fields >> std::ws).eof())
        throw ParseError(where + ": expected 'text_id image_id'");
      if (t != static_cast<long long>(pairs.size()))
        throw ParseError(where + ": text ids must be sequential, expected " +
                         std::to_string(pairs.size()));
      pairs.emplace_back(static_cast<int>(t), static_cast<int>(i));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (!seen.insert(key).second) throw ParseError(where + ": duplicate key '" + key + "'");
    if (key == "version") {
      if (parse_int(value, where) != kManifestVersion)
        throw ParseError(where + ": unsupported manifest version " + value);
    } else if (key == "num_pairs") {
      s.num_pairs = static_cast<int>(parse_int(value, where));
    } else if (key == "vocab_size") {
      s.vocab_size = static_cast<int>(parse_int(value, where));
    } else if (key == "concept_count") {
      s.concept_count = static_cast<int>(parse_int(value, where));
    } else if (key == "concepts_per_pair") {
      s.concepts_per_pair = static_cast<int>(parse_int(value, where));
    } else if (key == "captions_per_image") {
      s.captions_per_image = static_cast<int>(parse_int(value, where));
    } else if (key == "noise_level") {
      s.noise_level = parse_real(value, where);
    } else if (key == "sentence_len_min") {
      s.sentence_len_min = static_cast<int>(parse_int(value, where));
    } else if (key == "sentence_len_max") {
      s.sentence_len_max = static_cast<int>(parse_int(value, where));
    } else if (key == "grid_side") {
      s.grid_side = static_cast<int>(parse_int(value, where));
    } else if (key == "patch_dim") {
      s.patch_dim = static_cast<int>(parse_int(value, where));
    } else if (key == "seed") {
      s.seed = static_cast<uint64_t>(parse_int(value, where));
    } else {
      throw ParseError(where + ": unknown key '" + key + "'");
    }
  }
  const char* required[] = {"version",          "num_pairs",         "vocab_size",
                            "concept_count",    "concepts_per_pair", "captions_per_image",
                            "noise_level",      "sentence_len_min",  "sentence_len_max",
                            "grid_side",        "patch_dim",         "seed"};
  for (const char* key : required)
    if (!seen.count(key)) throw ParseError(source + ": missing key '" + key + "'");
  if (!in_pairs) throw ParseError(source + ": missing pairs section");
  if (static_cast<int>(pairs.size()) != s.num_pairs * s.captions_per_image)
    throw ParseError(source + ": expected " + std::to_string(s.num_pairs * s.captions_per_image) +
                     " pair lines, got " + std::to_string(pairs.size()));

  md.gt.image_to_texts.resize(static_cast<size_t>(s.num_pairs));
  for (const auto& [t, i] : pairs) {
    if (i < 0 || i >= s.num_pairs)
      throw ParseError(source + ": text " + std::to_string(t) + " references image " +
                       std::to_string(i) + " outside [0, " + std::to_string(s.num_pairs) + ")");
    md.gt.text_to_image.push_back(i);
    md.gt.image_to_texts[static_cast<size_t>(i)].push_back(t);
  }
  md.gt.validate();
  return md;
}

}  // namespace

void write_corpus(const std::string& dir, const Corpus& corpus) {
  corpus.spec.validate();
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);

  atomic_write_file((base / "manifest.txt").string(), serialize_manifest(corpus));

  std::string texts;
  for (const auto& caption : corpus.captions) {
    for (size_t i = 0; i < caption.size(); ++i) {
      if (i > 0) texts += ' ';
      texts += std::to_string(caption[i]);
    }
    texts += '\n';
  }
  atomic_write_file((base / "texts.txt").string(), texts);

  FeatureFile images;
  images.modality = Modality::Image;
  for (const Mat& grid : corpus.images) images.items.push_back(LevelledFeatures{grid});
  write_features((base / "images.hatf").string(), images);
}

Corpus read_corpus(const std::string& dir) {
  const std::filesystem::path base(dir);
  const std::string manifest_path = (base / "manifest.txt").string();
  ManifestData md = parse_manifest(read_file(manifest_path), manifest_path);
  md.spec.validate();

  Corpus corpus;
  corpus.spec = md.spec;
  corpus.gt = std::move(md.gt);

  const std::string texts_path = (base / "texts.txt").string();
  const std::string texts = read_file(texts_path);
  std::istringstream lines(texts);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const std::string where = texts_path + ":" + std::to_string(line_no);
    std::vector<int> caption;
    std::istringstream fields(line);
    std::string field;
    while (fields >> field) {
      const long long token = parse_int(field, where);
      if (token < 0 || token >= corpus.spec.vocab_size)
        throw ParseError(where + ": token " + std::to_string(token) + " outside vocabulary of " +
                         std::to_string(corpus.spec.vocab_size));
      caption.push_back(static_cast<int>(token));
    }
    if (caption.empty()) throw ParseError(where + ": empty caption");
    corpus.captions.push_back(std::move(caption));
  }
  if (static_cast<int>(corpus.captions.size()) != corpus.gt.num_texts())
    throw ParseError(texts_path + ": expected " + std::to_string(corpus.gt.num_texts()) +
                     " captions, got " + std::to_string(corpus.captions.size()));

  const std::string images_path = (base / "images.hatf").string();
  FeatureFile images = read_features(images_path);
  if (images.modality != Modality::Image)
    throw ParseError(images_path + ": expected image modality");
  if (static_cast<int>(images.items.size()) != corpus.spec.num_pairs)
    throw ParseError(images_path + ": expected " + std::to_string(corpus.spec.num_pairs) +
                     " images, got " + std::to_string(images.items.size()));
  const int tokens = corpus.spec.grid_side * corpus.spec.grid_side;
  for (size_t i = 0; i < images.items.size(); ++i) {
    LevelledFeatures& item = images.items[i];
    if (item.size() != 1)
      throw ParseError(images_path + ": image " + std::to_string(i) +
                       " must have exactly one level");
    if (item[0].rows() != tokens || item[0].cols() != corpus.spec.patch_dim)
      throw ParseError(images_path + ": image " + std::to_string(i) + " has shape " +
                       item[0].shape_str() + ", manifest promises " + std::to_string(tokens) +
                       "x" + std::to_string(corpus.spec.patch_dim));
    corpus.images.push_back(std::move(item[0]));
  }
  return corpus;
}

}  // namespace hat
