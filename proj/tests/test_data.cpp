#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "hat/data.hpp"
#include "hat/eval.hpp"
#include "hat/features_io.hpp"
#include "hat/io_util.hpp"

using hat::Corpus;
using hat::Mat;
using hat::Real;
using hat::SyntheticSpec;

namespace {

SyntheticSpec small_spec(uint64_t seed) {
  SyntheticSpec spec;
  spec.num_pairs = 10;
  spec.vocab_size = 16;
  spec.concept_count = 9;
  spec.concepts_per_pair = 2;
  spec.captions_per_image = 1;
  spec.sentence_len_min = 4;
  spec.sentence_len_max = 6;
  spec.grid_side = 6;
  spec.patch_dim = 5;
  spec.seed = seed;
  return spec;
}

// Brute-force matcher that knows the generator's layout: each concept owns a
// fixed 2x2 block, so its activation shows up as energy in those four rows.
Real block_energy(const Mat& image, int concept_id, int side) {
  const int blocks_per_row = side / 2;
  const int block_r = 2 * (concept_id / blocks_per_row);
  const int block_c = 2 * (concept_id % blocks_per_row);
  Real sum = 0.0;
  for (int cell = 0; cell < 4; ++cell) {
    const int row = (block_r + cell / 2) * side + block_c + cell % 2;
    for (int d = 0; d < image.cols(); ++d) sum += std::abs(image(row, d));
  }
  return sum;
}

Mat concept_match_scores(const Corpus& corpus) {
  const int n = static_cast<int>(corpus.images.size());
  const int t = static_cast<int>(corpus.captions.size());
  Mat scores(n, t);
  for (int j = 0; j < t; ++j) {
    std::set<int> concepts;
    for (int token : corpus.captions[static_cast<size_t>(j)])
      if (token < corpus.spec.concept_count) concepts.insert(token);
    for (int i = 0; i < n; ++i) {
      Real s = 0.0;
      for (int c : concepts)
        s += block_energy(corpus.images[static_cast<size_t>(i)], c, corpus.spec.grid_side);
      scores(i, j) = s;
    }
  }
  return scores;
}

std::filesystem::path temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() / ("hat_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("spec validation rejects impossible recipes") {
  SyntheticSpec spec = small_spec(1);
  CHECK_NOTHROW(spec.validate());

  SyntheticSpec bad = spec;
  bad.concept_count = bad.vocab_size;  // no filler tokens left
  CHECK_THROWS_AS(bad.validate(), hat::ConfigError);

  bad = spec;
  bad.sentence_len_min = 1;  // cannot hold concepts_per_pair tokens
  CHECK_THROWS_AS(bad.validate(), hat::ConfigError);

  bad = spec;
  bad.grid_side = 5;
  CHECK_THROWS_AS(bad.validate(), hat::ConfigError);

  bad = spec;
  bad.concept_count = 10;  // a 6x6 grid only has 9 blocks
  CHECK_THROWS_AS(bad.validate(), hat::ConfigError);

  bad = spec;
  bad.noise_level = 1.5;
  CHECK_THROWS_AS(bad.validate(), hat::ConfigError);

  bad = spec;
  bad.concepts_per_pair = 9;
  bad.num_pairs = 2;  // C(9,9) = 1 < 2 distinct concept sets
  CHECK_THROWS_AS(bad.validate(), hat::ConfigError);
}

TEST_CASE("generated corpus has the declared shape") {
  const SyntheticSpec spec = small_spec(3);
  const Corpus corpus = hat::generate_corpus(spec);
  CHECK(corpus.images.size() == 10);
  CHECK(corpus.captions.size() == 10);
  CHECK_NOTHROW(corpus.gt.validate());
  for (const Mat& img : corpus.images) {
    CHECK(img.rows() == 36);
    CHECK(img.cols() == 5);
    CHECK(img.all_finite());
  }
  for (const auto& caption : corpus.captions) {
    CHECK(caption.size() >= 4);
    CHECK(caption.size() <= 6);
    int concept_tokens = 0;
    for (int token : caption) {
      CHECK(token >= 0);
      CHECK(token < spec.vocab_size);
      if (token < spec.concept_count) ++concept_tokens;
    }
    CHECK(concept_tokens == spec.concepts_per_pair);
  }
}

TEST_CASE("captions of one image share its concept set") {
  SyntheticSpec spec = small_spec(5);
  spec.captions_per_image = 3;
  const Corpus corpus = hat::generate_corpus(spec);
  for (int i = 0; i < spec.num_pairs; ++i) {
    std::set<int> first;
    for (int k = 0; k < 3; ++k) {
      std::set<int> concepts;
      for (int token : corpus.captions[static_cast<size_t>(i * 3 + k)])
        if (token < spec.concept_count) concepts.insert(token);
      if (k == 0) first = concepts;
      else CHECK(concepts == first);
    }
  }
}

TEST_CASE("concept sets are distinct across images") {
  const Corpus corpus = hat::generate_corpus(small_spec(7));
  std::set<std::set<int>> seen;
  for (const auto& caption : corpus.captions) {
    std::set<int> concepts;
    for (int token : caption)
      if (token < corpus.spec.concept_count) concepts.insert(token);
    seen.insert(concepts);
  }
  CHECK(seen.size() == 10);
}

TEST_CASE("noiseless corpus is perfectly retrievable by the concept matcher") {
  const Corpus corpus = hat::generate_corpus(small_spec(9));
  const hat::RetrievalReport report = hat::evaluate(concept_match_scores(corpus), corpus.gt);
  CHECK(report.i2t.r1 == 1.0);
  CHECK(report.t2i.r1 == 1.0);
}

TEST_CASE("full noise pushes the concept matcher to chance level") {
  Real mean_r1 = 0.0;
  const int runs = 20;
  for (int r = 0; r < runs; ++r) {
    SyntheticSpec spec = small_spec(100 + static_cast<uint64_t>(r));
    spec.noise_level = 1.0;
    const Corpus corpus = hat::generate_corpus(spec);
    const hat::RetrievalReport report = hat::evaluate(concept_match_scores(corpus), corpus.gt);
    mean_r1 += report.t2i.r1;
  }
  mean_r1 /= runs;
  // chance is 1/num_pairs = 0.1
  CHECK(mean_r1 < 0.3);
  CHECK(mean_r1 > 0.01);
}

TEST_CASE("same seed reproduces the corpus byte for byte") {
  const Corpus a = hat::generate_corpus(small_spec(11));
  const Corpus b = hat::generate_corpus(small_spec(11));
  CHECK(hat::serialize_manifest(a) == hat::serialize_manifest(b));
  CHECK(a.captions == b.captions);
  for (size_t i = 0; i < a.images.size(); ++i) CHECK(a.images[i] == b.images[i]);

  const Corpus c = hat::generate_corpus(small_spec(12));
  CHECK(a.captions != c.captions);
}

TEST_CASE("corpus round-trips through a directory bit-exactly") {
  const auto dir = temp_dir("corpus_rt");
  SyntheticSpec spec = small_spec(13);
  spec.captions_per_image = 2;
  spec.noise_level = 0.25;
  const Corpus corpus = hat::generate_corpus(spec);
  hat::write_corpus(dir.string(), corpus);

  const Corpus loaded = hat::read_corpus(dir.string());
  CHECK(loaded.spec.num_pairs == spec.num_pairs);
  CHECK(loaded.spec.noise_level == spec.noise_level);
  CHECK(loaded.spec.seed == spec.seed);
  CHECK(loaded.captions == corpus.captions);
  for (size_t i = 0; i < corpus.images.size(); ++i) CHECK(loaded.images[i] == corpus.images[i]);
  CHECK(loaded.gt.text_to_image == corpus.gt.text_to_image);
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest parser rejects unknown keys with the line number") {
  const auto dir = temp_dir("manifest_bad");
  const Corpus corpus = hat::generate_corpus(small_spec(15));
  hat::write_corpus(dir.string(), corpus);

  const auto manifest = dir / "manifest.txt";
  std::ofstream(manifest, std::ios::app) << "mystery=1\n";
  CHECK_THROWS_AS(hat::read_corpus(dir.string()), hat::ParseError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("reader rejects out-of-vocabulary tokens") {
  const auto dir = temp_dir("texts_bad");
  const Corpus corpus = hat::generate_corpus(small_spec(17));
  hat::write_corpus(dir.string(), corpus);

  std::ofstream texts(dir / "texts.txt");
  texts << "0 1 9999\n";
  for (int j = 1; j < 10; ++j) texts << "1 2 3\n";
  texts.close();
  CHECK_THROWS_AS(hat::read_corpus(dir.string()), hat::ParseError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("reader rejects a caption count mismatch") {
  const auto dir = temp_dir("count_bad");
  const Corpus corpus = hat::generate_corpus(small_spec(19));
  hat::write_corpus(dir.string(), corpus);

  std::ofstream(dir / "texts.txt") << "0 1 2\n";  // 1 caption instead of 10
  CHECK_THROWS_AS(hat::read_corpus(dir.string()), hat::ParseError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("missing directory raises an io error") {
  CHECK_THROWS_AS(hat::read_corpus("/nonexistent/hat_corpus"), hat::IoError);
}

TEST_SUITE_END();
