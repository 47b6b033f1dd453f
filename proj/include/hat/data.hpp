#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hat/eval.hpp"
#include "hat/mat.hpp"

namespace hat {

// Recipe for a paired synthetic corpus. Every image is a patch-token grid
// carrying a distinct subset of latent concepts; each concept plants a fixed
// signature in one 2x2 block of the grid and a dedicated token in every
// caption. noise_level blends the grid toward white noise and flips caption
// tokens with the same probability, so 0 is perfectly retrievable and 1 is
// chance level.
struct SyntheticSpec {
  int num_pairs = 32;           // paired images in the corpus
  int vocab_size = 64;          // tokens < concept_count are concept words
  int concept_count = 12;
  int concepts_per_pair = 3;
  int captions_per_image = 5;   // noisy paraphrases sharing the concept set
  Real noise_level = 0.0;
  int sentence_len_min = 6;
  int sentence_len_max = 10;
  int grid_side = 16;
  int patch_dim = 48;
  uint64_t seed = 1;

  void validate() const;
};

struct Corpus {
  SyntheticSpec spec;
  std::vector<Mat> images;  // grid_side^2 x patch_dim patch grids
  std::vector<std::vector<int>> captions;
  GroundTruth gt;
};

// Pure function of the spec: the same spec reproduces the same corpus byte
// for byte.
Corpus generate_corpus(const SyntheticSpec& spec);

// On-disk layout under a directory:
//   manifest.txt  spec as key=value lines, then "pairs:" and one
//                 "text_id image_id" line per caption
//   images.hatf   feature container, one single-level item per image
//   texts.txt     one caption per line, space-separated token ids
void write_corpus(const std::string& dir, const Corpus& corpus);
Corpus read_corpus(const std::string& dir);

std::string serialize_manifest(const Corpus& corpus);

}  // namespace hat
