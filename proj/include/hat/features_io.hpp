#pragma once

#include <string>
#include <vector>

#include "hat/mat.hpp"

namespace hat {

enum class Modality : uint16_t { Image = 1, Text = 2 };

// One item = one ordered list of level matrices (tokens x dim per level).
using LevelledFeatures = std::vector<Mat>;

// Binary container for per-item, per-level feature matrices.
//
// Layout, little-endian throughout:
//   magic "HATF" | version u16 | modality u16 | item_count u32      (12 bytes)
//   per item:  level_count u32
//   per level: token_count u32 | dim u32 | token_count*dim binary64
//
// The parser rejects bad magic, unknown versions, truncation, oversized
// declared counts, and trailing bytes, each with the byte offset.
struct FeatureFile {
  Modality modality = Modality::Image;
  std::vector<LevelledFeatures> items;
};

std::string serialize_features(const FeatureFile& f);
FeatureFile parse_features(const std::string& blob, const std::string& source);

void write_features(const std::string& path, const FeatureFile& f);
FeatureFile read_features(const std::string& path);

}  // namespace hat
