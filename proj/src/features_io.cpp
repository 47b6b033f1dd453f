#include "hat/features_io.hpp"

#include "hat/io_util.hpp"

namespace hat {

namespace {
constexpr uint16_t kFeatureVersion = 1;
constexpr uint32_t kMaxItems = 1u << 24;
constexpr uint32_t kMaxLevels = 64;
constexpr uint32_t kMaxTokens = 1u << 20;
constexpr uint32_t kMaxDim = 1u << 20;
}  // namespace

std::string serialize_features(const FeatureFile& f) {
  std::string buf = "HATF";
  put_u16(buf, kFeatureVersion);
  put_u16(buf, static_cast<uint16_t>(f.modality));
  put_u32(buf, static_cast<uint32_t>(f.items.size()));
  for (const auto& item : f.items) {
    put_u32(buf, static_cast<uint32_t>(item.size()));
    for (const Mat& level : item) {
      put_u32(buf, static_cast<uint32_t>(level.rows()));
      put_u32(buf, static_cast<uint32_t>(level.cols()));
      for (Real x : level.raw()) put_f64(buf, x);
    }
  }
  return buf;
}

FeatureFile parse_features(const std::string& blob, const std::string& source) {
  ByteReader r(blob, source);
  if (r.bytes(4) != "HATF") r.fail("bad magic, expected HATF");
  const uint16_t version = r.u16();
  if (version != kFeatureVersion) r.fail("unsupported version " + std::to_string(version));
  const uint16_t modality = r.u16();
  if (modality != static_cast<uint16_t>(Modality::Image) &&
      modality != static_cast<uint16_t>(Modality::Text))
    r.fail("unknown modality tag " + std::to_string(modality));
  const uint32_t item_count = r.u32();
  if (item_count > kMaxItems) r.fail("item count " + std::to_string(item_count) + " too large");
  FeatureFile f;
  f.modality = static_cast<Modality>(modality);
  f.items.reserve(item_count);
  for (uint32_t i = 0; i < item_count; ++i) {
    const uint32_t level_count = r.u32();
    if (level_count > kMaxLevels)
      r.fail("item " + std::to_string(i) + " declares " + std::to_string(level_count) + " levels");
    LevelledFeatures item;
    item.reserve(level_count);
    for (uint32_t l = 0; l < level_count; ++l) {
      const uint32_t tokens = r.u32();
      const uint32_t dim = r.u32();
      if (tokens == 0 || tokens > kMaxTokens)
        r.fail("item " + std::to_string(i) + " level " + std::to_string(l) + " token count " +
               std::to_string(tokens) + " out of range");
      if (dim == 0 || dim > kMaxDim)
        r.fail("item " + std::to_string(i) + " level " + std::to_string(l) + " dim " +
               std::to_string(dim) + " out of range");
      const uint64_t n = static_cast<uint64_t>(tokens) * dim;
      if (n * 8 > r.remaining())
        r.fail("item " + std::to_string(i) + " level " + std::to_string(l) + " declares " +
               std::to_string(n * 8) + " value bytes but only " + std::to_string(r.remaining()) +
               " remain");
      Mat m(static_cast<int>(tokens), static_cast<int>(dim));
      for (uint64_t k = 0; k < n; ++k) m.data()[k] = r.f64();
      item.push_back(std::move(m));
    }
    f.items.push_back(std::move(item));
  }
  r.expect_end();
  return f;
}

void write_features(const std::string& path, const FeatureFile& f) {
  atomic_write_file(path, serialize_features(f));
}

FeatureFile read_features(const std::string& path) {
  return parse_features(read_file(path), path);
}

}  // namespace hat
