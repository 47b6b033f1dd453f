#include "hat/params.hpp"

#include "hat/io_util.hpp"

namespace hat {

namespace {
constexpr uint16_t kCheckpointVersion = 1;
constexpr size_t kMaxParams = 1u << 20;
constexpr size_t kMaxNameLen = 1u << 12;
constexpr size_t kMaxConfigLen = 1u << 20;
}  // namespace

int ParamStore::add(std::string name, Mat value, ParamGroup group) {
  if (index_of(name) >= 0) throw InputError("duplicate parameter name " + name);
  const int idx = static_cast<int>(entries_.size());
  index_.emplace(name, idx);
  entries_.push_back(ParamEntry{std::move(name), std::move(value), group});
  return idx;
}

int ParamStore::index_of(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

std::vector<Var> ParamStore::bind(Tape& tape, bool train_encoders, bool train_alignment) const {
  std::vector<Var> vars;
  vars.reserve(entries_.size());
  for (const auto& e : entries_) {
    const bool train = e.group == ParamGroup::Encoder ? train_encoders : train_alignment;
    vars.push_back(tape.leaf(e.value, train));
  }
  return vars;
}

std::string ParamStore::fingerprint() const {
  std::string buf;
  for (const auto& e : entries_) {
    buf += e.name;
    buf.push_back('\0');
    for (Real x : e.value.raw()) put_f64(buf, x);
  }
  return buf;
}

std::string serialize_checkpoint(const ParamStore& params, const std::string& config_text) {
  std::string buf = "HATP";
  put_u16(buf, kCheckpointVersion);
  put_u32(buf, static_cast<uint32_t>(config_text.size()));
  buf += config_text;
  put_u32(buf, static_cast<uint32_t>(params.size()));
  // Values start after the manifest; manifest entry size is fixed except for
  // the name, so lay out offsets in a first pass.
  size_t manifest_size = 0;
  for (const auto& e : params.entries()) manifest_size += 4 + e.name.size() + 1 + 4 + 4 + 8;
  uint64_t offset = buf.size() + manifest_size;
  for (const auto& e : params.entries()) {
    put_u32(buf, static_cast<uint32_t>(e.name.size()));
    buf += e.name;
    buf.push_back(e.group == ParamGroup::Encoder ? 'E' : 'A');
    put_u32(buf, static_cast<uint32_t>(e.value.rows()));
    put_u32(buf, static_cast<uint32_t>(e.value.cols()));
    put_u64(buf, offset);
    offset += e.value.size() * 8;
  }
  for (const auto& e : params.entries())
    for (Real x : e.value.raw()) put_f64(buf, x);
  return buf;
}

Checkpoint parse_checkpoint(const std::string& blob, const std::string& source) {
  ByteReader r(blob, source);
  if (r.bytes(4) != "HATP") r.fail("bad magic, expected HATP");
  const uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    r.fail("unsupported version " + std::to_string(version));
  const uint32_t config_len = r.u32();
  if (config_len > kMaxConfigLen) r.fail("config block length " + std::to_string(config_len) + " too large");
  Checkpoint ck;
  ck.config_text = r.bytes(config_len);
  const uint32_t count = r.u32();
  if (count > kMaxParams) r.fail("parameter count " + std::to_string(count) + " too large");
  struct Row {
    std::string name;
    ParamGroup group;
    uint32_t rows, cols;
    uint64_t offset;
  };
  std::vector<Row> manifest;
  manifest.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = r.u32();
    if (name_len == 0 || name_len > kMaxNameLen)
      r.fail("parameter name length " + std::to_string(name_len) + " out of range");
    Row row;
    row.name = r.bytes(name_len);
    const std::string tag = r.bytes(1);
    if (tag != "E" && tag != "A") r.fail("unknown parameter group tag '" + tag + "'");
    row.group = tag == "E" ? ParamGroup::Encoder : ParamGroup::Alignment;
    row.rows = r.u32();
    row.cols = r.u32();
    row.offset = r.u64();
    manifest.push_back(std::move(row));
  }
  // Values must sit exactly where the manifest says, in order, with no gaps.
  for (const auto& row : manifest) {
    if (row.offset != r.offset())
      r.fail("value offset for " + row.name + " declares " + std::to_string(row.offset));
    const uint64_t n = static_cast<uint64_t>(row.rows) * row.cols;
    if (n > (1ull << 28)) r.fail("parameter " + row.name + " unreasonably large");
    Mat m(static_cast<int>(row.rows), static_cast<int>(row.cols));
    for (uint64_t i = 0; i < n; ++i) m.data()[i] = r.f64();
    if (ck.params.index_of(row.name) >= 0) r.fail("duplicate parameter " + row.name);
    ck.params.add(row.name, std::move(m), row.group);
  }
  r.expect_end();
  return ck;
}

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& config_text) {
  atomic_write_file(path, serialize_checkpoint(params, config_text));
}

Checkpoint load_checkpoint(const std::string& path) {
  return parse_checkpoint(read_file(path), path);
}

}  // namespace hat
