#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "hat/mat.hpp"
#include "hat/tape.hpp"

namespace hat {

// Which training phase a parameter belongs to: encoder weights stay frozen
// for the first freeze_epochs, alignment projections always train.
enum class ParamGroup { Encoder, Alignment };

struct ParamEntry {
  std::string name;
  Mat value;
  ParamGroup group;
};

// Ordered, named parameter collection. Creation order is fixed by the model
// builder, which makes seeded initialization and checkpoints reproducible.
class ParamStore {
public:
  int add(std::string name, Mat value, ParamGroup group);

  int index_of(const std::string& name) const;  // -1 when absent
  int size() const { return static_cast<int>(entries_.size()); }

  const ParamEntry& entry(int i) const { return entries_[static_cast<size_t>(i)]; }
  Mat& value(int i) { return entries_[static_cast<size_t>(i)].value; }
  const Mat& value(int i) const { return entries_[static_cast<size_t>(i)].value; }
  const std::vector<ParamEntry>& entries() const { return entries_; }

  // One leaf per parameter, in store order. Gradients are requested per
  // group, which is how encoder freezing is implemented.
  std::vector<Var> bind(Tape& tape, bool train_encoders, bool train_alignment) const;

  // Byte-for-byte serialization of all values, used by the freeze contract
  // tests and determinism checks.
  std::string fingerprint() const;

private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, int> index_;
};

// Checkpoint blob: magic "HATP", version, an embedded configuration text, a
// manifest of (name, group, rows, cols, value byte offset), then all values
// as little-endian binary64 in manifest order.
std::string serialize_checkpoint(const ParamStore& params, const std::string& config_text);

struct Checkpoint {
  std::string config_text;
  ParamStore params;
};

Checkpoint parse_checkpoint(const std::string& blob, const std::string& source);

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& config_text);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hat
