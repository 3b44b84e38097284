#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include "mdfn/config.hpp"
#include "mdfn/dialogue.hpp"
#include "mdfn/model.hpp"

namespace mdfn {

// Self-contained trained model: configs and vocabulary travel in the header
// so a checkpoint alone can score data.
//
// Layout: 8-byte magic "MDFNCKPT", little-endian u32 header length, UTF-8
// JSON header (format version, config hash, step, seed, metric snapshot,
// configs, vocab words, parameter manifest), then each trainable parameter's
// values as little-endian f32 in sorted-name order.
struct CheckpointMeta {
  int step = 0;
  uint64_t seed = 0;
  std::map<std::string, double> metrics;
};

void save_checkpoint(const std::string& path, const MdfnModel<float>& model,
                     const ModelSpecConfig& spec, const Vocab& vocab,
                     const CheckpointMeta& meta);

struct LoadedModel {
  std::unique_ptr<MdfnModel<float>> model;
  ModelSpecConfig spec;
  Vocab vocab;
  CheckpointMeta meta;
};

LoadedModel load_checkpoint(const std::string& path);

}  // namespace mdfn
