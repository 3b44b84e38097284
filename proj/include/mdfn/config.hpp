#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdfn/dialogue.hpp"
#include "mdfn/encoder.hpp"
#include "mdfn/model.hpp"
#include "mdfn/optimizer.hpp"

namespace mdfn {

// Everything needed to rebuild a model: head config, encoder config, and
// sequence-assembly limits. One JSON document with "model", "encoder",
// "assembly" sections; omitted fields keep their defaults.
struct ModelSpecConfig {
  MdfnConfig model;
  EncoderConfig encoder;
  AssemblyConfig assembly;
};

struct SynthConfig {
  std::string task = "speaker_echo";  // or "last_utterance_echo"
  int vocab_size = 200;
  int n_dialogues = 5000;
  int turns_lo = 2, turns_hi = 5;
  int utt_len_lo = 2, utt_len_hi = 4;
  int n_candidates = 4;
  uint64_t seed = 1;
};

std::string model_spec_to_json(const ModelSpecConfig& spec);
ModelSpecConfig model_spec_from_json(const std::string& text);
ModelSpecConfig load_model_spec(const std::string& path);

std::string optim_to_json(const OptimConfig& cfg);
OptimConfig optim_from_json(const std::string& text);
OptimConfig load_optim_config(const std::string& path);

SynthConfig synth_from_json(const std::string& text);
SynthConfig load_synth_config(const std::string& path);

// Named configuration rows from the ablation studies. "+UA-Mask" and
// "+SA-Mask" keep only one channel; "-Gate" and "-Original Info" simplify
// the fusion; the rest switch the utterance aggregator.
extern const char* const kAblationPresets[7];
void apply_ablation_preset(ModelSpecConfig& spec, const std::string& name);

// Stable hex digest of the canonical spec serialization; checked on
// checkpoint load.
std::string config_hash(const ModelSpecConfig& spec);

const char* aggregator_name(Aggregator a);
const char* channels_name(Channels c);
const char* score_mode_name(ScoreMode m);

}  // namespace mdfn
