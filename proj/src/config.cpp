#include "mdfn/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mdfn/error.hpp"
#include "mdfn/rng.hpp"

namespace mdfn {

using nlohmann::json;

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json parse(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded())
    fail(ErrorCode::ConfigError, std::string("invalid JSON in ") + what);
  return j;
}

Aggregator aggregator_from(const std::string& s) {
  if (s == "max_pool") return Aggregator::MaxPool;
  if (s == "mean_pool") return Aggregator::MeanPool;
  if (s == "cnn3") return Aggregator::Cnn3;
  if (s == "cnn_multi") return Aggregator::CnnMulti;
  fail(ErrorCode::ConfigError, "unknown aggregator: " + s);
}

Channels channels_from(const std::string& s) {
  if (s == "both") return Channels::Both;
  if (s == "utterance_only") return Channels::UtteranceOnly;
  if (s == "speaker_only") return Channels::SpeakerOnly;
  if (s == "none") return Channels::None;
  fail(ErrorCode::ConfigError, "unknown channels setting: " + s);
}

ScoreMode mode_from(const std::string& s) {
  if (s == "binary") return ScoreMode::Binary;
  if (s == "multi_choice") return ScoreMode::MultiChoice;
  fail(ErrorCode::ConfigError, "unknown score mode: " + s);
}

EncoderMode enc_mode_from(const std::string& s) {
  if (s == "trainable") return EncoderMode::Trainable;
  if (s == "file_backed") return EncoderMode::FileBacked;
  fail(ErrorCode::ConfigError, "unknown encoder mode: " + s);
}

template <typename T>
void pick(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json model_to_json_obj(const MdfnConfig& m) {
  return json{{"d", m.d},
              {"heads", m.heads},
              {"n_decoupling", m.n_decoupling},
              {"n_bigru_layers", m.n_bigru_layers},
              {"aggregator", aggregator_name(m.aggregator)},
              {"fuse_gate", m.fuse_gate},
              {"fuse_original", m.fuse_original},
              {"channels", channels_name(m.channels)},
              {"mode", score_mode_name(m.mode)}};
}

json encoder_to_json_obj(const EncoderConfig& e) {
  return json{{"vocab_size", e.vocab_size},
              {"d", e.d},
              {"layers", e.layers},
              {"heads", e.heads},
              {"max_len", e.max_len},
              {"ffn", e.ffn},
              {"mode", e.mode == EncoderMode::Trainable ? "trainable" : "file_backed"},
              {"embedding_file", e.embedding_file}};
}

json assembly_to_json_obj(const AssemblyConfig& a) {
  return json{{"max_len", a.max_len}, {"max_utterances", a.max_utterances}};
}

void model_from_json_obj(const json& j, MdfnConfig& m) {
  pick(j, "d", m.d);
  pick(j, "heads", m.heads);
  pick(j, "n_decoupling", m.n_decoupling);
  pick(j, "n_bigru_layers", m.n_bigru_layers);
  if (j.contains("aggregator")) m.aggregator = aggregator_from(j.at("aggregator"));
  pick(j, "fuse_gate", m.fuse_gate);
  pick(j, "fuse_original", m.fuse_original);
  if (j.contains("channels")) m.channels = channels_from(j.at("channels"));
  if (j.contains("mode")) m.mode = mode_from(j.at("mode"));
}

void encoder_from_json_obj(const json& j, EncoderConfig& e) {
  pick(j, "vocab_size", e.vocab_size);
  pick(j, "d", e.d);
  pick(j, "layers", e.layers);
  pick(j, "heads", e.heads);
  pick(j, "max_len", e.max_len);
  pick(j, "ffn", e.ffn);
  if (j.contains("mode")) e.mode = enc_mode_from(j.at("mode"));
  pick(j, "embedding_file", e.embedding_file);
}

void assembly_from_json_obj(const json& j, AssemblyConfig& a) {
  pick(j, "max_len", a.max_len);
  pick(j, "max_utterances", a.max_utterances);
}

}  // namespace

const char* aggregator_name(Aggregator a) {
  switch (a) {
    case Aggregator::MaxPool: return "max_pool";
    case Aggregator::MeanPool: return "mean_pool";
    case Aggregator::Cnn3: return "cnn3";
    case Aggregator::CnnMulti: return "cnn_multi";
  }
  return "max_pool";
}

const char* channels_name(Channels c) {
  switch (c) {
    case Channels::Both: return "both";
    case Channels::UtteranceOnly: return "utterance_only";
    case Channels::SpeakerOnly: return "speaker_only";
    case Channels::None: return "none";
  }
  return "both";
}

const char* score_mode_name(ScoreMode m) {
  return m == ScoreMode::Binary ? "binary" : "multi_choice";
}

std::string model_spec_to_json(const ModelSpecConfig& spec) {
  json j{{"model", model_to_json_obj(spec.model)},
         {"encoder", encoder_to_json_obj(spec.encoder)},
         {"assembly", assembly_to_json_obj(spec.assembly)}};
  return j.dump(2);
}

ModelSpecConfig model_spec_from_json(const std::string& text) {
  json j = parse(text, "model spec");
  ModelSpecConfig spec;
  if (j.contains("model")) model_from_json_obj(j.at("model"), spec.model);
  if (j.contains("encoder")) encoder_from_json_obj(j.at("encoder"), spec.encoder);
  if (j.contains("assembly")) assembly_from_json_obj(j.at("assembly"), spec.assembly);
  return spec;
}

ModelSpecConfig load_model_spec(const std::string& path) {
  return model_spec_from_json(read_text_file(path));
}

std::string optim_to_json(const OptimConfig& cfg) {
  json j{{"lr", cfg.lr},
         {"beta1", cfg.beta1},
         {"beta2", cfg.beta2},
         {"eps", cfg.eps},
         {"weight_decay", cfg.weight_decay},
         {"epochs", cfg.epochs},
         {"batch_size", cfg.batch_size},
         {"seed", cfg.seed},
         {"early_stop_r1", cfg.early_stop_r1}};
  return j.dump(2);
}

OptimConfig optim_from_json(const std::string& text) {
  json j = parse(text, "optimizer config");
  OptimConfig cfg;
  pick(j, "lr", cfg.lr);
  pick(j, "beta1", cfg.beta1);
  pick(j, "beta2", cfg.beta2);
  pick(j, "eps", cfg.eps);
  pick(j, "weight_decay", cfg.weight_decay);
  pick(j, "epochs", cfg.epochs);
  pick(j, "batch_size", cfg.batch_size);
  pick(j, "seed", cfg.seed);
  pick(j, "early_stop_r1", cfg.early_stop_r1);
  return cfg;
}

OptimConfig load_optim_config(const std::string& path) {
  return optim_from_json(read_text_file(path));
}

SynthConfig synth_from_json(const std::string& text) {
  json j = parse(text, "synthesis config");
  SynthConfig cfg;
  pick(j, "task", cfg.task);
  pick(j, "vocab_size", cfg.vocab_size);
  pick(j, "n_dialogues", cfg.n_dialogues);
  if (j.contains("turns")) {
    cfg.turns_lo = j.at("turns").at(0).get<int>();
    cfg.turns_hi = j.at("turns").at(1).get<int>();
  }
  if (j.contains("utterance_len")) {
    cfg.utt_len_lo = j.at("utterance_len").at(0).get<int>();
    cfg.utt_len_hi = j.at("utterance_len").at(1).get<int>();
  }
  pick(j, "n_candidates", cfg.n_candidates);
  pick(j, "seed", cfg.seed);
  return cfg;
}

SynthConfig load_synth_config(const std::string& path) {
  return synth_from_json(read_text_file(path));
}

const char* const kAblationPresets[7] = {"+UA-Mask",  "+SA-Mask", "-Gate",
                                         "-Original Info", "Mean-Pool", "CNN",
                                         "CNN-Multi"};

void apply_ablation_preset(ModelSpecConfig& spec, const std::string& name) {
  if (name == "+UA-Mask") {
    spec.model.channels = Channels::UtteranceOnly;
  } else if (name == "+SA-Mask") {
    spec.model.channels = Channels::SpeakerOnly;
  } else if (name == "-Gate") {
    spec.model.fuse_gate = false;
  } else if (name == "-Original Info") {
    spec.model.fuse_original = false;
  } else if (name == "Mean-Pool") {
    spec.model.aggregator = Aggregator::MeanPool;
  } else if (name == "CNN") {
    spec.model.aggregator = Aggregator::Cnn3;
  } else if (name == "CNN-Multi") {
    spec.model.aggregator = Aggregator::CnnMulti;
  } else {
    std::string known;
    for (const char* p : kAblationPresets) known += std::string(" '") + p + "'";
    fail(ErrorCode::ConfigError, "unknown ablation preset '" + name + "'; known:" + known);
  }
}

std::string config_hash(const ModelSpecConfig& spec) {
  // nlohmann::json serializes object keys sorted, so dump() is canonical.
  json j{{"model", model_to_json_obj(spec.model)},
         {"encoder", encoder_to_json_obj(spec.encoder)},
         {"assembly", assembly_to_json_obj(spec.assembly)}};
  const uint64_t h = fnv1a64(j.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace mdfn
