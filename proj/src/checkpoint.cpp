#include "mdfn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "mdfn/error.hpp"

namespace mdfn {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'D', 'F', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kFormatVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const MdfnModel<float>& model,
                     const ModelSpecConfig& spec, const Vocab& vocab,
                     const CheckpointMeta& meta) {
  json manifest = json::array();
  for (const auto& [name, t] : model.params().trainable())
    manifest.push_back(json{{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});

  json header{{"format_version", kFormatVersion},
              {"config_hash", config_hash(spec)},
              {"step", meta.step},
              {"seed", meta.seed},
              {"metrics", meta.metrics},
              {"spec", json::parse(model_spec_to_json(spec))},
              {"vocab", vocab.tokens},
              {"params", manifest}};
  const std::string header_text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::IoError, "cannot write " + path);
  os.write(kMagic, 8);
  put_u32(os, static_cast<uint32_t>(header_text.size()));
  os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  static_assert(sizeof(float) == 4);
  for (const auto& [name, t] : model.params().trainable())
    os.write(reinterpret_cast<const char*>(t.val().data()),
             static_cast<std::streamsize>(t.val().size() * 4));
  if (!os) fail(ErrorCode::IoError, "short write to " + path);
}

LoadedModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoError, "cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    fail(ErrorCode::HeaderMismatch, "bad checkpoint magic in " + path);
  const uint32_t header_len = get_u32(is);
  std::string header_text(header_len, '\0');
  is.read(header_text.data(), header_len);
  if (!is) fail(ErrorCode::IoError, "truncated checkpoint header in " + path);

  json header = json::parse(header_text, nullptr, false);
  if (header.is_discarded())
    fail(ErrorCode::HeaderMismatch, "unparseable checkpoint header in " + path);
  if (header.at("format_version").get<uint32_t>() != kFormatVersion)
    fail(ErrorCode::HeaderMismatch, "unsupported checkpoint format version");

  LoadedModel out;
  out.spec = model_spec_from_json(header.at("spec").dump());
  if (header.at("config_hash").get<std::string>() != config_hash(out.spec))
    fail(ErrorCode::HeaderMismatch, "config hash does not match embedded spec");
  out.meta.step = header.at("step").get<int>();
  out.meta.seed = header.at("seed").get<uint64_t>();
  if (header.contains("metrics"))
    for (auto& [k, v] : header.at("metrics").items())
      out.meta.metrics[k] = v.get<double>();

  const auto words = header.at("vocab").get<std::vector<std::string>>();
  if (words.size() < static_cast<size_t>(Vocab::kNumSpecials))
    fail(ErrorCode::HeaderMismatch, "checkpoint vocab shorter than the special tokens");
  out.vocab = Vocab::from_words({words.begin() + Vocab::kNumSpecials, words.end()});

  out.model = std::make_unique<MdfnModel<float>>(out.spec.model, out.spec.encoder,
                                                 out.spec.assembly, out.meta.seed);
  const auto trainable = out.model->params().trainable();
  const json& manifest = header.at("params");
  if (manifest.size() != trainable.size())
    fail(ErrorCode::HeaderMismatch,
         "parameter count mismatch: header " + std::to_string(manifest.size()) +
             " vs model " + std::to_string(trainable.size()));
  for (size_t i = 0; i < trainable.size(); ++i) {
    const auto& [name, t] = trainable[i];
    const json& m = manifest[i];
    if (m.at("name").get<std::string>() != name ||
        m.at("rows").get<int>() != t.rows() || m.at("cols").get<int>() != t.cols())
      fail(ErrorCode::HeaderMismatch, "parameter manifest mismatch at " + name);
    is.read(reinterpret_cast<char*>(t.val().data()),
            static_cast<std::streamsize>(t.val().size() * 4));
    if (is.gcount() != static_cast<std::streamsize>(t.val().size() * 4))
      fail(ErrorCode::IoError, "truncated checkpoint payload at " + name);
  }
  return out;
}

}  // namespace mdfn
