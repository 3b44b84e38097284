#include <cstring>
#include <fstream>

#include "mdfn/encoder.hpp"
#include "mdfn/error.hpp"

namespace mdfn {

namespace {

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

void save_embedding_file(const std::string& path, int vocab_size, int d,
                         const std::vector<float>& table) {
  if (static_cast<size_t>(vocab_size) * static_cast<size_t>(d) != table.size())
    fail(ErrorCode::ShapeError, "embedding table size != vocab_size*d");
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::IoError, "cannot write " + path);
  os.write(kEmbeddingMagic, 4);
  put_u32(os, kEmbeddingVersion);
  put_u32(os, static_cast<uint32_t>(vocab_size));
  put_u32(os, static_cast<uint32_t>(d));
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(table.data()),
           static_cast<std::streamsize>(table.size() * 4));
  if (!os) fail(ErrorCode::IoError, "short write to " + path);
}

std::vector<float> load_embedding_file(const std::string& path, int expect_vocab,
                                       int expect_d) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoError, "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kEmbeddingMagic, 4) != 0)
    fail(ErrorCode::HeaderMismatch, "bad embedding magic in " + path);
  const uint32_t version = get_u32(is);
  const uint32_t vocab = get_u32(is);
  const uint32_t d = get_u32(is);
  if (!is) fail(ErrorCode::IoError, "truncated embedding header in " + path);
  if (version != kEmbeddingVersion)
    fail(ErrorCode::HeaderMismatch, "unsupported embedding version " + std::to_string(version));
  if (vocab != static_cast<uint32_t>(expect_vocab) || d != static_cast<uint32_t>(expect_d))
    fail(ErrorCode::HeaderMismatch,
         "embedding header " + std::to_string(vocab) + "x" + std::to_string(d) +
             " does not match configured " + std::to_string(expect_vocab) + "x" +
             std::to_string(expect_d));
  std::vector<float> table(static_cast<size_t>(vocab) * d);
  is.read(reinterpret_cast<char*>(table.data()),
          static_cast<std::streamsize>(table.size() * 4));
  if (is.gcount() != static_cast<std::streamsize>(table.size() * 4))
    fail(ErrorCode::IoError, "truncated embedding payload in " + path);
  return table;
}

}  // namespace mdfn
