#include "nasrec/checkpoint.hpp"

#include <array>
#include <fstream>

#include "nasrec/byteio.hpp"

namespace nasrec {
namespace {

constexpr std::array<char, 8> kMagic = {'N', 'A', 'S', 'R', 'E', 'C', 'K', '\0'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore<float>& params,
                     std::uint64_t step) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic.data(), kMagic.size());
  byteio::put<std::uint32_t>(os, kCheckpointVersion);
  byteio::put<std::uint64_t>(os, step);
  byteio::put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    byteio::put_string(os, p.name);
    byteio::put<std::uint8_t>(os, static_cast<std::uint8_t>(p.kind));
    byteio::put<std::uint8_t>(os, p.trainable ? 1 : 0);
    byteio::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) byteio::put<std::uint64_t>(os, d);
    for (float v : p.value.data()) byteio::put<float>(os, v);
    for (float v : p.accum.data()) byteio::put<float>(os, v);
  }
  if (!os) throw Error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw Error("not a checkpoint file: " + path.string());
  }
  const auto version = byteio::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.step = byteio::get<std::uint64_t>(is);
  const auto count = byteio::get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = byteio::get_string(is);
    const auto kind = byteio::get<std::uint8_t>(is);
    if (kind > 3) throw Error("corrupt checkpoint: bad parameter kind");
    const bool trainable = byteio::get<std::uint8_t>(is) != 0;
    const auto rank = byteio::get<std::uint32_t>(is);
    if (rank < 1 || rank > 3) throw Error("corrupt checkpoint: bad rank");
    Shape shape(rank);
    for (auto& d : shape) d = byteio::get<std::uint64_t>(is);
    Tensor<float> value(shape);
    for (auto& v : value.vec()) v = byteio::get<float>(is);
    auto& p = ck.params.add(std::move(name), static_cast<ParamKind>(kind), std::move(value));
    for (auto& v : p.accum.vec()) v = byteio::get<float>(is);
    p.trainable = trainable;
  }
  return ck;
}

}  // namespace nasrec
