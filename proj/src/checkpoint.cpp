#include "unijdot/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "unijdot/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace unijdot {

namespace {
constexpr char kMagic[4] = {'U', 'J', 'D', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ofstream& f, uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t get_u32(std::ifstream& f, const std::string& what) {
  uint32_t v = 0;
  if (!f.read(reinterpret_cast<char*>(&v), sizeof v))
    throw DataError(DataErrorCode::CorruptCheckpoint,
                    "checkpoint truncated while reading " + what);
  return v;
}
}  // namespace

void write_checkpoint(const std::string& path,
                      const std::vector<NamedTensor>& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw DataError(DataErrorCode::MissingFile,
                    "cannot open checkpoint for writing: " + path);
  f.write(kMagic, 4);
  put_u32(f, kVersion);
  put_u32(f, static_cast<uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    put_u32(f, static_cast<uint32_t>(nt.name.size()));
    f.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    put_u32(f, static_cast<uint32_t>(nt.tensor.shape.size()));
    for (int64_t d : nt.tensor.shape) put_u32(f, static_cast<uint32_t>(d));
    f.write(reinterpret_cast<const char*>(nt.tensor.data.data()),
            static_cast<std::streamsize>(nt.tensor.data.size() * sizeof(float)));
  }
  if (!f)
    throw DataError(DataErrorCode::MissingFile,
                    "checkpoint write failed: " + path);
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw DataError(DataErrorCode::MissingFile,
                    "cannot open checkpoint: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(DataErrorCode::CorruptCheckpoint,
                    "checkpoint magic bytes mismatch: " + path);
  const uint32_t version = get_u32(f, "version");
  if (version != kVersion)
    throw DataError(DataErrorCode::UnknownVersion,
                    "unsupported checkpoint version " + std::to_string(version));
  const uint32_t count = get_u32(f, "tensor count");

  std::vector<NamedTensor> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32(f, "tensor name length");
    std::string name(name_len, '\0');
    if (!f.read(name.data(), name_len))
      throw DataError(DataErrorCode::CorruptCheckpoint,
                      "checkpoint truncated while reading tensor name");
    const uint32_t rank = get_u32(f, "rank of " + name);
    std::vector<int64_t> shape(rank);
    int64_t numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      shape[r] = get_u32(f, "shape of " + name);
      numel *= shape[r];
    }
    std::vector<float> data(static_cast<size_t>(numel));
    if (!f.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(float))))
      throw DataError(DataErrorCode::CorruptCheckpoint,
                      "checkpoint truncated while reading data of " + name);
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

const Tensor& checkpoint_get(const std::vector<NamedTensor>& tensors,
                             const std::string& name) {
  for (const auto& nt : tensors)
    if (nt.name == name) return nt.tensor;
  throw DataError(DataErrorCode::CorruptCheckpoint,
                  "checkpoint missing section: " + name);
}

}  // namespace unijdot
