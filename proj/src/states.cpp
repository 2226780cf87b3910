#include "rpna/states.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "rpna/error.hpp"

namespace rpna {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 20;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

void check_shape(int layers, int tokens, int dims) {
  if (layers < 1 || tokens < 1 || dims < 1) {
    throw ShapeError("hidden states need L, T, d >= 1 (got " + std::to_string(layers) + ", " +
                     std::to_string(tokens) + ", " + std::to_string(dims) + ")");
  }
}

}  // namespace

HiddenStates::HiddenStates(int layers, int tokens, int dims)
    : layers_(layers), tokens_(tokens), dims_(dims) {
  check_shape(layers, tokens, dims);
  values_.assign(static_cast<std::size_t>(layers) * tokens * dims, 0.0f);
}

HiddenStates::HiddenStates(int layers, int tokens, int dims, std::vector<float> values)
    : layers_(layers), tokens_(tokens), dims_(dims), values_(std::move(values)) {
  check_shape(layers, tokens, dims);
  if (values_.size() != static_cast<std::size_t>(layers) * tokens * dims) {
    throw ShapeError("hidden state buffer size does not match L*T*d");
  }
  for (float v : values_) {
    if (!std::isfinite(v)) throw NonFiniteError("hidden states contain a non-finite value");
  }
}

std::size_t HiddenStates::offset(int layer, int token) const {
  if (layer < 1 || layer > layers_ || token < 0 || token >= tokens_) {
    throw ShapeError("hidden state index out of range");
  }
  return (static_cast<std::size_t>(layer - 1) * tokens_ + token) * dims_;
}

float HiddenStates::at(int layer, int token, int dim) const {
  if (dim < 0 || dim >= dims_) throw ShapeError("hidden state dim out of range");
  return values_[offset(layer, token) + dim];
}

std::span<const float> HiddenStates::row(int layer, int token) const {
  return {values_.data() + offset(layer, token), static_cast<std::size_t>(dims_)};
}

std::span<float> HiddenStates::row(int layer, int token) {
  return {values_.data() + offset(layer, token), static_cast<std::size_t>(dims_)};
}

std::vector<std::uint8_t> encode_states(const HiddenStates& states) {
  if (states.empty()) throw ShapeError("cannot encode empty hidden states");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + states.values().size() * 4);
  for (char c : {'R', 'P', 'N', 'A'}) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(states.layers()));
  put_u32(out, static_cast<std::uint32_t>(states.tokens()));
  put_u32(out, static_cast<std::uint32_t>(states.dims()));
  for (float v : states.values()) {
    if (!std::isfinite(v)) throw NonFiniteError("refusing to encode a non-finite value");
    put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

HiddenStates decode_states(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw TruncationError("activation payload shorter than its magic");
  if (std::memcmp(bytes.data(), "RPNA", 4) != 0) throw FormatError("bad magic (expected RPNA)");
  if (bytes.size() < kHeaderBytes) throw TruncationError("activation header truncated");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kVersion) {
    throw FormatError("unsupported activation format version " + std::to_string(version));
  }
  const std::uint32_t layers = get_u32(bytes, 8);
  const std::uint32_t tokens = get_u32(bytes, 12);
  const std::uint32_t dims = get_u32(bytes, 16);
  if (layers == 0 || tokens == 0 || dims == 0 || layers > 1u << 20 || tokens > 1u << 24 ||
      dims > 1u << 24) {
    throw FormatError("implausible activation shape in header");
  }
  const std::uint64_t count = std::uint64_t{layers} * tokens * dims;
  const std::uint64_t available = (bytes.size() - kHeaderBytes) / 4;
  if (count > available) {
    throw TruncationError("declared L*T*d = " + std::to_string(count) + " exceeds payload of " +
                          std::to_string(available) + " values");
  }
  if ((bytes.size() - kHeaderBytes) != count * 4) {
    throw FormatError("trailing bytes after activation payload");
  }
  std::vector<float> values(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_u32(bytes, kHeaderBytes + 4 * i));
    if (!std::isfinite(values[i])) throw NonFiniteError("activation payload has a non-finite value");
  }
  return HiddenStates(static_cast<int>(layers), static_cast<int>(tokens), static_cast<int>(dims),
                      std::move(values));
}

void write_states(const HiddenStates& states, const std::filesystem::path& path) {
  const auto bytes = encode_states(states);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

HiddenStates read_states(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_states(bytes);
}

}  // namespace rpna
