#pragma once

// LSKC checkpoint container.
//
//   "LSKC"            4 bytes
//   version           u32 (1)
//   spec              u32 length + UTF-8 bytes
//   tensor count      u32
//   per tensor:       u32 name length + UTF-8 name, u8 dtype (0 = f32),
//                     u8 rank, rank x u32 dims, raw little-endian data
//
// All integers are little-endian.

#include <lsk/error.hpp>
#include <lsk/model_spec.hpp>
#include <lsk/network.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

namespace lsk {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  std::string spec;
  std::vector<NamedTensor> tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_string(std::string& out, std::string_view s) {
  require(s.size() <= UINT32_MAX, Errc::invalid_argument, "string too long for checkpoint");
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    require(n <= bytes_.size() - pos_, Errc::unsupported_format,
            "checkpoint truncated at byte " + std::to_string(pos_));
    const std::string_view v = bytes_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const std::string_view b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
    return v;
  }
  std::string str() { return std::string(take(u32())); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  std::string out = "LSKC";
  detail::put_u32(out, kCheckpointVersion);
  detail::put_string(out, ck.spec);
  detail::put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const NamedTensor& t : ck.tensors) {
    std::size_t count = 1;
    for (std::uint32_t d : t.dims) count *= d;
    require(count == t.data.size() && !t.dims.empty() && t.dims.size() <= 255, Errc::invalid_shape,
            "tensor '" + t.name + "' dims do not match its data");
    detail::put_string(out, t.name);
    out.push_back(0);  // f32
    out.push_back(static_cast<char>(t.dims.size()));
    for (std::uint32_t d : t.dims) detail::put_u32(out, d);
    for (float v : t.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  detail::Reader r(bytes);
  require(bytes.size() >= 4 && r.take(4) == "LSKC", Errc::unsupported_format, "not an LSKC checkpoint");
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, Errc::unsupported_format,
          "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.spec = r.str();
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.name = r.str();
    const std::uint8_t dtype = r.u8();
    require(dtype == 0, Errc::unsupported_format,
            "tensor '" + t.name + "' has unsupported dtype " + std::to_string(dtype));
    const std::uint8_t rank = r.u8();
    std::size_t count = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      t.dims.push_back(r.u32());
      count *= t.dims.back();
    }
    require(count <= bytes.size() / 4, Errc::unsupported_format, "tensor '" + t.name + "' larger than file");
    const std::string_view raw = r.take(count * 4);
    t.data.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(raw[4 * k + b])) << (8 * b);
      t.data[k] = std::bit_cast<float>(bits);
    }
    ck.tensors.push_back(std::move(t));
  }
  require(r.done(), Errc::unsupported_format, "trailing bytes after checkpoint tensors");
  return ck;
}

/// Writes bytes to a sibling temporary file, then renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(f), Errc::io_error, "cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(f), Errc::io_error, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(Errc::io_error, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), Errc::io_error, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const Error& e) {
    if (e.code() == Errc::io_error) throw;
    fail(e.code(), path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Network <-> checkpoint

inline Checkpoint to_checkpoint(const Network<float>& net) {
  Network<float> copy = net;
  Checkpoint ck;
  ck.spec = serialize(net.spec());
  for (const auto& p : copy.parameters()) {
    NamedTensor t;
    t.name = p.name;
    for (std::size_t d : p.dims) t.dims.push_back(static_cast<std::uint32_t>(d));
    t.data.assign(p.values.begin(), p.values.end());
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

/// Rebuilds the network described by the stored spec and fills every
/// parameter by name. Missing, extra or mis-shaped tensors are rejected.
inline Network<float> from_checkpoint(const Checkpoint& ck) {
  Network<float> net = build_zero_model<float>(parse_model_spec(ck.spec));
  auto params = net.parameters();
  require(params.size() == ck.tensors.size(), Errc::invalid_spec,
          "checkpoint has " + std::to_string(ck.tensors.size()) + " tensors, model needs " +
              std::to_string(params.size()));
  for (auto& p : params) {
    const NamedTensor* found = nullptr;
    for (const NamedTensor& t : ck.tensors)
      if (t.name == p.name) found = &t;
    require(found != nullptr, Errc::invalid_spec, "checkpoint is missing tensor '" + p.name + "'");
    std::vector<std::uint32_t> dims(p.dims.begin(), p.dims.end());
    require(found->dims == dims, Errc::invalid_spec, "tensor '" + p.name + "' has the wrong dims");
    std::copy(found->data.begin(), found->data.end(), p.values.begin());
  }
  return net;
}

}  // namespace lsk
