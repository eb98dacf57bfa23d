#include "geowarp/nn/params.hpp"

#include "../binary_io.hpp"
#include "geowarp/errors.hpp"

#include <bit>
#include <limits>

namespace geowarp::nn {

std::vector<std::uint8_t> encode_checkpoint(const ParamSet<float>& params) {
  std::vector<std::uint8_t> out{'G', 'W', 'C', 'K'};
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw std::invalid_argument("parameter name too long: " + e.name.substr(0, 32));
    }
    if (e.value.rank() > std::numeric_limits<std::uint8_t>::max()) {
      throw std::invalid_argument("parameter rank too large: " + e.name);
    }
    detail::put_uint(out, e.name.size(), 2);
    out.insert(out.end(), e.name.begin(), e.name.end());
    detail::put_uint(out, static_cast<std::uint64_t>(e.value.rank()), 1);
    for (int d : e.value.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : e.value.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

ParamSet<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader in(bytes, "checkpoint");
  if (in.text(4) != "GWCK") throw DataError("not a GWCK checkpoint");
  const auto version = in.uint(4);
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto count = in.uint(4);
  ParamSet<float> params;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = in.text(static_cast<std::size_t>(in.uint(2)));
    const auto rank = in.uint(1);
    Shape shape;
    std::uint64_t total = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      const auto d = in.uint(4);
      if (d > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) throw DataError("dimension too large");
      shape.push_back(static_cast<int>(d));
      total *= d;
      if (total > bytes.size()) throw DataError("checkpoint: tensor larger than file");
    }
    std::vector<float> data(static_cast<std::size_t>(total));
    for (auto& v : data) v = std::bit_cast<float>(static_cast<std::uint32_t>(in.uint(4)));
    if (params.contains(name)) throw DataError("checkpoint: duplicate parameter " + name);
    params.add(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  if (!in.done()) throw DataError("checkpoint: trailing bytes");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet<float>& params) {
  detail::write_bytes(path, encode_checkpoint(params));
}

ParamSet<float> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_bytes(path));
}

}  // namespace geowarp::nn
