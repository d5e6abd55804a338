#include "bf/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "bf/error.hpp"

namespace bf {

namespace fs = std::filesystem;
using json = nlohmann::json;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw ValidationError("unexpected end of data");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{in[pos + i]} << (8 * i);
  pos += 4;
  return v;
}

float get_f32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  return std::bit_cast<float>(get_u32(in, pos));
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError(fmt::format("cannot write '{}'", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeError(fmt::format("write failed for '{}'", path.string()));
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  std::vector<std::uint8_t> out(kTensorMagic, kTensorMagic + 4);
  out.reserve(16 + 4 * t.size());
  put_u32(out, t.shape().height);
  put_u32(out, t.shape().width);
  put_u32(out, t.shape().channels);
  for (float v : t.data()) put_f32(out, v);
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kTensorMagic, 4) != 0) {
    throw ValidationError("not a BFT1 tensor");
  }
  std::size_t pos = 4;
  Shape s;
  s.height = get_u32(bytes, pos);
  s.width = get_u32(bytes, pos);
  s.channels = get_u32(bytes, pos);
  if (bytes.size() != 16 + 4 * s.size()) {
    throw ValidationError(fmt::format("BFT1 payload size {} does not match shape {}",
                                      bytes.size() - 16, s.str()));
  }
  std::vector<float> data(s.size());
  for (auto& v : data) v = get_f32(bytes, pos);
  return Tensor(s, std::move(data));
}

void write_tensor(const fs::path& path, const Tensor& t) {
  write_file_bytes(path, encode_tensor(t));
}

Tensor read_tensor(const fs::path& path) {
  try {
    return decode_tensor(read_file_bytes(path));
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_image(const fs::path& path, const Image& img) {
  write_tensor(path, img.to_tensor());
}

Image read_image(const fs::path& path) {
  Tensor t = read_tensor(path);
  try {
    return Image(t.shape(), std::vector<float>(t.data().begin(), t.data().end()));
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_dataset(const fs::path& dir, const Dataset& data) {
  fs::create_directories(dir);
  json manifest;
  manifest["name"] = data.name();
  manifest["num_classes"] = data.num_classes();
  json samples = json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto file = fmt::format("{:06d}.bft", i);
    write_image(dir / file, data[i].image);
    samples.push_back({{"file", file},
                       {"label", data[i].label},
                       {"provenance", std::string(to_string(data[i].provenance))}});
  }
  manifest["samples"] = std::move(samples);
  std::ofstream out(dir / "manifest.json");
  if (!out) throw RuntimeError(fmt::format("cannot write manifest in '{}'", dir.string()));
  out << manifest.dump(2) << '\n';
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError(fmt::format("missing dataset manifest '{}'", manifest_path.string()));
  json manifest;
  try {
    manifest = json::parse(in);
    std::vector<LabeledSample> samples;
    for (const auto& entry : manifest.at("samples")) {
      LabeledSample s;
      s.image = read_image(dir / entry.at("file").get<std::string>());
      s.label = entry.at("label").get<std::uint32_t>();
      s.provenance = provenance_from_string(entry.value("provenance", std::string("clean")));
      samples.push_back(std::move(s));
    }
    return Dataset(manifest.value("name", dir.filename().string()),
                   manifest.at("num_classes").get<std::uint32_t>(), std::move(samples));
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("{}: schema violation: {}", manifest_path.string(), e.what()));
  }
}

} // namespace bf
