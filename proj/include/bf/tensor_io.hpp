#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "bf/dataset.hpp"
#include "bf/image.hpp"

namespace bf {

// Raw tensor file: "BFT1", u32 LE height, width, channels, then
// height*width*channels IEEE-754 float32 LE values.
inline constexpr char kTensorMagic[4] = {'B', 'F', 'T', '1'};

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

void write_image(const std::filesystem::path& path, const Image& img);
// Throws ValidationError if the stored values leave [0,1].
Image read_image(const std::filesystem::path& path);

// Little-endian primitives shared with the model checkpoint format.
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_f32(std::vector<std::uint8_t>& out, float v);
std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos);
float get_f32(const std::vector<std::uint8_t>& in, std::size_t& pos);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// Dataset directory: manifest.json plus one raw tensor file per sample.
// manifest.json = {"name", "num_classes", "samples": [{"file", "label", "provenance"}]}
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

} // namespace bf
