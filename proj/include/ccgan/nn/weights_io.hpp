#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "ccgan/nn/networks.hpp"

namespace ccgan::nn {

// Weight file, little-endian:
//   magic "CCGWTS\0\1", u32 format version, u32 kind (0 generator,
//   1 discriminator), u32 header length, header text (key=value lines echoing
//   the spec, the init record and the format version), u32 grid count, then
//   per grid: u32 name length, name, 4 x u32 NCHW shape, float32 values.
// Trainable grids come first in declaration order, then buffers.

inline constexpr std::uint32_t kWeightFormatVersion = 1;

std::string describe(const GeneratorSpec& spec);
std::string describe(const DiscriminatorSpec& spec);

template <class T>
void save_generator(const std::filesystem::path& path, const Generator<T>& g);
template <class T>
void save_discriminator(const std::filesystem::path& path, const Discriminator<T>& d);

/// Reads the spec echo and seed from a generator weight file.
struct WeightHeader {
  std::uint32_t kind = 0;
  std::map<std::string, std::string> fields;
};
WeightHeader read_weight_header(const std::filesystem::path& path);

GeneratorSpec generator_spec_from_header(const WeightHeader& h);
DiscriminatorSpec discriminator_spec_from_header(const WeightHeader& h);

/// Fills an existing network; throws DataError when the file's spec or grid
/// shapes do not match the network.
template <class T>
void load_into(const std::filesystem::path& path, Generator<T>& g);
template <class T>
void load_into(const std::filesystem::path& path, Discriminator<T>& d);

/// Constructs a generator from the spec stored in the file and loads it.
template <class T>
std::unique_ptr<Generator<T>> load_generator(const std::filesystem::path& path);

}  // namespace ccgan::nn
