#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sgadv/image.hpp"

namespace sgadv {

struct Identity {
  std::string id;
  std::vector<Image> samples;

  friend bool operator==(const Identity&, const Identity&) = default;
};

/// Synthetic multi-sample identities. Immutable once generated or loaded.
struct IdentityDataset {
  std::vector<Identity> identities;
  ImageDims image_dims;
  std::uint64_t generator_seed = 0;
  double intra_noise_sigma = 0.0;

  std::size_t total_samples() const;
  const Identity& find(const std::string& id) const;

  friend bool operator==(const IdentityDataset&, const IdentityDataset&) = default;
};

struct DatasetParams {
  int n_identities = 30;
  int samples_per_identity = 5;
  ImageDims dims{96, 96, 1};
  double intra_noise_sigma = 0.1;
  std::uint64_t seed = 7;
};

/// Each identity gets a prototype of i.i.d. U[0,1] pixels; each sample is
/// clamp(prototype + N(0, sigma^2), 0, 1) per pixel. Deterministic in `seed`.
IdentityDataset generate_dataset(const DatasetParams& params);

/// Identity ids are "id" followed by a zero-padded index.
std::string identity_name(int index);

/// Writes manifest.json plus one 16-bit PGM (1 channel) or PPM (3 channels)
/// per sample under `dir/<identity>/`.
void save_dataset(const IdentityDataset& dataset, const std::filesystem::path& dir);
IdentityDataset load_dataset(const std::filesystem::path& dir);

/// 16-bit netpbm codec, value = round(pixel * 65535), big-endian samples.
void write_netpbm16(const Image& image, const std::filesystem::path& file);
Image read_netpbm16(const std::filesystem::path& file);

/// Maps each pixel through the on-disk 16-bit quantization.
Image quantize16(const Image& image);

}  // namespace sgadv
