#pragma once

#include <cstdint>
#include <string>

#include "gradleak/model.hpp"

namespace gradleak {

// SplitMix64: the fixed counter-based generator behind every sampled weight
// and dummy initialization, so that a (config, seed) pair reproduces the
// same values anywhere. One next() per uniform draw; normals use the
// Box-Muller cosine branch and consume two draws.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 mantissa bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [-range, range].
  double uniform_symmetric(double range) { return (2.0 * uniform01() - 1.0) * range; }

  // Standard normal via Box-Muller (cosine branch).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t state_;
};

enum class InitKind { Normal, Uniform, FromFile };

struct InitSpec {
  InitKind kind = InitKind::Normal;
  double mean = 0.0;
  double stddev = 0.02;
  double range = 0.02;  // uniform on [-range, range]
  std::string file_path;
  std::uint64_t seed = 0;

  void validate() const;

  static InitSpec normal(double mean, double stddev, std::uint64_t seed);
  static InitSpec uniform(double range, std::uint64_t seed);
  static InitSpec from_file(std::string path);
};

// Draws every projection/embedding weight i.i.d. from the spec; layer-norm
// gains start at 1 and biases at 0 regardless of the spec. FromFile loads
// and validates a GLKW file against the config.
ParameterStore init_weights(const ModelConfig& config, const InitSpec& spec);

// GLKW weight file: magic "GLKW", version byte 0x01, then per-tensor
// records until end of file. Each record is
//   u32 name length, UTF-8 name bytes,
//   u32 layer index,
//   u32 rank, u64 extents[rank],
//   f64 elements (row-major),
// all little-endian IEEE-754. Round-trips are bit-exact.
void save_weights(const ParameterStore& store, const std::string& path);
ParameterStore load_weights(const std::string& path);

// Load plus structural validation against the layout the config implies.
ParameterStore load_weights_checked(const std::string& path, const ModelConfig& config);

}  // namespace gradleak
