#include "gradleak/init.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace gradleak {

double SplitMix64::normal() {
  const double u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  return r * std::cos(2.0 * 3.141592653589793 * u2);
}

void InitSpec::validate() const {
  switch (kind) {
    case InitKind::Normal:
      if (!(stddev > 0.0)) throw std::invalid_argument("init spec: normal stddev must be positive");
      break;
    case InitKind::Uniform:
      if (!(range > 0.0)) throw std::invalid_argument("init spec: uniform range must be positive");
      break;
    case InitKind::FromFile:
      if (file_path.empty()) throw std::invalid_argument("init spec: from-file requires a path");
      break;
  }
}

InitSpec InitSpec::normal(double mean, double stddev, std::uint64_t seed) {
  InitSpec s;
  s.kind = InitKind::Normal;
  s.mean = mean;
  s.stddev = stddev;
  s.seed = seed;
  return s;
}

InitSpec InitSpec::uniform(double range, std::uint64_t seed) {
  InitSpec s;
  s.kind = InitKind::Uniform;
  s.range = range;
  s.seed = seed;
  return s;
}

InitSpec InitSpec::from_file(std::string path) {
  InitSpec s;
  s.kind = InitKind::FromFile;
  s.file_path = std::move(path);
  return s;
}

ParameterStore init_weights(const ModelConfig& config, const InitSpec& spec) {
  config.validate();
  spec.validate();
  if (spec.kind == InitKind::FromFile) {
    return load_weights_checked(spec.file_path, config);
  }

  SplitMix64 rng(spec.seed);
  ParameterStore store;
  for (const ParamSpec& p : parameter_layout(config)) {
    Tensor t(p.shape, 0.0);
    auto& v = t.mutable_values();
    if (p.layer_norm_param) {
      const bool is_gain = p.name.ends_with("gain");
      for (double& x : v) x = is_gain ? 1.0 : 0.0;
    } else if (spec.kind == InitKind::Normal) {
      for (double& x : v) x = rng.normal(spec.mean, spec.stddev);
    } else {
      for (double& x : v) x = rng.uniform_symmetric(spec.range);
    }
    store.add(p.name, p.layer_index, std::move(t));
  }
  return store;
}

namespace {

constexpr char kMagic[4] = {'G', 'L', 'K', 'W'};
constexpr std::uint8_t kVersion = 1;

template <typename T>
void write_le(std::ofstream& out, T value) {
  // the toolchain targets are little-endian; write raw
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool read_le(std::ifstream& in, T* value) {
  in.read(reinterpret_cast<char*>(value), sizeof(T));
  return static_cast<std::size_t>(in.gcount()) == sizeof(T);
}

[[noreturn]] void truncated(const std::string& path) {
  throw std::runtime_error("weight file '" + path + "' is truncated or malformed");
}

}  // namespace

void save_weights(const ParameterStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  write_le(out, kVersion);
  for (const auto& e : store) {
    write_le(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_le(out, static_cast<std::uint32_t>(e.layer_index));
    write_le(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (std::size_t ext : e.tensor.shape()) write_le(out, static_cast<std::uint64_t>(ext));
    const auto& v = e.tensor.values();
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

ParameterStore load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weight file '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("'" + path + "' is not a GLKW weight file");
  }
  std::uint8_t version = 0;
  if (!read_le(in, &version) || version != kVersion) {
    throw std::runtime_error("'" + path + "' has unsupported GLKW version");
  }

  ParameterStore store;
  while (true) {
    std::uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (in.gcount() == 0 && in.eof()) break;  // clean end of file
    if (static_cast<std::size_t>(in.gcount()) != sizeof(name_len)) truncated(path);
    if (name_len == 0 || name_len > 4096) truncated(path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (static_cast<std::size_t>(in.gcount()) != name_len) truncated(path);
    std::uint32_t layer_index = 0, rank = 0;
    if (!read_le(in, &layer_index) || !read_le(in, &rank)) truncated(path);
    if (rank == 0 || rank > 8) truncated(path);
    Shape shape(rank);
    std::size_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      std::uint64_t ext = 0;
      if (!read_le(in, &ext) || ext == 0) truncated(path);
      shape[r] = static_cast<std::size_t>(ext);
      count *= shape[r];
    }
    std::vector<double> values(count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double)) truncated(path);
    store.add(std::move(name), layer_index, Tensor(std::move(shape), std::move(values)));
  }
  return store;
}

ParameterStore load_weights_checked(const std::string& path, const ModelConfig& config) {
  ParameterStore store = load_weights(path);
  const auto layout = parameter_layout(config);
  if (store.size() != layout.size()) {
    throw std::runtime_error("weight file '" + path + "' has " + std::to_string(store.size()) +
                             " tensors, config requires " + std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& have = store.entry(i);
    const auto& want = layout[i];
    if (have.name != want.name) {
      throw std::runtime_error("weight file '" + path + "': tensor " + std::to_string(i) +
                               " is '" + have.name + "', expected '" + want.name + "'");
    }
    if (have.tensor.shape() != want.shape) {
      throw std::runtime_error("weight file '" + path + "': tensor '" + have.name + "' has shape " +
                               shape_str(have.tensor.shape()) + ", config requires " +
                               shape_str(want.shape));
    }
    if (have.layer_index != want.layer_index) {
      throw std::runtime_error("weight file '" + path + "': tensor '" + have.name +
                               "' has layer index " + std::to_string(have.layer_index) +
                               ", expected " + std::to_string(want.layer_index));
    }
  }
  return store;
}

}  // namespace gradleak
