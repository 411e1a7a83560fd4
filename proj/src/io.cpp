#include "geoinpaint/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "geoinpaint/config.hpp"
#include "geoinpaint/error.hpp"

namespace geoinpaint::io {

namespace {

template <typename U>
void put_uint(std::string& out, U v) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}
void put_f32(std::string& out, float v) { put_uint(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::string& out, double v) { put_uint(out, std::bit_cast<std::uint64_t>(v)); }

class Cursor {
 public:
  Cursor(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += sizeof(U);
    return v;
  }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void need(std::size_t n) const {
    require(n <= remaining(), ErrorCode::Io, what_ + " is truncated");
  }

 private:
  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

constexpr char kDatasetMagic[4] = {'G', 'I', 'F', 'S'};
constexpr char kCheckpointMagic[4] = {'G', 'I', 'C', 'K'};

}  // namespace

void write_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    require(static_cast<bool>(out), ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorCode::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

FieldStack DatasetFile::to_stack(const GridSpec& grid) const {
  require(grid.nx() == nx && grid.ny() == ny, ErrorCode::GridMismatch,
          "dataset is " + std::to_string(nx) + "x" + std::to_string(ny) + ", config grid is " +
              std::to_string(grid.nx()) + "x" + std::to_string(grid.ny()));
  FieldStack stack(grid, count);
  std::copy(payload.begin(), payload.end(), stack.data().begin());
  return stack;
}

DatasetFile make_dataset(const FieldStack& data, const std::optional<ChannelStats>& stats) {
  require(data.count() > 0 || !stats, ErrorCode::InvalidArgument, "an empty dataset has no statistics");
  if (stats) stats->validate();
  DatasetFile f;
  f.nx = data.grid().nx();
  f.ny = data.grid().ny();
  f.count = data.count();
  f.stats = stats;
  f.payload.reserve(data.data().size());
  for (double v : data.data()) f.payload.push_back(static_cast<float>(v));
  return f;
}

std::string encode_dataset(const DatasetFile& f) {
  require(f.payload.size() == f.count * kChannels * static_cast<std::uint64_t>(f.nx) * f.ny, ErrorCode::LengthMismatch,
          "dataset payload does not match its declared size");
  std::string out(kDatasetMagic, 4);
  put_uint<std::uint32_t>(out, kDatasetVersion);
  put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(f.nx));
  put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(f.ny));
  put_uint<std::uint32_t>(out, kChannels);
  put_uint<std::uint64_t>(out, f.count);
  put_uint<std::uint32_t>(out, f.stats ? 1u : 0u);
  const ChannelStats s = f.stats.value_or(ChannelStats{{0, 0, 0, 0}, {0, 0, 0, 0}});
  for (double m : s.mean) put_f64(out, m);
  for (double d : s.stddev) put_f64(out, d);
  out.reserve(out.size() + 4 * f.payload.size());
  for (float v : f.payload) put_f32(out, v);
  return out;
}

DatasetFile decode_dataset(const std::string& bytes) {
  Cursor c(bytes, "dataset file");
  require(c.raw(4) == std::string(kDatasetMagic, 4), ErrorCode::Io, "not a dataset file (bad magic)");
  const auto version = c.uint<std::uint32_t>();
  require(version == kDatasetVersion, ErrorCode::Io, "unsupported dataset version " + std::to_string(version));
  DatasetFile f;
  f.nx = static_cast<int>(c.uint<std::uint32_t>());
  f.ny = static_cast<int>(c.uint<std::uint32_t>());
  const auto channels = c.uint<std::uint32_t>();
  require(channels == kChannels, ErrorCode::Io, "dataset must have 4 channels");
  f.count = c.uint<std::uint64_t>();
  const auto flags = c.uint<std::uint32_t>();
  require((flags & ~1u) == 0, ErrorCode::Io, "unknown dataset flags");
  ChannelStats s;
  for (double& m : s.mean) m = c.f64();
  for (double& d : s.stddev) d = c.f64();
  if (flags & 1u) {
    for (int k = 0; k < kChannels; ++k)
      require(std::isfinite(s.mean[k]) && std::isfinite(s.stddev[k]) && s.stddev[k] > 0.0, ErrorCode::Io,
              "dataset statistics must be finite with positive std");
    f.stats = s;
  }
  const std::uint64_t n = f.count * kChannels * static_cast<std::uint64_t>(f.nx) * f.ny;
  require(c.remaining() == 4 * n, ErrorCode::Io,
          "dataset payload is " + std::to_string(c.remaining()) + " bytes, header declares " + std::to_string(4 * n));
  f.payload.resize(n);
  for (float& v : f.payload) v = c.f32();
  return f;
}

void write_dataset(const fs::path& path, const DatasetFile& file) { write_atomic(path, encode_dataset(file)); }
DatasetFile read_dataset(const fs::path& path) { return decode_dataset(read_file(path)); }

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const NamedArray& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

namespace {

void add_moments(std::vector<NamedArray>& out, const std::string& prefix, const std::vector<NamedParam>& params,
                 Adam& opt) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({prefix + "adam_m:" + params[i].name, opt.first_moments()[i]});
    out.push_back({prefix + "adam_v:" + params[i].name, opt.second_moments()[i]});
  }
}

const NamedArray& lookup(const Checkpoint& ck, const std::string& name, std::size_t size) {
  const NamedArray* a = ck.find(name);
  require(a != nullptr, ErrorCode::Io, "checkpoint lacks array " + name);
  require(a->values.size() == size, ErrorCode::ShapeMismatch,
          "checkpoint array " + name + " has " + std::to_string(a->values.size()) + " values, expected " +
              std::to_string(size));
  return *a;
}

void load_params(const Checkpoint& ck, const std::string& prefix, const std::vector<NamedParam>& params, Adam& opt) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Var v = params[i].var;
    std::vector<double>& data = v.mutable_value().data;
    data = lookup(ck, prefix + params[i].name, data.size()).values;
    opt.first_moments()[i] = lookup(ck, prefix + "adam_m:" + params[i].name, data.size()).values;
    opt.second_moments()[i] = lookup(ck, prefix + "adam_v:" + params[i].name, data.size()).values;
  }
}

}  // namespace

Checkpoint capture(Trainer& trainer) {
  Checkpoint ck;
  ck.network = trainer.network_config();
  ck.train = trainer.train_config();
  ck.stats = trainer.stats();
  ck.iteration = trainer.iteration();
  ck.g_adam_steps = trainer.g_optimizer().steps();
  ck.d_adam_steps = trainer.d_optimizer().steps();
  std::ostringstream rng;
  rng << trainer.rng();
  ck.rng_state = rng.str();

  const auto gp = trainer.generator().parameters();
  const auto dp = trainer.discriminator().parameters();
  for (const NamedParam& p : gp) ck.arrays.push_back({"g/" + p.name, p.var.value().data});
  for (const NamedBuffer& b : trainer.generator().buffers()) ck.arrays.push_back({"g/buffer:" + b.name, *b.values});
  for (const NamedParam& p : dp) ck.arrays.push_back({"d/" + p.name, p.var.value().data});
  add_moments(ck.arrays, "g/", gp, trainer.g_optimizer());
  add_moments(ck.arrays, "d/", dp, trainer.d_optimizer());
  return ck;
}

void restore(const Checkpoint& ck, Trainer& trainer) {
  require(ck.network == trainer.network_config(), ErrorCode::ShapeMismatch,
          "checkpoint network configuration differs from the trainer's");
  load_params(ck, "g/", trainer.generator().parameters(), trainer.g_optimizer());
  load_params(ck, "d/", trainer.discriminator().parameters(), trainer.d_optimizer());
  for (const NamedBuffer& b : trainer.generator().buffers())
    *b.values = lookup(ck, "g/buffer:" + b.name, b.values->size()).values;
  trainer.g_optimizer().set_steps(ck.g_adam_steps);
  trainer.d_optimizer().set_steps(ck.d_adam_steps);
  trainer.set_iteration(ck.iteration);
  std::istringstream rng(ck.rng_state);
  rng >> trainer.rng();
  require(!rng.fail(), ErrorCode::Io, "checkpoint engine state is unreadable");
}

std::string encode_checkpoint(const Checkpoint& ck) {
  Json header;
  header["network"] = to_json(ck.network);
  header["train"] = to_json(ck.train);
  header["stats"] = to_json(ck.stats);
  header["iteration"] = ck.iteration;
  header["g_adam_steps"] = ck.g_adam_steps;
  header["d_adam_steps"] = ck.d_adam_steps;
  header["rng_state"] = ck.rng_state;
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, 4);
  put_uint<std::uint32_t>(out, kCheckpointVersion);
  put_uint<std::uint64_t>(out, text.size());
  out += text;
  put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(ck.arrays.size()));
  for (const NamedArray& a : ck.arrays) {
    put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put_uint<std::uint64_t>(out, a.values.size());
    for (double v : a.values) put_f64(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Cursor c(bytes, "checkpoint");
  require(c.raw(4) == std::string(kCheckpointMagic, 4), ErrorCode::Io, "not a checkpoint (bad magic)");
  const auto version = c.uint<std::uint32_t>();
  require(version == kCheckpointVersion, ErrorCode::Io, "unsupported checkpoint version " + std::to_string(version));
  const auto len = c.uint<std::uint64_t>();
  Json header;
  try {
    header = Json::parse(c.raw(len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Io, std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  Checkpoint ck;
  try {
    ck.network = network_from_json(header.at("network"), NetworkConfig{});
    ck.train = train_from_json(header.at("train"), TrainConfig{});
    ck.stats = stats_from_json(header.at("stats"));
    ck.iteration = header.at("iteration").get<int>();
    ck.g_adam_steps = header.at("g_adam_steps").get<std::int64_t>();
    ck.d_adam_steps = header.at("d_adam_steps").get<std::int64_t>();
    ck.rng_state = header.at("rng_state").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Io, std::string("checkpoint header: ") + e.what());
  }
  const auto count = c.uint<std::uint32_t>();
  ck.arrays.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = c.raw(c.uint<std::uint32_t>());
    const auto n = c.uint<std::uint64_t>();
    c.need(8 * n);
    a.values.resize(n);
    for (double& v : a.values) v = c.f64();
    ck.arrays.push_back(std::move(a));
  }
  require(c.remaining() == 0, ErrorCode::Io, "trailing bytes after checkpoint arrays");
  return ck;
}

void write_checkpoint(const fs::path& path, const Checkpoint& ck) { write_atomic(path, encode_checkpoint(ck)); }
Checkpoint read_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

std::string encode_measurements(const MeasurementSet& m) {
  m.validate();
  std::ostringstream out;
  out << std::setprecision(17);
  out << "grid " << m.grid.nx() << ' ' << m.grid.ny() << '\n';
  out << "seed " << m.seed << '\n';
  auto emit = [&](char tag, const std::vector<std::size_t>& px, const std::vector<double>& vals) {
    for (std::size_t k = 0; k < px.size(); ++k)
      out << tag << ' ' << px[k] % m.grid.nx() << ' ' << px[k] / m.grid.nx() << ' ' << vals[k] << '\n';
  };
  emit('K', m.k_pixels, m.k_values);
  emit('H', m.h_pixels, m.h_values);
  return out.str();
}

MeasurementSet decode_measurements(const std::string& text, const GridSpec& grid) {
  std::istringstream in(text);
  std::string word;
  int nx = 0, ny = 0;
  in >> word >> nx >> ny;
  require(static_cast<bool>(in) && word == "grid", ErrorCode::Io, "measurement file must start with 'grid nx ny'");
  require(nx == grid.nx() && ny == grid.ny(), ErrorCode::GridMismatch, "measurement grid differs from the config");
  MeasurementSet m;
  m.grid = grid;
  std::string line;
  std::getline(in, line);
  int lineno = 1;
  if (in >> std::ws && in.peek() == 's') {
    in >> word >> m.seed;
    require(static_cast<bool>(in) && word == "seed", ErrorCode::Io, "bad seed line");
    std::getline(in, line);
    ++lineno;
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    char tag = 0;
    int i = 0, j = 0;
    double v = 0.0;
    ls >> tag >> i >> j >> v;
    require(static_cast<bool>(ls) && (tag == 'K' || tag == 'H'), ErrorCode::Io,
            "bad measurement on line " + std::to_string(lineno));
    const std::size_t p = grid.flatten_index(i, j);
    if (tag == 'K') {
      m.k_pixels.push_back(p);
      m.k_values.push_back(v);
    } else {
      m.h_pixels.push_back(p);
      m.h_values.push_back(v);
    }
  }
  m.validate();
  return m;
}

std::string encode_pgm(const Field& f) {
  const int nx = f.grid.nx(), ny = f.grid.ny();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : f.values) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  std::string out = "P5\n" + std::to_string(nx) + " " + std::to_string(ny) + "\n255\n";
  for (int j = ny - 1; j >= 0; --j)
    for (int i = 0; i < nx; ++i) {
      const double v = f.at(i, j);
      const double t = std::isfinite(v) ? (v - lo) / span : 0.0;
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(t, 0.0, 1.0)))));
    }
  return out;
}

}  // namespace geoinpaint::io
