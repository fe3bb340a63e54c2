#include "srnn/dataset.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace srnn::systems {

namespace {

constexpr char kMagic[8] = {'S', 'R', 'N', 'N', 'D', 'S', '0', '1'};

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_f64_le(std::string& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace

void Dataset::validate() const {
  if (d == 0 || n_traj == 0 || traj_len == 0) fail("dataset: empty dimensions");
  if (dt <= 0.0) fail("dataset: dt must be positive");
  if (sigma < 0.0) fail("dataset: sigma must be non-negative");
  if (data.size() != expected_values()) {
    fail("dataset: header/payload size disagreement");
  }
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  nlohmann::json header = {
      {"system", ds.system}, {"d", ds.d},         {"n_traj", ds.n_traj},
      {"traj_len", ds.traj_len}, {"dt", ds.dt},   {"sigma", ds.sigma},
      {"seed", ds.seed},
  };
  if (!ds.extra.empty()) {
    header["extra"] = nlohmann::json::parse(ds.extra);
  } else {
    header["extra"] = nlohmann::json::object();
  }
  const std::string header_str = header.dump();

  std::string blob;
  blob.reserve(12 + header_str.size() + 8 * ds.data.size());
  blob.append(kMagic, sizeof(kMagic));
  put_u32_le(blob, static_cast<std::uint32_t>(header_str.size()));
  blob.append(header_str);
  for (double v : ds.data) put_f64_le(blob, v);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open for writing: " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) fail("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open dataset: " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (blob.size() < 12) fail("dataset truncated: " + path.string());
  if (std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
    fail("dataset magic mismatch: " + path.string());
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  const std::uint32_t header_len = get_u32_le(bytes + 8);
  if (blob.size() < 12 + static_cast<std::size_t>(header_len)) {
    fail("dataset truncated header: " + path.string());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(12, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail("dataset header parse error: " + std::string(e.what()));
  }

  Dataset ds;
  ds.system = header.at("system").get<std::string>();
  ds.d = header.at("d").get<std::size_t>();
  ds.n_traj = header.at("n_traj").get<std::size_t>();
  ds.traj_len = header.at("traj_len").get<std::size_t>();
  ds.dt = header.at("dt").get<double>();
  ds.sigma = header.at("sigma").get<double>();
  ds.seed = header.at("seed").get<std::uint64_t>();
  if (header.contains("extra") && !header["extra"].empty()) {
    ds.extra = header["extra"].dump();
  }

  const std::size_t payload_off = 12 + header_len;
  const std::size_t payload_bytes = blob.size() - payload_off;
  if (payload_bytes != 8 * ds.expected_values()) {
    fail("dataset header/payload size disagreement: " + path.string());
  }
  ds.data.resize(ds.expected_values());
  const unsigned char* p = bytes + payload_off;
  for (std::size_t i = 0; i < ds.data.size(); ++i, p += 8) ds.data[i] = get_f64_le(p);
  ds.validate();
  return ds;
}

void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("cannot open for writing: " + path.string());
  out << "traj,t";
  for (std::size_t i = 0; i < ds.d; ++i) out << ",p" << i;
  for (std::size_t i = 0; i < ds.d; ++i) out << ",q" << i;
  out << "\n";
  char buf[32];
  for (std::size_t tr = 0; tr < ds.n_traj; ++tr) {
    for (std::size_t t = 0; t < ds.traj_len; ++t) {
      out << tr << "," << t;
      for (double v : ds.state(tr, t)) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << "," << buf;
      }
      out << "\n";
    }
  }
}

Dataset add_noise(const Dataset& ds, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) fail("add_noise: sigma must be non-negative");
  Dataset out = ds;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (double& v : out.data) v += sigma * rng.gaussian();
  out.sigma = sigma;
  out.seed = seed;
  return out;
}

}  // namespace srnn::systems
