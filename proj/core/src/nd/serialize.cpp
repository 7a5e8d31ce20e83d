#include "higraph/nd/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace higraph::nd {

namespace {

constexpr char kMagic[4] = {'H', 'G', 'D', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  put_u64(os, std::bit_cast<std::uint64_t>(d));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw CheckpointError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw CheckpointError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

std::string get_str(std::istream& is, std::size_t len) {
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (!is) throw CheckpointError("checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& meta,
                     const std::vector<Parameter>& params, const AdamState* optimizer) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(os, static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) put_u64(os, d);
    for (std::size_t i = 0; i < p.tensor.size(); ++i) put_f64(os, p.tensor(i));
  }
  os.put(optimizer ? 1 : 0);
  if (optimizer) {
    put_u64(os, optimizer->step);
    put_u32(os, static_cast<std::uint32_t>(optimizer->moments.size()));
    // Deterministic entry order: follow the parameter list.
    for (const auto& p : params) {
      auto it = optimizer->moments.find(p.name);
      if (it == optimizer->moments.end()) continue;
      put_u32(os, static_cast<std::uint32_t>(p.name.size()));
      os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      put_u64(os, it->second.first.size());
      for (double v : it->second.first) put_f64(os, v);
      for (double v : it->second.second) put_f64(os, v);
    }
  }
  if (!os) throw CheckpointError("write failure on " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError(path + " is not a HGDT checkpoint");
  const std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  LoadedCheckpoint ck;
  ck.meta = get_str(is, get_u32(is));
  const std::uint32_t n_params = get_u32(is);
  ck.params.reserve(n_params);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    Parameter p;
    p.name = get_str(is, get_u32(is));
    const std::uint32_t rank = get_u32(is);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get_u64(is));
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = get_f64(is);
    p.tensor = Tensor::from(std::move(shape), std::move(data));
    ck.params.push_back(std::move(p));
  }
  const int has_opt = is.get();
  if (has_opt == 1) {
    AdamState st;
    st.step = get_u64(is);
    const std::uint32_t n = get_u32(is);
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string name = get_str(is, get_u32(is));
      const std::uint64_t numel = get_u64(is);
      std::vector<double> m(numel), v(numel);
      for (auto& x : m) x = get_f64(is);
      for (auto& x : v) x = get_f64(is);
      st.moments[name] = {std::move(m), std::move(v)};
    }
    ck.optimizer = std::move(st);
  } else if (has_opt != 0) {
    throw CheckpointError("corrupt optimizer flag in " + path);
  }
  return ck;
}

}  // namespace higraph::nd
