#include "rcalign/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "rcalign/dataset.hpp"

namespace rcalign {

namespace {

constexpr char kMagic[4] = {'R', 'C', 'K', 'P'};

void put_u32(std::string& s, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  s.append(b, 4);
}

void put_u64(std::string& s, uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  s.append(b, 8);
}

uint32_t get_u32(const std::string& s, size_t& pos) {
  RCA_CHECK(pos + 4 <= s.size(), "checkpoint: truncated");
  uint32_t v;
  std::memcpy(&v, s.data() + pos, 4);
  pos += 4;
  return v;
}

uint64_t get_u64(const std::string& s, size_t& pos) {
  RCA_CHECK(pos + 8 <= s.size(), "checkpoint: truncated");
  uint64_t v;
  std::memcpy(&v, s.data() + pos, 8);
  pos += 8;
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, ck.version);
  put_u64(out, ck.iteration);
  put_u32(out, static_cast<uint32_t>(ck.config_json.size()));
  out += ck.config_json;
  put_u32(out, static_cast<uint32_t>(ck.arrays.size()));
  for (const auto& [name, t] : ck.arrays) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(out, static_cast<uint32_t>(d));
    for (double v : t.data) {
      float f = static_cast<float>(v);
      char b[4];
      std::memcpy(b, &f, 4);
      out.append(b, 4);
    }
  }
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  RCA_CHECK(is.good(), "cannot open checkpoint: " + path);
  std::string s((std::istreambuf_iterator<char>(is)),
                std::istreambuf_iterator<char>());
  size_t pos = 0;
  RCA_CHECK(s.size() >= 4 && std::memcmp(s.data(), kMagic, 4) == 0,
            "checkpoint: bad magic");
  pos = 4;
  Checkpoint ck;
  ck.version = get_u32(s, pos);
  RCA_CHECK(ck.version == 1, "checkpoint: unsupported version");
  ck.iteration = get_u64(s, pos);
  uint32_t cfg_len = get_u32(s, pos);
  RCA_CHECK(pos + cfg_len <= s.size(), "checkpoint: truncated config");
  ck.config_json = s.substr(pos, cfg_len);
  pos += cfg_len;
  uint32_t n_arrays = get_u32(s, pos);
  for (uint32_t a = 0; a < n_arrays; ++a) {
    uint32_t name_len = get_u32(s, pos);
    RCA_CHECK(pos + name_len <= s.size(), "checkpoint: truncated name");
    std::string name = s.substr(pos, name_len);
    pos += name_len;
    uint32_t ndim = get_u32(s, pos);
    std::vector<int> shape;
    for (uint32_t d = 0; d < ndim; ++d)
      shape.push_back(static_cast<int>(get_u32(s, pos)));
    Tensor t(shape);
    for (int64_t i = 0; i < t.size(); ++i) {
      RCA_CHECK(pos + 4 <= s.size(), "checkpoint: truncated data");
      float f;
      std::memcpy(&f, s.data() + pos, 4);
      pos += 4;
      t[i] = static_cast<double>(f);
    }
    ck.arrays[name] = std::move(t);
  }
  return ck;
}

void store_params(const nn::ParamStore& ps, Checkpoint* ck) {
  for (const auto& [name, var] : ps.all()) ck->arrays[name] = var->value;
}

void load_params_into(nn::ParamStore& ps, const Checkpoint& ck) {
  for (auto& [name, var] : ps.all()) {
    auto it = ck.arrays.find(name);
    RCA_CHECK(it != ck.arrays.end(), "checkpoint: missing array " + name);
    RCA_CHECK(it->second.shape == var->value.shape,
              "checkpoint: shape mismatch for " + name);
    var->value = it->second;
  }
}

uint64_t file_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  RCA_CHECK(is.good(), "cannot open for hashing: " + path);
  uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (is.good()) {
    is.read(buf, sizeof(buf));
    std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace rcalign
