#pragma once

#include <map>
#include <string>

#include "rcalign/nn.hpp"

namespace rcalign {

// Versioned binary container: magic, version, iteration counter, config
// snapshot (JSON) and named little-endian float32 arrays (parameters,
// buffers and optimizer state). Arrays are written in name order, so the
// file bytes are a pure function of the contents.
struct Checkpoint {
  uint32_t version = 1;
  uint64_t iteration = 0;
  std::string config_json;
  std::map<std::string, Tensor> arrays;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

void store_params(const nn::ParamStore& ps, Checkpoint* ck);
void load_params_into(nn::ParamStore& ps, const Checkpoint& ck);

// 64-bit FNV-1a over the file bytes, for reproducibility reporting
uint64_t file_hash(const std::string& path);

}  // namespace rcalign
