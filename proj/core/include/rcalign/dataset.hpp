#pragma once

#include <string>
#include <vector>

#include "rcalign/scene.hpp"

namespace rcalign {

// On-disk layout:
//   DIR/manifest.json              index of sequences + generator settings
//   DIR/seq_XXXXXX.json            frames, objects, rig, ego (metadata)
//   DIR/seq_XXXXXX.bin             radar returns, little-endian float32,
//                                  6 values per return [x y z vx vy t]
void save_sequence(const SceneSequence& seq, const std::string& dir,
                   const std::string& name);
SceneSequence load_sequence(const std::string& dir, const std::string& name);

void write_manifest(const std::string& dir,
                    const std::vector<std::string>& names, uint64_t seed,
                    const std::string& scene_config_json);
std::vector<std::string> read_manifest(const std::string& dir);

// generates + writes num_sequences scenes (seeded seed+i), fanning out
// across workers; returns the sequence names in index order
std::vector<std::string> generate_dataset(uint64_t seed, int num_sequences,
                                          const SceneConfig& config,
                                          const std::string& dir,
                                          int num_workers = 0);

// atomic file write: temp + rename
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace rcalign
