#include "rcalign/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rcalign/workers.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rcalign {

namespace {

json rig_to_json(const CameraRig& rig) {
  json j;
  j["width"] = rig.image_width;
  j["height"] = rig.image_height;
  j["views"] = json::array();
  for (const auto& v : rig.views) {
    json jv;
    jv["fx"] = v.fx;
    jv["fy"] = v.fy;
    jv["cx"] = v.cx;
    jv["cy"] = v.cy;
    jv["rotation"] = v.rotation;
    jv["translation"] = v.translation;
    j["views"].push_back(jv);
  }
  return j;
}

CameraRig rig_from_json(const json& j) {
  CameraRig rig;
  rig.image_width = j.at("width").get<int>();
  rig.image_height = j.at("height").get<int>();
  for (const auto& jv : j.at("views")) {
    CameraView v;
    v.fx = jv.at("fx").get<double>();
    v.fy = jv.at("fy").get<double>();
    v.cx = jv.at("cx").get<double>();
    v.cy = jv.at("cy").get<double>();
    auto rot = jv.at("rotation").get<std::vector<double>>();
    auto tr = jv.at("translation").get<std::vector<double>>();
    RCA_CHECK(rot.size() == 9 && tr.size() == 3, "rig json: bad view");
    std::copy(rot.begin(), rot.end(), v.rotation.begin());
    std::copy(tr.begin(), tr.end(), v.translation.begin());
    rig.views.push_back(v);
  }
  return rig;
}

void append_f32(std::string& buf, double v) {
  float f = static_cast<float>(v);
  static_assert(sizeof(float) == 4);
  char b[4];
  std::memcpy(b, &f, 4);
  buf.append(b, 4);
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& contents) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    RCA_CHECK(os.good(), "cannot open for write: " + tmp);
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    RCA_CHECK(os.good(), "write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

void save_sequence(const SceneSequence& seq, const std::string& dir,
                   const std::string& name) {
  json j;
  j["id"] = name;
  j["seed"] = seq.seed;
  j["rig"] = rig_to_json(seq.rig);
  j["frames"] = json::array();

  std::string bin;
  int64_t offset = 0;
  for (const auto& f : seq.frames) {
    json jf;
    jf["t"] = f.timestamp;
    jf["ego"] = {f.ego.x, f.ego.y, f.ego.yaw};
    jf["objects"] = json::array();
    for (const auto& o : f.objects) {
      jf["objects"].push_back({{"cat", o.category},
                               {"center", {o.center.x, o.center.y, o.center.z}},
                               {"size", {o.length, o.width, o.height}},
                               {"yaw", o.yaw},
                               {"vel", {o.vx, o.vy}}});
    }
    jf["radar_offset"] = offset;
    jf["radar_count"] = static_cast<int64_t>(f.radar.size());
    for (const auto& r : f.radar) {
      append_f32(bin, r.x);
      append_f32(bin, r.y);
      append_f32(bin, r.z);
      append_f32(bin, r.vx_comp);
      append_f32(bin, r.vy_comp);
      append_f32(bin, r.timestamp);
    }
    offset += static_cast<int64_t>(f.radar.size());
    j["frames"].push_back(jf);
  }
  write_file_atomic(dir + "/" + name + ".json", j.dump(2) + "\n");
  write_file_atomic(dir + "/" + name + ".bin", bin);
}

SceneSequence load_sequence(const std::string& dir, const std::string& name) {
  std::ifstream is(dir + "/" + name + ".json");
  RCA_CHECK(is.good(), "missing sequence file: " + dir + "/" + name + ".json");
  json j = json::parse(is);

  std::ifstream bs(dir + "/" + name + ".bin", std::ios::binary);
  RCA_CHECK(bs.good(), "missing sequence bin: " + dir + "/" + name + ".bin");
  std::string bin((std::istreambuf_iterator<char>(bs)),
                  std::istreambuf_iterator<char>());

  SceneSequence seq;
  seq.seed = j.value("seed", 0ULL);
  seq.rig = rig_from_json(j.at("rig"));
  for (const auto& jf : j.at("frames")) {
    Frame f;
    f.timestamp = jf.at("t").get<double>();
    auto ego = jf.at("ego").get<std::vector<double>>();
    f.ego = Se2{ego[0], ego[1], ego[2]};
    for (const auto& jo : jf.at("objects")) {
      WorldObject o;
      o.category = jo.at("cat").get<int>();
      auto c = jo.at("center").get<std::vector<double>>();
      auto s = jo.at("size").get<std::vector<double>>();
      auto v = jo.at("vel").get<std::vector<double>>();
      o.center = {c[0], c[1], c[2]};
      o.length = s[0];
      o.width = s[1];
      o.height = s[2];
      o.yaw = jo.at("yaw").get<double>();
      o.vx = v[0];
      o.vy = v[1];
      f.objects.push_back(o);
    }
    int64_t off = jf.at("radar_offset").get<int64_t>();
    int64_t cnt = jf.at("radar_count").get<int64_t>();
    RCA_CHECK(static_cast<size_t>((off + cnt) * 6 * 4) <= bin.size(),
              "sequence bin truncated: " + name);
    for (int64_t i = 0; i < cnt; ++i) {
      float vals[6];
      std::memcpy(vals, bin.data() + (off + i) * 6 * 4, 24);
      RadarReturn r;
      r.x = vals[0];
      r.y = vals[1];
      r.z = vals[2];
      r.vx_comp = vals[3];
      r.vy_comp = vals[4];
      r.timestamp = vals[5];
      f.radar.push_back(r);
    }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

void write_manifest(const std::string& dir,
                    const std::vector<std::string>& names, uint64_t seed,
                    const std::string& scene_config_json) {
  json j;
  j["version"] = 1;
  j["seed"] = seed;
  j["sequences"] = names;
  if (!scene_config_json.empty())
    j["scene_config"] = json::parse(scene_config_json);
  write_file_atomic(dir + "/manifest.json", j.dump(2) + "\n");
}

std::vector<std::string> read_manifest(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  RCA_CHECK(is.good(), "missing manifest: " + dir + "/manifest.json");
  json j = json::parse(is);
  return j.at("sequences").get<std::vector<std::string>>();
}

std::vector<std::string> generate_dataset(uint64_t seed, int num_sequences,
                                          const SceneConfig& config,
                                          const std::string& dir,
                                          int num_workers) {
  config.validate();
  fs::create_directories(dir);
  std::vector<std::string> names(static_cast<size_t>(num_sequences));
  for (int i = 0; i < num_sequences; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "seq_%06d", i);
    names[static_cast<size_t>(i)] = buf;
  }
  parallel_for(num_sequences, num_workers, [&](int i) {
    SceneSequence seq = generate_sequence(seed + static_cast<uint64_t>(i),
                                          config);
    save_sequence(seq, dir, names[static_cast<size_t>(i)]);
  });
  write_manifest(dir, names, seed, "");
  return names;
}

}  // namespace rcalign
