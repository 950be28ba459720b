#include "rcalign/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "rcalign/dataset.hpp"
#include "rcalign/workers.hpp"
#include "json.hpp"

using nlohmann::json;

namespace rcalign {

std::vector<AblationRow> default_ablation_rows() {
  auto sw = [](bool da, bool sda, bool cl, bool rh, bool rfe, bool srh,
               bool kd) {
    AblationConfig a;
    a.radar_route = da;
    a.second_route = sda;
    a.contrastive = cl;
    a.radar_head = rh;
    a.rfe = rfe;
    a.second_radar_head = srh;
    a.kd = kd;
    return a;
  };
  return {
      {"C", sw(false, false, false, false, false, false, false)},
      {"DA", sw(true, false, false, false, false, false, false)},
      {"DA+CL", sw(true, false, true, false, false, false, false)},
      {"DA+SDA", sw(true, true, false, false, false, false, false)},
      {"DA+SDA+CL", sw(true, true, true, false, false, false, false)},
      {"+RH", sw(true, true, true, true, false, false, false)},
      {"+SRH", sw(true, true, true, true, true, true, false)},
      {"+KD", sw(true, true, true, true, true, true, true)},
  };
}

ExperimentConfig apply_ablation(const ExperimentConfig& base,
                                const AblationConfig& ab, uint64_t seed) {
  ExperimentConfig cfg = base;
  cfg.ablation = ab;
  cfg.seed = seed;
  if (!ab.radar_head || !ab.radar_route) {
    cfg.model.initial_queries += cfg.model.radar_queries;
    cfg.model.radar_queries = 0;
  }
  cfg.validate();
  return cfg;
}

AblationSuite run_ablation_suite(const ExperimentConfig& base,
                                 const std::vector<AblationRow>& rows,
                                 const std::vector<uint64_t>& seeds,
                                 const std::string& data_dir,
                                 const std::string& out_dir,
                                 int num_workers) {
  RCA_CHECK(!rows.empty() && !seeds.empty(),
            "run_ablation_suite: empty grid");
  std::filesystem::create_directories(out_dir);

  struct Job {
    int row;
    uint64_t seed;
  };
  std::vector<Job> jobs;
  for (size_t r = 0; r < rows.size(); ++r)
    for (uint64_t s : seeds) jobs.push_back({static_cast<int>(r), s});

  std::vector<MetricsReport> reports(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), num_workers, [&](int ji) {
    const Job& job = jobs[static_cast<size_t>(ji)];
    ExperimentConfig cfg =
        apply_ablation(base, rows[static_cast<size_t>(job.row)].ablation,
                       job.seed);
    std::string run_dir = out_dir + "/run_" +
                          rows[static_cast<size_t>(job.row)].name + "_s" +
                          std::to_string(job.seed);
    TrainResult tr = train_model(cfg, data_dir, run_dir);
    Checkpoint ck = load_checkpoint(tr.checkpoint_path);
    Model model(cfg);
    load_params_into(model.params(), ck);
    reports[static_cast<size_t>(ji)] =
        evaluate_dir(model, data_dir, /*num_workers=*/1);
  });

  AblationSuite suite;
  for (size_t r = 0; r < rows.size(); ++r) {
    AblationRowResult rr;
    rr.row = rows[r];
    double sum = 0, sum2 = 0, mate = 0, mave = 0;
    for (size_t ji = 0; ji < jobs.size(); ++ji) {
      if (jobs[ji].row != static_cast<int>(r)) continue;
      AblationRunResult run;
      run.seed = jobs[ji].seed;
      run.metrics = reports[ji];
      sum += run.metrics.map_2m;
      sum2 += run.metrics.map_2m * run.metrics.map_2m;
      mate += run.metrics.mate;
      mave += run.metrics.mave;
      rr.runs.push_back(std::move(run));
    }
    double n = static_cast<double>(rr.runs.size());
    rr.mean_map2m = sum / n;
    rr.std_map2m = std::sqrt(std::max(0.0, sum2 / n - rr.mean_map2m * rr.mean_map2m));
    rr.mean_mate = mate / n;
    rr.mean_mave = mave / n;
    suite.rows.push_back(std::move(rr));
  }
  write_ablation_outputs(suite, out_dir);
  return suite;
}

std::string ablation_table_text(const AblationSuite& suite) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-12s %2s %3s %2s %2s %3s %2s | %-18s %-8s %-8s\n",
                "row", "DA", "SDA", "CL", "RH", "SRH", "KD", "mAP@2m", "mATE",
                "mAVE");
  out += line;
  out += std::string(78, '-') + "\n";
  for (const auto& r : suite.rows) {
    const auto& a = r.row.ablation;
    auto mark = [](bool b) { return b ? "x" : "-"; };
    char metric[64];
    std::snprintf(metric, sizeof(metric), "%.3f +/- %.3f", r.mean_map2m,
                  r.std_map2m);
    std::snprintf(line, sizeof(line),
                  "%-12s %2s %3s %2s %2s %3s %2s | %-18s %-8.3f %-8.3f\n",
                  r.row.name.c_str(), mark(a.radar_route),
                  mark(a.second_route), mark(a.contrastive),
                  mark(a.radar_head), mark(a.second_radar_head), mark(a.kd),
                  metric, r.mean_mate, r.mean_mave);
    out += line;
  }
  return out;
}

void write_ablation_outputs(const AblationSuite& suite,
                            const std::string& out_dir) {
  json rows = json::array();
  for (const auto& r : suite.rows) {
    json jr;
    jr["name"] = r.row.name;
    jr["switches"] = {{"radar_route", r.row.ablation.radar_route},
                      {"second_route", r.row.ablation.second_route},
                      {"contrastive", r.row.ablation.contrastive},
                      {"radar_head", r.row.ablation.radar_head},
                      {"rfe", r.row.ablation.rfe},
                      {"second_radar_head", r.row.ablation.second_radar_head},
                      {"kd", r.row.ablation.kd},
                      {"sampling_method", r.row.ablation.sampling_method},
                      {"alignment_loss", r.row.ablation.alignment_loss}};
    json runs = json::array();
    for (const auto& run : r.runs) {
      runs.push_back({{"seed", run.seed},
                      {"map_2m", run.metrics.map_2m},
                      {"map", run.metrics.map},
                      {"mate", run.metrics.mate},
                      {"mave", run.metrics.mave}});
    }
    jr["runs"] = runs;
    jr["mean_map2m"] = r.mean_map2m;
    jr["std_map2m"] = r.std_map2m;
    jr["mean_mate"] = r.mean_mate;
    jr["mean_mave"] = r.mean_mave;
    rows.push_back(jr);
  }
  write_file_atomic(out_dir + "/ablation_results.json", rows.dump(2) + "\n");
  write_file_atomic(out_dir + "/ablation_table.txt",
                    ablation_table_text(suite));
}

AblationGrid parse_grid_file(const std::string& path,
                             const AblationConfig& base) {
  std::ifstream is(path);
  RCA_CHECK(is.good(), "cannot open grid file: " + path);
  json j = json::parse(is);
  AblationGrid grid;
  if (j.contains("seeds"))
    grid.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  else
    grid.seeds = {0};
  if (j.contains("iterations"))
    grid.iterations_override = j.at("iterations").get<int>();
  if (j.contains("num_sequences"))
    grid.num_sequences = j.at("num_sequences").get<int>();
  RCA_CHECK(j.contains("rows"), "grid file: missing rows");
  for (const auto& jr : j.at("rows")) {
    AblationRow row;
    row.name = jr.at("name").get<std::string>();
    row.ablation = base;
    if (jr.contains("ablation")) {
      const json& a = jr.at("ablation");
      if (a.contains("radar_route"))
        a.at("radar_route").get_to(row.ablation.radar_route);
      if (a.contains("second_route"))
        a.at("second_route").get_to(row.ablation.second_route);
      if (a.contains("contrastive"))
        a.at("contrastive").get_to(row.ablation.contrastive);
      if (a.contains("radar_head"))
        a.at("radar_head").get_to(row.ablation.radar_head);
      if (a.contains("rfe")) a.at("rfe").get_to(row.ablation.rfe);
      if (a.contains("second_radar_head"))
        a.at("second_radar_head").get_to(row.ablation.second_radar_head);
      if (a.contains("kd")) a.at("kd").get_to(row.ablation.kd);
      if (a.contains("sampling_method"))
        a.at("sampling_method").get_to(row.ablation.sampling_method);
      if (a.contains("alignment_loss"))
        a.at("alignment_loss").get_to(row.ablation.alignment_loss);
    }
    grid.rows.push_back(std::move(row));
  }
  return grid;
}

}  // namespace rcalign
