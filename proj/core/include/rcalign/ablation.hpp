#pragma once

#include "rcalign/train.hpp"

namespace rcalign {

struct AblationRow {
  std::string name;
  AblationConfig ablation;
};

struct AblationRunResult {
  uint64_t seed = 0;
  MetricsReport metrics;
};

struct AblationRowResult {
  AblationRow row;
  std::vector<AblationRunResult> runs;
  double mean_map2m = 0.0;
  double std_map2m = 0.0;
  double mean_mate = 0.0;
  double mean_mave = 0.0;
};

struct AblationSuite {
  std::vector<AblationRowResult> rows;
};

// canonical component rows: camera baseline, then the radar route, the
// alignment loss, the second route, their combination, and the auxiliary
// head / enhancement / distillation additions
std::vector<AblationRow> default_ablation_rows();

// switches applied over a base config; query capacity stays constant
// (radar queries fold into initial queries when the radar branch is off)
ExperimentConfig apply_ablation(const ExperimentConfig& base,
                                const AblationConfig& ab, uint64_t seed);

// trains rows x seeds against one dataset and evaluates each run; rows
// keep the given order in all outputs
AblationSuite run_ablation_suite(const ExperimentConfig& base,
                                 const std::vector<AblationRow>& rows,
                                 const std::vector<uint64_t>& seeds,
                                 const std::string& data_dir,
                                 const std::string& out_dir,
                                 int num_workers = 0);

// ablation_results.json (machine-readable) + ablation_table.txt (aligned)
void write_ablation_outputs(const AblationSuite& suite,
                            const std::string& out_dir);
std::string ablation_table_text(const AblationSuite& suite);

// grid file: {"seeds":[...], "iterations":N?, "num_sequences":N?,
//             "rows":[{"name":..., "ablation":{partial switches}}]}
struct AblationGrid {
  std::vector<AblationRow> rows;
  std::vector<uint64_t> seeds;
  int iterations_override = 0;   // 0 = keep base
  int num_sequences = 100;       // used when the dataset must be generated
};
AblationGrid parse_grid_file(const std::string& path,
                             const AblationConfig& base);

}  // namespace rcalign
