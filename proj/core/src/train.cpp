#include "rcalign/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "rcalign/dataset.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace rcalign {

TrainResult train_model(const ExperimentConfig& cfg,
                        const std::string& data_dir,
                        const std::string& out_dir,
                        const std::function<bool(int, Model&, double)>& probe,
                        int probe_every) {
  cfg.validate();
  auto names = read_manifest(data_dir);
  RCA_CHECK(!names.empty(), "train: dataset is empty: " + data_dir);
  std::vector<SceneSequence> seqs;
  seqs.reserve(names.size());
  for (const auto& name : names) seqs.push_back(load_sequence(data_dir, name));

  fs::create_directories(out_dir);
  write_file_atomic(out_dir + "/config.json", serialize_config(cfg));

  Model model(cfg);
  AdamW opt(model.params(), cfg.optim);

  Rng shuffle_rng(cfg.seed ^ 0x7e57ab1eULL);
  Rng sampler_rng(cfg.seed ^ 0x5a317e9dULL);

  std::vector<int> order;
  size_t order_pos = 0;
  auto next_sample = [&]() -> int {
    if (order_pos >= order.size()) {
      order.resize(seqs.size());
      for (size_t i = 0; i < seqs.size(); ++i) order[i] = static_cast<int>(i);
      shuffle_rng.shuffle(order);
      order_pos = 0;
    }
    return order[order_pos++];
  };

  std::ostringstream log;
  log << "iteration,lr,total,task,rh1,rh2,align,kd\n";

  TrainResult res;
  double ema = 0.0;
  bool ema_init = false;
  const double ema_alpha = 0.05;
  int ran = 0;

  for (int it = 0; it < cfg.optim.iterations; ++it) {
    double lr = cosine_lr(cfg.optim.lr, cfg.optim.cosine_final, it,
                          cfg.optim.iterations);
    double b_total = 0, b_task = 0, b_rh1 = 0, b_rh2 = 0, b_align = 0,
           b_kd = 0;
    for (int b = 0; b < cfg.optim.batch_size; ++b) {
      int si = next_sample();
      const SceneSequence& seq = seqs[static_cast<size_t>(si)];
      int fi = static_cast<int>(seq.frames.size()) - 1;

      TemporalQueries temporal;
      if (cfg.model.temporal_queries > 0 && fi > 0) {
        SampleInput prev = make_sample(seq, fi - 1, cfg);
        ForwardOutput prev_out =
            model.forward(prev, /*train=*/false, &sampler_rng);
        temporal = model.make_temporal(
            prev_out, seq.frames[static_cast<size_t>(fi - 1)].ego,
            seq.frames[static_cast<size_t>(fi)].ego);
      }

      SampleInput sample = make_sample(seq, fi, cfg);
      ForwardOutput out;
      try {
        out = model.forward(sample, /*train=*/true, &sampler_rng,
                            temporal.count() > 0 ? &temporal : nullptr);
      } catch (const std::exception& e) {
        throw std::runtime_error("train: aborted at iteration " +
                                 std::to_string(it) + ", sequence " +
                                 names[static_cast<size_t>(si)] + ": " +
                                 e.what());
      }
      ad::Var scaled =
          ad::mul_scalar(out.total, 1.0 / cfg.optim.batch_size);
      ad::backward(scaled);
      b_total += out.loss_total;
      b_task += out.loss_task;
      b_rh1 += out.loss_rh1;
      b_rh2 += out.loss_rh2;
      b_align += out.loss_align;
      b_kd += out.loss_kd;
    }
    opt.step(lr);
    model.params().zero_grads();

    double bs = cfg.optim.batch_size;
    double mean_total = b_total / bs;
    if (!std::isfinite(mean_total))
      throw std::runtime_error("train: loss diverged (non-finite) at iteration " +
                               std::to_string(it));
    if (!ema_init) {
      ema = mean_total;
      ema_init = true;
      res.initial_smoothed_loss = ema;
    } else {
      ema = (1.0 - ema_alpha) * ema + ema_alpha * mean_total;
    }
    res.smoothed_history.push_back(ema);
    ran = it + 1;

    if (cfg.optim.log_every > 0 && it % cfg.optim.log_every == 0) {
      char line[256];
      std::snprintf(line, sizeof(line),
                    "%d,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g\n", it, lr,
                    mean_total, b_task / bs, b_rh1 / bs, b_rh2 / bs,
                    b_align / bs, b_kd / bs);
      log << line;
    }
    if (cfg.optim.checkpoint_every > 0 && (it + 1) % cfg.optim.checkpoint_every == 0 &&
        it + 1 < cfg.optim.iterations) {
      Checkpoint ck;
      ck.iteration = static_cast<uint64_t>(it + 1);
      ck.config_json = serialize_config(cfg);
      store_params(model.params(), &ck);
      opt.state_to(&ck);
      char name[64];
      std::snprintf(name, sizeof(name), "/ckpt_%06d.rckpt", it + 1);
      save_checkpoint(ck, out_dir + name);
    }
    if (probe && probe_every > 0 && (it + 1) % probe_every == 0) {
      if (probe(it + 1, model, ema)) break;
    }
  }

  res.iterations_run = ran;
  res.final_smoothed_loss = ema;

  Checkpoint ck;
  ck.iteration = static_cast<uint64_t>(ran);
  ck.config_json = serialize_config(cfg);
  store_params(model.params(), &ck);
  opt.state_to(&ck);
  res.checkpoint_path = out_dir + "/ckpt_final.rckpt";
  save_checkpoint(ck, res.checkpoint_path);

  write_file_atomic(out_dir + "/loss_log.csv", log.str());

  nlohmann::json mj;
  mj["iterations"] = ran;
  mj["initial_smoothed_loss"] = res.initial_smoothed_loss;
  mj["final_smoothed_loss"] = res.final_smoothed_loss;
  write_file_atomic(out_dir + "/metrics.json", mj.dump(2) + "\n");
  return res;
}

}  // namespace rcalign
