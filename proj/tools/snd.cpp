// Command-line entry point: run, sweep, analyze.

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "snd/analysis.hpp"
#include "snd/checkpoint.hpp"
#include "snd/errors.hpp"
#include "snd/experiment.hpp"
#include "snd/serialize.hpp"
#include "snd/stats_tests.hpp"

namespace fs = std::filesystem;
using namespace snd;

namespace {

ExperimentConfig config_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
  ExperimentConfig c = path.empty() ? parse_config("") : load_config(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw LoadError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(' '));
      s.erase(s.find_last_not_of(' ') + 1);
      return s;
    };
    set_config_value(c, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  validate(c);
  return c;
}

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const auto s = std::stoull(text);
      return {s, s};
    }
    return {std::stoull(text.substr(0, dots)), std::stoull(text.substr(dots + 2))};
  } catch (const std::exception&) {
    throw ContractError("--seeds expects a..b, got '" + text + "'");
  }
}

/// Module restored from a checkpoint, or freshly initialized from a config.
MotivationModule module_from(const std::string& checkpoint, const std::string& config,
                             const std::vector<std::string>& sets, std::uint64_t seed) {
  if (!checkpoint.empty()) {
    const auto c = checkpoint_config(checkpoint);
    Trainer t = load_checkpoint(c, checkpoint);
    if (t.motivation() == nullptr) throw ContractError("checkpoint has no motivation module");
    return *t.motivation();
  }
  auto c = config_with_overrides(config, sets);
  if (c.motivation.variant == Variant::none) throw ContractError("motivation.variant is none");
  MotivationConfig m = c.motivation;
  m.input_shape = {1, c.env.world.obs_size, c.env.world.obs_size};
  return MotivationModule(m, seed);
}

std::vector<double> load_sample(const std::string& source, const std::string& metric) {
  std::vector<double> out;
  if (fs::is_directory(source)) {
    std::vector<fs::path> runs;
    for (const auto& e : fs::directory_iterator(source)) {
      if (fs::exists(e.path() / "summary.json")) runs.push_back(e.path());
    }
    if (fs::exists(fs::path(source) / "summary.json")) runs.push_back(source);
    std::sort(runs.begin(), runs.end());
    for (const auto& r : runs) {
      const auto j = nlohmann::json::parse(read_text_file(r / "summary.json"));
      if (!j.contains(metric)) throw ContractError("summary " + r.string() + " has no field '" + metric + "'");
      out.push_back(j.at(metric).get<double>());
    }
  } else {
    std::ifstream in(source);
    if (!in) throw LoadError("cannot read sample file " + source);
    std::string tok;
    while (in >> tok) {
      for (char& ch : tok) {
        if (ch == ',') ch = ' ';
      }
      std::istringstream parts(tok);
      double v;
      while (parts >> v) out.push_back(v);
    }
  }
  if (out.empty()) throw ContractError("no values found in " + source);
  return out;
}

void write_matrix(const fs::path& path, const std::vector<double>& m, std::size_t k, const std::string& kind) {
  std::vector<float> f(m.begin(), m.end());
  write_framed_f32(path, {{"kind", kind}, {"shape", {k, k}}}, f);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised network distillation lab"};
  app.require_subcommand(1);

  std::string config_path, out_dir, resume;
  std::vector<std::string> sets;
  std::uint64_t seed = 0, max_updates = 0;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Train one agent");
  run->add_option("--config", config_path, "Config file")->required();
  auto* run_seed = run->add_option("--seed", seed, "Overrides run.seed");
  run->add_option("--out", out_dir, "Overrides run.out");
  run->add_option("--set", sets, "Extra key=value overrides");
  run->add_option("--resume", resume, "Checkpoint prefix to continue from");
  run->add_option("--max-updates", max_updates, "Stop after this many updates");
  run->add_flag("--quiet", quiet, "No progress lines");

  std::string seeds;
  std::size_t jobs = 1;
  auto* sw = app.add_subcommand("sweep", "Train one agent per seed");
  sw->add_option("--config", config_path, "Config file")->required();
  sw->add_option("--seeds", seeds, "Seed range a..b")->required();
  sw->add_option("--out", out_dir, "Root directory (default run.out)");
  sw->add_option("--set", sets, "Extra key=value overrides");
  sw->add_option("--jobs", jobs, "Concurrent runs");

  auto* an = app.add_subcommand("analyze", "Diagnostics over checkpoints, state logs and summaries");
  an->require_subcommand(1);
  std::string checkpoint, log_path, output, features_path;

  ProbeConfig probe_cfg;
  std::size_t position = 0;
  auto* probe = an->add_subcommand("probe", "Novelty-horizon probe");
  probe->add_option("--checkpoint", checkpoint, "Checkpoint prefix holding the module");
  probe->add_option("--config", config_path, "Config for a freshly initialized module");
  probe->add_option("--set", sets, "Extra key=value overrides");
  probe->add_option("--log", log_path, "State log")->required();
  probe->add_option("--out", output, "CSV path")->required();
  probe->add_option("--steps", probe_cfg.train_steps, "Module updates");
  probe->add_option("--batch", probe_cfg.batch_size, "Training batch size");
  probe->add_option("--eval-batch", probe_cfg.eval_batch, "States per horizon per evaluation");
  probe->add_option("--eval-every", probe_cfg.eval_every, "Updates between evaluations (fixed position)");
  probe->add_option("--position", position, "Fixed position n (default: advance through the log)");
  probe->add_option("--seed", probe_cfg.seed, "Sampling seed");

  std::size_t count = 256;
  auto* dist = an->add_subcommand("distances", "Distance matrices over raw states and target features");
  dist->add_option("--log", log_path, "State log")->required();
  dist->add_option("--checkpoint", checkpoint, "Checkpoint prefix for feature distances");
  dist->add_option("--count", count, "Leading states used");
  dist->add_option("--out", output, "Output prefix")->required();

  auto* spec = an->add_subcommand("spectrum", "PCA eigenvalue spectrum of target features");
  spec->add_option("--checkpoint", checkpoint, "Checkpoint prefix");
  spec->add_option("--log", log_path, "State log fed through the target");
  spec->add_option("--features", features_path, "Framed f32 (N, D) features instead");
  spec->add_option("--out", output, "Output prefix")->required();

  std::string sample_a, sample_b, metric = "mean_return", alternative = "two-sided";
  auto* cmp = an->add_subcommand("compare", "Mann-Whitney U between two samples");
  cmp->add_option("--a", sample_a, "Sweep directory or file of numbers")->required();
  cmp->add_option("--b", sample_b, "Sweep directory or file of numbers")->required();
  cmp->add_option("--metric", metric, "summary.json field when reading sweep directories");
  cmp->add_option("--alternative", alternative, "two-sided | greater")->check(CLI::IsMember({"two-sided", "greater"}));
  cmp->add_option("--out", output, "JSON path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      auto c = config_with_overrides(config_path, sets);
      if (run_seed->count() > 0) c.run.seed = seed;
      if (!out_dir.empty()) c.run.out = out_dir;
      RunOptions opts;
      if (!resume.empty()) opts.resume = resume;
      if (max_updates > 0) opts.max_updates = max_updates;
      opts.quiet = quiet;
      const auto s = run_experiment(c, opts);
      std::cout << s.to_json().dump(2) << "\n";
    } else if (sw->parsed()) {
      auto c = config_with_overrides(config_path, sets);
      if (!out_dir.empty()) c.run.out = out_dir;
      const auto [a, b] = parse_seed_range(seeds);
      const auto results = sweep(c, a, b, jobs, false);
      std::printf("seed,mean_return,max_return,mean_rooms,max_rooms,coverage\n");
      for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& s = results[i];
        std::printf("%llu,%.9g,%.9g,%.9g,%.9g,%zu\n", static_cast<unsigned long long>(a + i), s.mean_return,
                    s.max_return, s.mean_rooms, s.max_rooms, s.coverage);
      }
    } else if (probe->parsed()) {
      if (checkpoint.empty() && config_path.empty()) throw ContractError("probe needs --checkpoint or --config");
      auto module = module_from(checkpoint, config_path, sets, probe_cfg.seed);
      if (position > 0) probe_cfg.fixed_position = position;
      const auto report = novelty_probe(module, load_state_log(log_path), probe_cfg);
      write_text_file(output, report.to_csv());
    } else if (dist->parsed()) {
      const auto log = load_state_log(log_path);
      const std::size_t k = std::min(count, log.size());
      const Tensor states = log.states.rows(0, k);
      write_matrix(output + "_states.f32", distance_matrix(states.reshaped({k, states.stride0()})), k, "distances");
      if (!checkpoint.empty()) {
        const auto module = module_from(checkpoint, "", {}, 0);
        const auto feats = target_features(module, module.prepare(states));
        write_matrix(output + "_features.f32", distance_matrix(feats), k, "distances");
      }
    } else if (spec->parsed()) {
      Tensor feats;
      std::vector<std::uint32_t> labels;
      if (!features_path.empty()) {
        auto [header, values] = read_framed_f32(features_path);
        feats = Tensor(header.at("shape").get<Shape>(), std::move(values));
      } else {
        if (checkpoint.empty() || log_path.empty()) throw ContractError("spectrum needs --features or --checkpoint with --log");
        const auto log = load_state_log(log_path);
        const auto module = module_from(checkpoint, "", {}, 0);
        feats = target_features(module, module.prepare(log.states));
        labels = log.rooms;
      }
      const auto report = pca_spectrum(feats);
      if (report.underdetermined) std::fprintf(stderr, "warning: fewer samples than feature dimensions\n");
      write_text_file(output + "_eigenvalues.csv", report.eigenvalues_csv());
      write_text_file(output + "_summary.csv", report.summary_csv());
      const auto proj = pca_project2d(tensor_cast<double>(feats), labels);
      std::string csv = "pc1,pc2,room\n";
      for (std::size_t i = 0; i < proj.coords.dim(0); ++i) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%d\n", proj.coords(i, 0), proj.coords(i, 1),
                      proj.labels.empty() ? -1 : static_cast<int>(proj.labels[i]));
        csv += buf;
      }
      write_text_file(output + "_projection.csv", csv);
      std::cout << report.summary_csv();
    } else if (cmp->parsed()) {
      const auto a = load_sample(sample_a, metric);
      const auto b = load_sample(sample_b, metric);
      const auto r = mann_whitney_u(a, b, alternative == "greater" ? Alternative::greater : Alternative::two_sided);
      const nlohmann::json j{{"U", r.u}, {"U_a", r.u_a},       {"p", r.p},          {"exact", r.exact},
                             {"n_a", a.size()}, {"n_b", b.size()}, {"metric", metric}, {"alternative", alternative}};
      std::cout << j.dump(2) << "\n";
      if (!output.empty()) write_text_file(output, j.dump(2) + "\n");
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
