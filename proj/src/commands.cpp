// SPDX-License-Identifier: Apache-2.0

#include "tdsmrp/commands.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "tdsmrp/eval.hpp"
#include "tdsmrp/io.hpp"
#include "tdsmrp/report.hpp"
#include "tdsmrp/simulator.hpp"
#include "tdsmrp/training.hpp"

namespace tdsmrp {

namespace fs = std::filesystem;

namespace {

// Anchor-subsampling streams; evaluation uses EvaluateOptions::eval_seed.
constexpr std::uint64_t kTrainAnchorSeed = 0x7a11;
constexpr std::uint64_t kValidationAnchorSeed = 0x7a12;

template <typename Fn>
int guarded(const char* command, int fallback, Fn&& fn) {
  try {
    return fn();
  } catch (const InvalidInput& e) {
    std::cerr << "tdsmrp " << command << ": invalid input: " << e.what() << '\n';
    return kExitInvalidInput;
  } catch (const TrainingFailure& e) {
    std::cerr << "tdsmrp " << command << ": training failed: " << e.what() << '\n';
    return kExitTrainingFailure;
  } catch (const EvaluationFailure& e) {
    std::cerr << "tdsmrp " << command << ": evaluation failed: " << e.what() << '\n';
    return kExitEvaluationFailure;
  } catch (const std::exception& e) {
    std::cerr << "tdsmrp " << command << ": " << e.what() << '\n';
    return fallback;
  }
}

std::uint64_t text_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string describe(const TrainConfig& c) {
  std::ostringstream os;
  os << "label=" << model_label(c) << " horizon=" << c.horizon_days << " alpha=" << c.alpha
     << " epochs=" << c.max_epochs << " batch=" << c.batch_size << " gamma=" << c.gamma
     << " lr=" << (c.learning_rate ? std::to_string(*c.learning_rate) : "default")
     << " wd=" << (c.weight_decay ? std::to_string(*c.weight_decay) : "default")
     << " precision=" << (c.precision == Precision::single ? "single" : "double")
     << " embed=" << c.model.embed_dim << " hidden=" << c.model.recurrent_hidden
     << " decoder=" << c.model.decoder_hidden << " vocab=" << c.model.feature_vocab << " conv=";
  for (const auto& s : c.model.conv) os << s.kernel << ':' << s.stride << ':' << s.channels << ';';
  return os.str();
}

ExperimentConfig load_experiment(const std::optional<fs::path>& path) {
  return path ? experiment_from_config(load_config(*path)) : ExperimentConfig{};
}

AnchorSampling sampling_for(AnchorSampling sampling, std::uint64_t seed) {
  sampling.seed = seed;
  return sampling;
}

struct Loaded {
  Dataset dataset;
  StandardizationStats stats;
  Split split;
};

Loaded load_prepared(const PreparedData& paths) {
  Loaded l;
  l.dataset = load_dataset(paths.dataset);
  l.stats = load_stats(paths.stats);
  if (l.stats.n_features() != l.dataset.registry.size())
    throw InvalidInput("stats and dataset disagree on the number of features");
  l.split = load_folds(paths.folds).split_for(l.dataset.episodes);
  return l;
}

fs::path checkpoint_path(const fs::path& out_dir, const std::string& label, std::uint64_t seed) {
  return out_dir / label / ("seed" + std::to_string(seed) + ".ckpt");
}

// Shell-style matching over files below the pattern's literal prefix.
std::vector<fs::path> glob_files(const std::string& pattern) {
  std::string pat = pattern;
  if (fs::is_directory(pat)) pat = (fs::path(pat) / "*" / "seed*.ckpt").generic_string();
  const auto wild = pat.find_first_of("*?[");
  fs::path root = wild == std::string::npos ? fs::path(pat) : fs::path(pat.substr(0, wild)).parent_path();
  if (root.empty()) root = ".";
  std::vector<fs::path> out;
  if (wild == std::string::npos) {
    if (fs::is_regular_file(root)) out.push_back(root);
    return out;
  }
  if (!fs::is_directory(root)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::string p = entry.path().generic_string();
    if (root == "." && p.rfind("./", 0) == 0 && pat.rfind("./", 0) != 0) p = p.substr(2);
    if (fnmatch(pat.c_str(), p.c_str(), FNM_PATHNAME) == 0) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  auto number = [&](const std::string& s) {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
      throw InvalidInput("malformed seed list '" + text + "'");
    return static_cast<std::uint64_t>(std::stoull(s));
  };
  std::vector<std::uint64_t> seeds;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const auto lo = number(text.substr(0, dots));
    const auto hi = number(text.substr(dots + 2));
    if (hi < lo || hi - lo > 10000) throw InvalidInput("malformed seed range '" + text + "'");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
  } else {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) seeds.push_back(number(item));
  }
  if (seeds.empty()) throw InvalidInput("empty seed list");
  std::vector<std::uint64_t> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw InvalidInput("duplicate seed in '" + text + "'");
  return seeds;
}

int cmd_simulate(const SimulateOptions& o) {
  return guarded("simulate", kExitInvalidInput, [&] {
    CohortConfig config = cohort_from_config(load_config(o.config));
    if (o.shift) config = apply_shift(config, shift_from_config(load_config(*o.shift), config.registry));
    Dataset ds;
    ds.registry = config.registry;
    ds.episodes = sample_cohort(config, o.episodes, o.seed);
    ds.oracle = absorption_probability(config);
    save_dataset(o.out, ds);
    return kExitOk;
  });
}

int cmd_prepare(const PrepareOptions& o) {
  return guarded("prepare", kExitInvalidInput, [&] {
    double total = 0.0;
    for (double f : o.split) {
      if (!(f >= 0.0)) throw InvalidInput("split fractions must be nonnegative");
      total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("split fractions must sum to 1");
    const Dataset ds = load_dataset(o.dataset);
    const Split split = split_patients(ds.episodes, o.split, o.seed);
    const FitResult fit = fit_standardization(ds.episodes, split.train, ds.registry);
    for (auto f : fit.report.floored)
      std::clog << "tdsmrp prepare: std floored for feature " << ds.registry[f].name << '\n';
    for (auto f : fit.report.unobserved)
      std::clog << "tdsmrp prepare: feature " << ds.registry[f].name << " unobserved in train fold\n";
    const fs::path stats = o.out_dir / "stats.json";
    const fs::path folds = o.out_dir / "folds.json";
    save_stats(stats, fit.stats);
    save_folds(folds, make_fold_index(ds.episodes, split, o.seed, o.split));
    RunManifest m;
    m.command = "prepare";
    std::ostringstream cfg;
    cfg << "seed=" << o.seed << " split=" << o.split[0] << ',' << o.split[1] << ',' << o.split[2];
    m.config_hash = hex64(text_hash(cfg.str()));
    m.seeds = {o.seed};
    m.datasets = {o.dataset};
    m.outputs = {stats, folds};
    save_manifest(o.out_dir / "prepare_manifest.json", m);
    return kExitOk;
  });
}

int cmd_train(const TrainOptions& o) {
  return guarded("train", kExitTrainingFailure, [&] {
    ExperimentConfig exp = load_experiment(o.experiment);
    TrainConfig config = parse_model_label(o.mode, exp.train);
    if (o.balanced) config.balanced = true;
    if (o.delay_x) config.delay_x = *o.delay_x;
    if (o.seeds) config.seeds = *o.seeds;
    const Loaded data = load_prepared(o.data);
    config.model.feature_vocab = static_cast<int>(data.dataset.registry.size());
    validate(config);
    const auto rule = config.mode == TrainMode::td
                          ? std::optional<NextStateRule>(NextStateRule{config.delay_x, 24.0})
                          : std::nullopt;
    const auto train = build_samples(data.dataset.episodes, data.split.train, data.dataset.registry,
                                     data.stats, sampling_for(exp.train_sampling, kTrainAnchorSeed), rule);
    const auto validation =
        build_samples(data.dataset.episodes, data.split.validation, data.dataset.registry, data.stats,
                      sampling_for(exp.train_sampling, kValidationAnchorSeed), std::nullopt);
    const std::string label = model_label(config);
    RunManifest m;
    m.command = "train";
    m.config_hash = hex64(text_hash(describe(config) + " anchors=" + to_string(exp.train_sampling)));
    m.seeds = config.seeds;
    m.datasets = {o.data.dataset, o.data.stats, o.data.folds};
    std::ofstream log;
    const fs::path log_path = o.out_dir / label / "train_log.jsonl";
    fs::create_directories(log_path.parent_path());
    log.open(log_path, std::ios::trunc);
    for (auto seed : config.seeds) {
      const SeedResult r = train_seed(config, seed, train, validation);
      const fs::path ckpt = checkpoint_path(o.out_dir, label, seed);
      save_checkpoint(ckpt, r.model);
      write_training_log(log, r.log);
      log.flush();
      m.checkpoints.push_back(ckpt);
      std::clog << "tdsmrp train: " << label << " seed " << seed << " best epoch " << r.best_epoch
                << " validation AUROC " << r.best_val_metric << " (lr " << r.learning_rate
                << ", wd " << r.weight_decay << ")\n";
    }
    log.close();
    m.outputs = {log_path};
    save_manifest(o.out_dir / label / "manifest.json", m);
    return kExitOk;
  });
}

int cmd_sweep(const SweepOptions& o) {
  return guarded("sweep", kExitTrainingFailure, [&] {
    ExperimentConfig exp = load_experiment(o.experiment);
    TrainConfig config = exp.train;
    config.mode = TrainMode::td;
    config.horizon_days = 28.0;
    if (o.seed) config.seeds = {*o.seed};
    const Loaded data = load_prepared(o.data);
    config.model.feature_vocab = static_cast<int>(data.dataset.registry.size());
    validate(config);
    for (double x : o.delays) validate(NextStateRule{x, 24.0});
    SweepData sd;
    sd.episodes = data.dataset.episodes;
    sd.registry = &data.dataset.registry;
    sd.stats = &data.stats;
    sd.split = &data.split;
    sd.train_sampling = sampling_for(exp.train_sampling, kTrainAnchorSeed);
    sd.validation_sampling = sampling_for(exp.train_sampling, kValidationAnchorSeed);
    const auto rows = sweep_delay(config, o.delays, sd);
    const fs::path table = o.out_dir / "sweep.tsv";
    const fs::path svg = o.out_dir / "sweep.svg";
    fs::create_directories(o.out_dir);
    {
      std::ofstream t(table, std::ios::trunc);
      write_sweep_table(t, rows);
      std::ofstream s(svg, std::ios::trunc);
      write_sweep_svg(s, rows);
    }
    for (const auto& r : rows)
      if (r.selected) std::cout << "selected delay_x " << r.delay_x << " h\n";
    RunManifest m;
    m.command = "sweep";
    std::ostringstream delays;
    for (double x : o.delays) delays << x << ',';
    m.config_hash = hex64(text_hash(describe(config) + " delays=" + delays.str()));
    m.seeds = {config.seeds.front()};
    m.datasets = {o.data.dataset, o.data.stats, o.data.folds};
    m.outputs = {table, svg};
    save_manifest(o.out_dir / "sweep_manifest.json", m);
    return kExitOk;
  });
}

int cmd_evaluate(const EvaluateOptions& o) {
  return guarded("evaluate", kExitEvaluationFailure, [&] {
    const ExperimentConfig exp = load_experiment(o.experiment);
    const Loaded internal = load_prepared(o.internal);
    const Dataset external = load_dataset(o.external);
    if (!(external.registry == internal.dataset.registry))
      throw InvalidInput("external dataset uses a different feature registry");

    const auto files = glob_files(o.checkpoints);
    if (files.empty()) throw EvaluationFailure("no checkpoints match '" + o.checkpoints + "'");
    std::map<std::string, ModelRuns> by_label;
    for (const auto& f : files) {
      const std::string label = f.parent_path().filename().string();
      const std::string stem = f.stem().string();
      if (stem.rfind("seed", 0) != 0)
        throw EvaluationFailure("checkpoint name must be seed<k>.ckpt: " + f.string());
      const auto seed = parse_seed_list(stem.substr(4)).front();
      const TrainConfig parsed = parse_model_label(label);
      auto& runs = by_label[label];
      runs.label = label;
      runs.is_td = parsed.mode == TrainMode::td;
      runs.seeds.push_back(seed);
      runs.models.push_back(load_checkpoint(f));
      if (runs.models.back().config().feature_vocab != static_cast<int>(internal.dataset.registry.size()))
        throw InvalidInput("checkpoint " + f.string() + " was trained on a different feature registry");
    }
    // TD candidates first, then baselines in horizon order.
    std::vector<ModelRuns> runs;
    for (auto& [label, r] : by_label) runs.push_back(std::move(r));
    std::stable_sort(runs.begin(), runs.end(), [](const ModelRuns& a, const ModelRuns& b) {
      if (a.is_td != b.is_td) return a.is_td;
      const auto ca = parse_model_label(a.label), cb = parse_model_label(b.label);
      if (ca.horizon_days != cb.horizon_days) return ca.horizon_days < cb.horizon_days;
      if (ca.delay_x != cb.delay_x) return ca.delay_x < cb.delay_x;
      return a.label < b.label;
    });

    const AnchorSampling sampling = sampling_for(exp.eval_sampling, o.eval_seed);
    const auto test = build_samples(internal.dataset.episodes, internal.split.test,
                                    internal.dataset.registry, internal.stats, sampling, std::nullopt);
    std::vector<std::size_t> all(external.episodes.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto shifted = build_samples(external.episodes, all, external.registry, internal.stats,
                                       sampling, std::nullopt);
    const std::vector<EvalDataset> datasets{{"internal-test", test, internal.dataset.oracle},
                                            {"shifted-external", shifted, external.oracle}};
    const EvalReport report = evaluate_all(runs, datasets);

    fs::create_directories(o.out_dir);
    std::vector<fs::path> outputs{o.out_dir / "report.tsv"};
    {
      std::ofstream t(outputs.back(), std::ios::trunc);
      write_report_table(t, report);
    }
    if (!report.oracle.empty()) {
      outputs.push_back(o.out_dir / "oracle.tsv");
      std::ofstream t(outputs.back(), std::ios::trunc);
      write_oracle_table(t, report);
    }
    for (const auto& d : report.datasets) {
      outputs.push_back(o.out_dir / ("report_" + d + ".svg"));
      std::ofstream s(outputs.back(), std::ios::trunc);
      write_report_svg(s, report, d);
    }
    RunManifest m;
    m.command = "evaluate";
    m.config_hash = hex64(text_hash("eval_seed=" + std::to_string(o.eval_seed) +
                                    " eval_anchors=" + to_string(exp.eval_sampling)));
    m.seeds = report.seeds;
    m.datasets = {o.internal.dataset, o.internal.stats, o.internal.folds, o.external};
    m.checkpoints = files;
    m.outputs = outputs;
    save_manifest(o.out_dir / "evaluate_manifest.json", m);
    return kExitOk;
  });
}

int cmd_fixture(const std::string& name, const fs::path& out) {
  return guarded("fixture", kExitInvalidInput, [&] {
    std::ostringstream text;
    if (name == "default") write_cohort_config(text, default_cohort());
    else if (name == "ladder3") write_cohort_config(text, ladder3_cohort());
    else if (name == "single") write_cohort_config(text, single_state_cohort(0.01, 0.01));
    else if (name == "external-shift") {
      const auto c = default_cohort();
      write_shift_config(text, default_external_shift(c), c.registry);
    } else {
      throw InvalidInput("unknown fixture '" + name + "' (default, ladder3, single, external-shift)");
    }
    if (out.empty()) {
      std::cout << text.str();
    } else {
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      std::ofstream f(out, std::ios::trunc);
      f << text.str();
    }
    return kExitOk;
  });
}

}  // namespace tdsmrp
