// pnda: command-line driver for the adaptive rotation-augmentation pipeline.
//
// Subcommands: sample-rai, pretrain, lineval, ratio-sweep, report.
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 tuning-criterion failure.
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pnda/harness.hpp"
#include "pnda/io.hpp"
#include "pnda/lineval.hpp"
#include "pnda/losses.hpp"
#include "pnda/sampler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pnda;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitTuning = 4;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TuningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- configuration ------------------------------------------------------

void check_keys(const json& obj, const std::string& section,
                const std::vector<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("section '" + section + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown key '" + section + "." + key + "'");
  }
}

json load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file: " + path);
  json cfg;
  try {
    cfg = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(cfg, "<root>", {"corpus", "sampler", "experiment", "lineval"});
  return cfg;
}

// `--override a.b.c=value`; value is parsed as JSON when possible so that
// numbers, booleans, and arrays round-trip, otherwise taken as a string.
void apply_override(json& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key.path=value: " + kv);
  const std::string path = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &cfg;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = value;
}

template <typename T>
T get_or(const json& obj, const std::string& key, const T& fallback) {
  try {
    return obj.is_object() ? obj.value(key, fallback) : fallback;
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

nn::OptimizerSpec parse_optimizer(const json& obj, const nn::OptimizerSpec& defaults,
                                  const std::string& section) {
  if (obj.is_null()) return defaults;
  check_keys(obj, section, {"algo", "lr", "momentum", "weight_decay", "cosine_decay"});
  nn::OptimizerSpec spec = defaults;
  spec.algo = get_or(obj, "algo", spec.algo);
  spec.lr = get_or(obj, "lr", spec.lr);
  spec.momentum = get_or(obj, "momentum", spec.momentum);
  spec.weight_decay = get_or(obj, "weight_decay", spec.weight_decay);
  spec.cosine_decay = get_or(obj, "cosine_decay", spec.cosine_decay);
  if (spec.algo != "adam" && spec.algo != "sgd")
    throw ConfigError(section + ".algo must be 'adam' or 'sgd'");
  return spec;
}

nn::EncoderSpec parse_encoder(const json& obj, const nn::EncoderSpec& defaults,
                              const std::string& section) {
  if (obj.is_null()) return defaults;
  check_keys(obj, section, {"image_size", "in_channels", "channels"});
  nn::EncoderSpec spec = defaults;
  spec.image_size = get_or(obj, "image_size", spec.image_size);
  spec.in_channels = get_or(obj, "in_channels", spec.in_channels);
  spec.channels = get_or(obj, "channels", spec.channels);
  if (spec.image_size < 2 || spec.channels.empty())
    throw ConfigError(section + ": bad encoder geometry");
  return spec;
}

// Corpus: generated synthetic set, or a CSV under PNDA_DATA_DIR with lines
// `id,truth,size,channels,p0,p1,...`.
std::vector<ImageSample> load_corpus_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read corpus file: " + path);
  std::vector<ImageSample> corpus;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    ImageSample img;
    std::string truth_s, size_s, ch_s, px;
    if (!std::getline(ss, img.id, ',') || !std::getline(ss, truth_s, ',') ||
        !std::getline(ss, size_s, ',') || !std::getline(ss, ch_s, ','))
      throw ConfigError("malformed corpus record: " + line);
    img.size = std::stoi(size_s);
    img.channels = std::stoi(ch_s);
    if (truth_s == "RAI")
      img.truth = RaiVerdict::RAI;
    else if (truth_s == "NON_RAI")
      img.truth = RaiVerdict::NON_RAI;
    else if (truth_s != "-")
      throw ConfigError("corpus truth must be RAI, NON_RAI, or -: " + line);
    while (std::getline(ss, px, ',')) img.pixels.push_back(std::stod(px));
    img.validate();
    corpus.push_back(std::move(img));
  }
  if (corpus.empty()) throw ConfigError("corpus file is empty: " + path);
  return corpus;
}

std::vector<ImageSample> build_corpus(const json& cfg, std::uint64_t seed_override,
                                      bool has_seed_override) {
  const json obj = cfg.value("corpus", json::object());
  check_keys(obj, "corpus",
             {"path", "n_rai", "n_nonrai", "image_size", "channels", "noise_sigma", "seed"});
  if (obj.contains("path")) {
    fs::path p = obj["path"].get<std::string>();
    if (p.is_relative()) {
      if (const char* root = std::getenv("PNDA_DATA_DIR")) p = fs::path(root) / p;
    }
    return load_corpus_csv(p.string());
  }
  harness::SyntheticCorpusSpec spec;
  spec.n_rai = get_or(obj, "n_rai", spec.n_rai);
  spec.n_nonrai = get_or(obj, "n_nonrai", spec.n_nonrai);
  spec.image_size = get_or(obj, "image_size", spec.image_size);
  spec.channels = get_or(obj, "channels", spec.channels);
  spec.noise_sigma = get_or(obj, "noise_sigma", spec.noise_sigma);
  spec.seed = get_or(obj, "seed", spec.seed);
  if (has_seed_override) spec.seed = seed_override;
  return harness::generate_synthetic_corpus(spec);
}

sampler::SamplerConfig parse_sampler(const json& cfg) {
  const json obj = cfg.value("sampler", json::object());
  check_keys(obj, "sampler",
             {"beta1", "beta2", "lambda_prime", "margin", "rho", "batch_size", "seed",
              "tune_tolerance", "probe_max_epochs", "step2_lr", "optimizer", "encoder"});
  sampler::SamplerConfig sc;
  sc.beta1 = get_or(obj, "beta1", sc.beta1);
  sc.beta2 = get_or(obj, "beta2", sc.beta2);
  sc.lambda_prime = get_or(obj, "lambda_prime", sc.lambda_prime);
  sc.margin = get_or(obj, "margin", sc.margin);
  sc.rho = get_or(obj, "rho", sc.rho);
  sc.batch_size = get_or(obj, "batch_size", sc.batch_size);
  sc.seed = get_or(obj, "seed", sc.seed);
  sc.tune_tolerance = get_or(obj, "tune_tolerance", sc.tune_tolerance);
  sc.opt = parse_optimizer(obj.value("optimizer", json()), sc.opt, "sampler.optimizer");
  sc.encoder = parse_encoder(obj.value("encoder", json()), sc.encoder, "sampler.encoder");
  return sc;
}

harness::ExperimentConfig parse_experiment(const json& cfg) {
  const json obj = cfg.value("experiment", json::object());
  check_keys(obj, "experiment",
             {"framework", "mode", "projection_dim", "tau", "alpha", "batch_size", "epochs",
              "ema_momentum", "queue_size", "seed", "debug_specs", "optimizer", "encoder"});
  harness::ExperimentConfig ec;
  ec.framework = harness::framework_from_string(get_or<std::string>(obj, "framework", "simclr"));
  ec.mode = losses::aug_mode_from_string(get_or<std::string>(obj, "mode", "none"));
  ec.projection_dim = get_or(obj, "projection_dim", ec.projection_dim);
  ec.tau = get_or(obj, "tau",
                  ec.framework == harness::Framework::MOCO_V2 ? losses::kDefaultTauMoco
                                                              : losses::kDefaultTauSimclr);
  ec.alpha = get_or(obj, "alpha", ec.alpha);
  ec.batch_size = get_or(obj, "batch_size", ec.batch_size);
  ec.epochs = get_or(obj, "epochs", ec.epochs);
  ec.ema_momentum = get_or(obj, "ema_momentum", ec.ema_momentum);
  ec.queue_size = get_or(obj, "queue_size", ec.queue_size);
  ec.seed = get_or(obj, "seed", ec.seed);
  ec.record_debug = get_or(obj, "debug_specs", false);
  ec.opt = parse_optimizer(obj.value("optimizer", json()), ec.opt, "experiment.optimizer");
  ec.encoder = parse_encoder(obj.value("encoder", json()), ec.encoder, "experiment.encoder");
  try {
    ec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return ec;
}

lineval::LinearProbeConfig parse_lineval(const json& cfg) {
  const json obj = cfg.value("lineval", json::object());
  check_keys(obj, "lineval",
             {"epochs", "batch_size", "lr", "momentum", "milestones", "holdout_fraction",
              "seed"});
  lineval::LinearProbeConfig lc;
  lc.epochs = get_or(obj, "epochs", lc.epochs);
  lc.batch_size = get_or(obj, "batch_size", lc.batch_size);
  lc.lr = get_or(obj, "lr", lc.lr);
  lc.momentum = get_or(obj, "momentum", lc.momentum);
  lc.milestones = get_or(obj, "milestones", lc.milestones);
  lc.holdout_fraction = get_or(obj, "holdout_fraction", lc.holdout_fraction);
  lc.seed = get_or(obj, "seed", lc.seed);
  try {
    lc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return lc;
}

// ---- manifests ----------------------------------------------------------

struct Manifest {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  fs::path out_dir;
  std::vector<std::string> artifacts;

  fs::path track(const fs::path& rel) {
    artifacts.push_back(rel.string());
    return out_dir / rel;
  }

  // written last: its presence marks the run as complete
  void write() const {
    json j{{"command", command},
           {"config", config_path},
           {"seed", seed},
           {"out_dir", out_dir.string()},
           {"artifacts", artifacts},
           {"written_unix", static_cast<long>(std::time(nullptr))}};
    std::ofstream f(out_dir / "manifest.json");
    f << j.dump(2) << '\n';
  }
};

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool has_seed = false;
  int jobs = 1;
  std::vector<std::string> overrides;

  json config() const {
    json cfg = config_path.empty() ? json::object() : load_config(config_path);
    for (const auto& kv : overrides) apply_override(cfg, kv);
    return cfg;
  }

  Manifest manifest(const std::string& command) const {
    Manifest m;
    m.command = command;
    m.config_path = config_path;
    m.seed = seed;
    m.out_dir = out_dir;
    fs::create_directories(m.out_dir);
    return m;
  }
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
  auto* c = cmd->add_option("--config", opts.config_path, "JSON config file");
  if (config_required) c->required();
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", opts.seed, "seed override for all stages")
      ->each([&](const std::string&) { opts.has_seed = true; });
  cmd->add_option("--jobs", opts.jobs, "sweep parallelism (cells run sequentially when 1)");
  cmd->add_option("--override", opts.overrides, "key.path=value config override")
      ->take_all();
}

std::vector<int> truth_labels(const std::vector<ImageSample>& corpus) {
  std::vector<int> labels;
  for (const auto& img : corpus) {
    if (!img.truth) throw ConfigError("corpus image '" + img.id + "' has no class label");
    labels.push_back(*img.truth == RaiVerdict::RAI ? 1 : 0);
  }
  return labels;
}

// ---- subcommands --------------------------------------------------------

int cmd_sample_rai(const CommonOpts& opts) {
  json cfg = opts.config();
  auto corpus = build_corpus(cfg, opts.seed, opts.has_seed);
  sampler::SamplerConfig sc = parse_sampler(cfg);
  if (opts.has_seed) sc.seed = opts.seed;

  const json sobj = cfg.value("sampler", json::object());
  if (!sobj.contains("beta1")) {
    const int probe_max = get_or(sobj, "probe_max_epochs", 10);
    auto probe = sampler::overfit_probe(corpus, sc, probe_max);
    sc.beta1 = probe.best_epoch;
    std::cout << "overfit probe selected " << sc.beta1 << " step-1 epochs\n";
  }

  auto model = sampler::make_rotation_predictor(sc.encoder, sc.seed);
  auto r1 = sampler::train_step1(corpus, model, sc);
  auto scores1 = sampler::score_corpus(model, corpus);

  sampler::SamplerConfig sc2 = sc;
  sc2.opt.lr = get_or(sobj, "step2_lr", sc.opt.lr);
  auto r2 = sampler::train_step2(corpus, model, sc2);
  auto scores2 = sampler::score_corpus(model, corpus);

  std::vector<std::pair<std::string, double>> pairs;
  for (const auto& rec : scores2) pairs.emplace_back(rec.id, rec.score);
  auto part = sampler::partition(pairs, sc.rho, sc.margin);
  part.step1_accuracy = r1.final_accuracy;
  part.step2_accuracy = r2.final_accuracy;

  Manifest m = opts.manifest("sample-rai");
  json snapshot = cfg;
  snapshot["sampler"]["beta1"] = sc.beta1;
  io::save_partition(m.track("partition.csv").string(), part, snapshot.dump());
  m.artifacts.push_back("partition.csv.meta.json");

  std::vector<double> s1, s2;
  for (const auto& r : scores1) s1.push_back(r.score);
  for (const auto& r : scores2) s2.push_back(r.score);
  io::save_score_histogram(m.track("score_histogram.csv").string(), s1, s2);

  std::cout << "partition: " << part.rai_count() << " RAI of " << part.records.size()
            << "; rotation accuracy step1=" << r1.final_accuracy
            << " step2=" << r2.final_accuracy << '\n';

  const bool tuned = sampler::tune_check(r1.final_accuracy, r2.final_accuracy,
                                         sc.tune_tolerance);
  m.write();
  if (!tuned)
    throw TuningError(
        "step accuracies moved more than the tolerance; adjust lambda_prime or margin "
        "and rerun");
  return 0;
}

int cmd_pretrain(const CommonOpts& opts, const std::string& partition_path) {
  json cfg = opts.config();
  auto corpus = build_corpus(cfg, opts.seed, opts.has_seed);
  harness::ExperimentConfig ec = parse_experiment(cfg);
  if (opts.has_seed) ec.seed = opts.seed;

  std::optional<sampler::RaiPartition> part;
  if (ec.mode == losses::AugMode::PNDA) {
    if (partition_path.empty())
      throw ConfigError("mode pnda requires --partition");
    part = io::load_partition(partition_path);
  }

  auto result = harness::pretrain(ec, corpus, part ? &*part : nullptr);

  Manifest m = opts.manifest("pretrain");
  const std::string mode = losses::to_string(ec.mode);
  const std::string fw = harness::to_string(ec.framework);
  const fs::path metrics = m.track("metrics.jsonl");
  fs::remove(metrics);
  for (const auto& s : result.steps)
    io::append_metrics_line(metrics.string(), s.epoch, s.step, s.loss, s.lr, mode, fw);
  io::save_checkpoint(m.track("checkpoint.bin").string(), result.encoder, cfg.dump());

  if (ec.record_debug) {
    std::ofstream f(m.track("batch_specs.jsonl"));
    for (std::size_t step = 0; step < result.debug.size(); ++step)
      for (const auto& spec : result.debug[step].specs) {
        json j{{"step", step},
               {"anchor", spec.anchor_index},
               {"positives", spec.positives},
               {"negatives", spec.negatives}};
        f << j.dump() << '\n';
      }
  }

  std::cout << fw << '+' << mode << ": " << result.epoch_losses.size()
            << " epochs, final mean loss " << result.epoch_losses.back() << '\n';
  m.write();
  return 0;
}

int cmd_lineval(const CommonOpts& opts, const std::string& checkpoint_path) {
  json cfg = opts.config();
  auto corpus = build_corpus(cfg, opts.seed, opts.has_seed);
  harness::ExperimentConfig ec = parse_experiment(cfg);
  lineval::LinearProbeConfig lc = parse_lineval(cfg);
  if (opts.has_seed) lc.seed = opts.seed;

  std::mt19937_64 rng(0);
  nn::Sequential encoder = nn::make_conv_encoder(ec.encoder, rng);
  io::load_checkpoint(checkpoint_path, encoder);

  auto labels = truth_labels(corpus);
  nn::Matrix features = lineval::extract_features(encoder, corpus);
  const double top1 = lineval::linear_probe(features, labels, lc);

  Manifest m = opts.manifest("lineval");
  io::ResultRecord rec;
  rec.framework = harness::to_string(ec.framework);
  rec.mode = losses::to_string(ec.mode);
  std::ostringstream enc;
  for (std::size_t i = 0; i < ec.encoder.channels.size(); ++i)
    enc << (i ? "-" : "") << ec.encoder.channels[i];
  rec.encoder = enc.str();
  rec.top1 = top1;
  rec.seed = lc.seed;
  io::append_result(m.track("results.jsonl").string(), rec);

  std::cout << "top-1 " << top1 << " (" << rec.framework << '+' << rec.mode << ")\n";
  m.write();
  return 0;
}

int cmd_ratio_sweep(const CommonOpts& opts, const std::string& partition_path,
                    std::vector<double> ratios) {
  if (ratios.empty()) ratios = {0.0, 0.05, 0.2, 0.3, 1.0};
  for (double r : ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("ratio outside [0, 1]");

  json cfg = opts.config();
  auto corpus = build_corpus(cfg, opts.seed, opts.has_seed);
  harness::ExperimentConfig ec = parse_experiment(cfg);
  ec.mode = losses::AugMode::PNDA;
  if (opts.has_seed) ec.seed = opts.seed;
  lineval::LinearProbeConfig lc = parse_lineval(cfg);

  auto scored = io::load_partition(partition_path);

  Manifest m = opts.manifest("ratio-sweep");
  std::ofstream table(m.track("ratio_sweep.csv"));
  table << "ratio,rai_count,top1\n";
  for (double r : ratios) {
    auto part = sampler::partition_by_ratio(scored.records, r);
    auto result = harness::pretrain(ec, corpus, &part);
    auto labels = truth_labels(corpus);
    nn::Matrix features = lineval::extract_features(result.encoder, corpus);
    const double top1 = lineval::linear_probe(features, labels, lc);
    table << r << ',' << part.rai_count() << ',' << top1 << '\n';
    std::cout << "ratio " << r << ": rai=" << part.rai_count() << " top1=" << top1 << '\n';
  }
  m.write();
  return 0;
}

int cmd_report(const CommonOpts& opts, const std::string& results_dir) {
  std::vector<io::ResultRecord> records;
  for (const auto& entry : fs::recursive_directory_iterator(results_dir))
    if (entry.is_regular_file() && entry.path().filename() == "results.jsonl")
      for (auto& r : io::load_results(entry.path().string())) records.push_back(std::move(r));
  if (records.empty()) throw ConfigError("no results.jsonl found under " + results_dir);

  const std::vector<std::string> modes = {"none", "pda", "nda", "pnda"};
  std::map<std::string, std::map<std::string, std::vector<double>>> cells;
  for (const auto& r : records) cells[r.framework][r.mode].push_back(r.top1);

  auto stats = [](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::pair{mean, v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0};
  };

  Manifest m = opts.manifest("report");
  std::ofstream csv(m.track("report.csv"));
  std::ofstream md(m.track("report.md"));
  csv << "framework,mode,n,top1_mean,top1_std,delta_vs_none\n";
  md << "| framework |";
  for (const auto& mode : modes) md << ' ' << mode << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < modes.size(); ++i) md << "---|";
  md << '\n';

  for (const auto& [fw, by_mode] : cells) {
    std::optional<double> baseline;
    if (auto it = by_mode.find("none"); it != by_mode.end())
      baseline = stats(it->second).first;
    md << "| " << fw << " |";
    for (const auto& mode : modes) {
      auto it = by_mode.find(mode);
      if (it == by_mode.end()) {
        md << " - |";
        continue;
      }
      auto [mean, sd] = stats(it->second);
      std::ostringstream cell;
      cell.setf(std::ios::fixed);
      cell.precision(4);
      cell << mean << "±" << sd;
      std::string delta = "-";
      if (baseline && mode != "none") {
        const double d = mean - *baseline;
        std::ostringstream ds;
        ds.setf(std::ios::fixed);
        ds.precision(4);
        ds << (d >= 0 ? "↑" : "↓") << std::abs(d);
        delta = ds.str();
        cell << " (" << delta << ')';
      }
      csv << fw << ',' << mode << ',' << it->second.size() << ',' << mean << ',' << sd << ','
          << delta << '\n';
      md << ' ' << cell.str() << " |";
    }
    md << '\n';
  }
  m.write();
  std::cout << "aggregated " << records.size() << " result records\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive positive-or-negative rotation augmentation pipeline"};
  app.require_subcommand(1);

  CommonOpts sample_opts, pre_opts, lin_opts, sweep_opts, report_opts;
  std::string partition_path, checkpoint_path, sweep_partition, results_dir = "out";
  std::vector<double> ratios;

  auto* sample = app.add_subcommand("sample-rai", "train the two-step sampler and partition");
  add_common(sample, sample_opts);

  auto* pre = app.add_subcommand("pretrain", "contrastive pretraining run");
  add_common(pre, pre_opts);
  pre->add_option("--partition", partition_path, "partition file (required for mode pnda)");

  auto* lin = app.add_subcommand("lineval", "frozen-encoder linear probe");
  add_common(lin, lin_opts);
  lin->add_option("--checkpoint", checkpoint_path, "encoder checkpoint")->required();

  auto* sweep = app.add_subcommand("ratio-sweep", "accuracy vs fraction marked RAI");
  add_common(sweep, sweep_opts);
  sweep->add_option("--partition", sweep_partition, "scored partition file")->required();
  sweep->add_option("--ratios", ratios, "fractions in [0,1]")->delimiter(',');

  auto* rep = app.add_subcommand("report", "aggregate result tables");
  add_common(rep, report_opts, /*config_required=*/false);
  rep->add_option("--results", results_dir, "directory containing results.jsonl files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (sample->parsed()) return cmd_sample_rai(sample_opts);
    if (pre->parsed()) return cmd_pretrain(pre_opts, partition_path);
    if (lin->parsed()) return cmd_lineval(lin_opts, checkpoint_path);
    if (sweep->parsed()) return cmd_ratio_sweep(sweep_opts, sweep_partition, ratios);
    if (rep->parsed()) return cmd_report(report_opts, results_dir);
  } catch (const TuningError& e) {
    std::cerr << "tuning failure: " << e.what() << '\n';
    return kExitTuning;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitConfig;
}
