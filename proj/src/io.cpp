#include "pnda/io.hpp"

#include <cmath>
#include <cstring>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace pnda::io {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream f(path, mode);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  return f;
}

}  // namespace

void save_partition(const std::string& path, const sampler::RaiPartition& part,
                    const std::string& config_snapshot_json) {
  auto f = open_out(path);
  f << "id,score,verdict\n";
  f << std::fixed << std::setprecision(6);
  for (const auto& r : part.records)
    f << r.id << ',' << r.score << ','
      << (r.verdict == RaiVerdict::RAI ? "RAI" : "NON_RAI") << '\n';

  json meta;
  meta["rho"] = part.rho;
  meta["margin"] = part.margin;
  meta["step1_accuracy"] = part.step1_accuracy;
  meta["step2_accuracy"] = part.step2_accuracy;
  meta["record_count"] = part.records.size();
  meta["rai_count"] = part.rai_count();
  if (!config_snapshot_json.empty()) meta["config"] = json::parse(config_snapshot_json);
  open_out(path + ".meta.json") << meta.dump(2) << '\n';
}

sampler::RaiPartition load_partition(const std::string& path) {
  auto f = open_in(path);
  std::string line;
  if (!std::getline(f, line) || line != "id,score,verdict")
    throw std::runtime_error("partition file missing header: " + path);
  sampler::RaiPartition part;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    sampler::ScoreRecord rec;
    std::string score_s, verdict_s;
    if (!std::getline(ss, rec.id, ',') || !std::getline(ss, score_s, ',') ||
        !std::getline(ss, verdict_s))
      throw std::runtime_error("malformed partition record: " + line);
    rec.score = std::stod(score_s);
    if (verdict_s == "RAI")
      rec.verdict = RaiVerdict::RAI;
    else if (verdict_s == "NON_RAI")
      rec.verdict = RaiVerdict::NON_RAI;
    else
      throw std::runtime_error("unknown verdict '" + verdict_s + "' in " + path);
    part.records.push_back(std::move(rec));
  }

  std::ifstream meta_f(path + ".meta.json");
  if (meta_f) {
    json meta = json::parse(meta_f);
    part.rho = meta.value("rho", part.rho);
    part.margin = meta.value("margin", part.margin);
    part.step1_accuracy = meta.value("step1_accuracy", 0.0);
    part.step2_accuracy = meta.value("step2_accuracy", 0.0);
  }
  return part;
}

namespace {
constexpr char kCkptMagic[8] = {'P', 'N', 'D', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void write_pod(std::ostream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void read_pod(std::istream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("truncated checkpoint");
}
}  // namespace

void save_checkpoint(const std::string& path, nn::Sequential& net,
                     const std::string& config_snapshot_json) {
  auto f = open_out(path, std::ios::binary);
  f.write(kCkptMagic, sizeof(kCkptMagic));
  write_pod(f, kCkptVersion);
  const std::uint32_t cfg_len = static_cast<std::uint32_t>(config_snapshot_json.size());
  write_pod(f, cfg_len);
  f.write(config_snapshot_json.data(), cfg_len);

  auto params = net.params();
  write_pod(f, static_cast<std::uint32_t>(params.size()));
  for (nn::Param* p : params) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(p->name.size());
    write_pod(f, name_len);
    f.write(p->name.data(), name_len);
    write_pod(f, static_cast<std::uint32_t>(p->value.rows()));
    write_pod(f, static_cast<std::uint32_t>(p->value.cols()));
    f.write(reinterpret_cast<const char*>(p->value.data()),
            sizeof(double) * p->value.size());
  }
}

std::string load_checkpoint(const std::string& path, nn::Sequential& net) {
  auto f = open_in(path, std::ios::binary);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint32_t version;
  read_pod(f, version);
  if (version != kCkptVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  std::uint32_t cfg_len;
  read_pod(f, cfg_len);
  std::string config(cfg_len, '\0');
  f.read(config.data(), cfg_len);

  std::uint32_t n;
  read_pod(f, n);
  auto params = net.params();
  if (n != params.size())
    throw std::runtime_error("checkpoint parameter count does not match network");
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t name_len;
    read_pod(f, name_len);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    std::uint32_t rows, cols;
    read_pod(f, rows);
    read_pod(f, cols);
    if (rows != params[i]->value.rows() || cols != params[i]->value.cols())
      throw std::runtime_error("checkpoint shape mismatch at tensor " + name);
    f.read(reinterpret_cast<char*>(params[i]->value.data()), sizeof(double) * rows * cols);
    if (!f) throw std::runtime_error("truncated checkpoint tensor " + name);
  }
  return config;
}

void append_metrics_line(const std::string& path, int epoch, int step, double loss, double lr,
                         const std::string& mode, const std::string& framework) {
  nlohmann::json rec{{"epoch", epoch}, {"step", step},       {"loss", loss},
                     {"lr", lr},       {"mode", mode},        {"framework", framework}};
  open_out(path, std::ios::app) << rec.dump() << '\n';
}

void save_score_histogram(const std::string& path, const std::vector<double>& step1_scores,
                          const std::vector<double>& step2_scores) {
  constexpr double kBinWidth = 0.05;
  const int n_bins = static_cast<int>(std::ceil(kMaxEntropy / kBinWidth));
  std::vector<int> c1(n_bins, 0), c2(n_bins, 0);
  auto bin_of = [&](double s) {
    return std::clamp(static_cast<int>(s / kBinWidth), 0, n_bins - 1);
  };
  for (double s : step1_scores) ++c1[bin_of(s)];
  for (double s : step2_scores) ++c2[bin_of(s)];

  auto f = open_out(path);
  f << "bin_lo,bin_hi,step1_count,step2_count\n" << std::fixed << std::setprecision(4);
  for (int b = 0; b < n_bins; ++b)
    f << b * kBinWidth << ',' << std::min((b + 1) * kBinWidth, kMaxEntropy) << ',' << c1[b]
      << ',' << c2[b] << '\n';
}

void append_result(const std::string& path, const ResultRecord& rec) {
  nlohmann::json j{{"framework", rec.framework}, {"mode", rec.mode},
                   {"encoder", rec.encoder},     {"top1", rec.top1},
                   {"seed", rec.seed},           {"config_hash", rec.config_hash}};
  open_out(path, std::ios::app) << j.dump() << '\n';
}

std::vector<ResultRecord> load_results(const std::string& path) {
  auto f = open_in(path);
  std::vector<ResultRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    ResultRecord r;
    r.framework = j.at("framework");
    r.mode = j.at("mode");
    r.encoder = j.value("encoder", "");
    r.top1 = j.at("top1");
    r.seed = j.value("seed", 0ull);
    r.config_hash = j.value("config_hash", "");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace pnda::io
