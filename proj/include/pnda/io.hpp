#pragma once

#include <string>
#include <vector>

#include "pnda/nn.hpp"
#include "pnda/sampler.hpp"

namespace pnda::io {

// Partition file: header line then `id,score,verdict` records, scores with
// 6 decimals. The sidecar (same path + ".meta.json") holds the config
// snapshot and step accuracies.
void save_partition(const std::string& path, const sampler::RaiPartition& part,
                    const std::string& config_snapshot_json);
sampler::RaiPartition load_partition(const std::string& path);

// Versioned binary checkpoint of a parameter set with an embedded config
// snapshot. Loading requires a structurally identical network.
void save_checkpoint(const std::string& path, nn::Sequential& net,
                     const std::string& config_snapshot_json);
std::string load_checkpoint(const std::string& path, nn::Sequential& net);

// Line-delimited metrics records {epoch, step, loss, lr, mode, framework}.
void append_metrics_line(const std::string& path, int epoch, int step, double loss, double lr,
                         const std::string& mode, const std::string& framework);

// Score histogram over [0, ln 4] with fixed 0.05 bins; two count columns
// (after Step 1, after Step 2).
void save_score_histogram(const std::string& path, const std::vector<double>& step1_scores,
                          const std::vector<double>& step2_scores);

struct ResultRecord {
  std::string framework;
  std::string mode;
  std::string encoder;
  double top1 = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

void append_result(const std::string& path, const ResultRecord& rec);
std::vector<ResultRecord> load_results(const std::string& path);

}  // namespace pnda::io
