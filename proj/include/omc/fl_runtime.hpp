#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "omc/nn_core.hpp"
#include "omc/param_store.hpp"
#include "omc/quant_policy.hpp"

namespace omc {

enum class PartitionMode { kIid, kByLabel };

PartitionMode parse_partition_mode(std::string_view text);
std::string_view partition_mode_name(PartitionMode mode);

struct FLConfig {
  std::size_t clients_per_round = 128;
  std::size_t num_clients = 128;  // population; all participate when equal to clients_per_round
  std::size_t local_steps = 1;
  std::size_t batch_size = 16;
  float learning_rate = 0.1f;
  std::size_t total_rounds = 100;
  std::size_t eval_every = 1;
  PolicyConfig policy;
  PartitionMode partition = PartitionMode::kIid;
  std::size_t labels_per_client = 2;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  // A S1E8M23 payload is the FP32 bit pattern plus transform overhead, so by
  // default such variables are kept as plain full-precision records.
  bool passthrough_as_full = true;
  // Wall-clock seconds per round; off writes 0 so metrics files are reproducible byte for byte.
  bool record_seconds = true;

  void validate() const;
};

// Adapts a ParamStore so every read goes through with_decompressed.
class StoreSource : public ParameterSource {
 public:
  explicit StoreSource(const ParamStore& store) : store_(store) {}
  void visit(std::string_view name, const Visitor& fn) const override;

 private:
  const ParamStore& store_;
};

ParamStore full_precision_store(const ModelParams& params);
ModelParams params_from_store(const ParamStore& store);

// Compresses the selected variables of a server snapshot; the rest stay FP32.
ParamStore compress_for_client(const ModelParams& params, const QuantSelection& selection,
                               const PolicyConfig& policy, bool passthrough_as_full = true);

struct ClientUpdate {
  std::size_t client = 0;
  ParamStore store;
  std::uint64_t bytes_down = 0;
  std::uint64_t bytes_up = 0;
  std::uint64_t peak_transient_bytes = 0;
  float last_loss = 0.0f;
};

// Row indices of each local step's minibatch: a contiguous (wrapping) window
// of batch_size rows at a keyed random start.
std::vector<std::vector<std::size_t>> local_batches(const FLConfig& cfg, std::size_t shard_size,
                                                   std::uint64_t round, std::uint64_t client);

// Throws ClientError with kSkippedClient for an empty shard and
// kDivergedClient when the loss or an update becomes non-finite.
ClientUpdate client_train(const ModelParams& server_params, const ModelSpec& spec,
                          const Dataset& shard, const FLConfig& cfg, std::uint64_t round,
                          std::uint64_t client);

// Unweighted mean of decompressed client models, accumulated in double in
// ascending client order.
ModelParams aggregate(const std::vector<ClientUpdate>& updates);

struct RoundMetrics {
  std::uint64_t round = 0;
  std::optional<double> eval_loss;
  std::optional<double> eval_accuracy;
  std::uint64_t bytes_down = 0;
  std::uint64_t bytes_up = 0;
  std::uint64_t param_mem_bytes = 0;  // largest client store this round
  std::uint64_t peak_transient_bytes = 0;
  double seconds = 0.0;
  std::size_t clients_trained = 0;
  std::size_t clients_failed = 0;
};

struct FLState {
  ModelSpec spec;
  ModelParams server;
  std::vector<Dataset> shards;
  Dataset eval_set;
};

std::vector<std::size_t> sample_clients(const FLConfig& cfg, std::uint64_t round);

// Rounds are numbered from 1; round 0 is the evaluation of the initial model.
RoundMetrics run_round(FLState& state, const FLConfig& cfg, std::uint64_t round);

struct ExperimentResult {
  std::vector<RoundMetrics> metrics;
  ModelParams final_params;
};

using MetricsSink = std::function<void(const RoundMetrics&)>;

ExperimentResult run_experiment(FLState state, const FLConfig& cfg, const MetricsSink& sink = {},
                                const std::string& checkpoint_path = {});

// Metrics CSV: round,eval_loss,eval_acc,bytes_down,bytes_up,param_mem_bytes,peak_transient_bytes,seconds
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const RoundMetrics& m);
std::vector<RoundMetrics> read_metrics_csv(std::istream& in);

}  // namespace omc
