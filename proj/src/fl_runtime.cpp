#include "omc/fl_runtime.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "omc/error.hpp"

namespace omc {

PartitionMode parse_partition_mode(std::string_view text) {
  if (text == "iid") return PartitionMode::kIid;
  if (text == "by_label") return PartitionMode::kByLabel;
  throw Error(ErrorCode::kInvalidConfig, "unknown partition mode '" + std::string(text) + "'");
}

std::string_view partition_mode_name(PartitionMode mode) {
  return mode == PartitionMode::kIid ? "iid" : "by_label";
}

void FLConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, msg); };
  if (clients_per_round == 0) fail("clients_per_round must be >= 1");
  if (num_clients < clients_per_round) fail("num_clients must be >= clients_per_round");
  if (local_steps == 0) fail("local_steps must be >= 1");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0f) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
  if (eval_every == 0) fail("eval_every must be >= 1");
  if (threads == 0) fail("threads must be >= 1");
  policy.validate();
}

void StoreSource::visit(std::string_view name, const Visitor& fn) const {
  store_.with_decompressed(name, [&](std::span<const float> values) { fn(values); });
}

namespace {

std::vector<std::uint32_t> to_store_shape(const std::vector<std::size_t>& shape) {
  return {shape.begin(), shape.end()};
}

}  // namespace

ParamStore full_precision_store(const ModelParams& params) {
  ParamStore store;
  for (const auto& e : params.entries()) {
    store.add(make_full_variable(e.name, to_store_shape(e.tensor.shape), e.kind, e.tensor.data));
  }
  return store;
}

ModelParams params_from_store(const ParamStore& store) {
  ModelParams params;
  for (const auto& r : store.records()) {
    params.add(r.name, r.kind,
               Tensor{std::vector<std::size_t>(r.shape.begin(), r.shape.end()), decompress_variable(r)});
  }
  return params;
}

ParamStore compress_for_client(const ModelParams& params, const QuantSelection& selection,
                               const PolicyConfig& policy, bool passthrough_as_full) {
  const bool keep_full = passthrough_as_full && policy.format.is_fp32_passthrough();
  ParamStore store;
  for (const auto& e : params.entries()) {
    if (!keep_full && selection.contains(e.name)) {
      store.add(compress_variable(e.name, to_store_shape(e.tensor.shape), e.kind, e.tensor.data,
                                  policy.format, policy.use_pvt));
    } else {
      store.add(make_full_variable(e.name, to_store_shape(e.tensor.shape), e.kind, e.tensor.data));
    }
  }
  return store;
}

std::vector<std::vector<std::size_t>> local_batches(const FLConfig& cfg, std::size_t shard_size,
                                                   std::uint64_t round, std::uint64_t client) {
  std::vector<std::vector<std::size_t>> out;
  if (shard_size == 0) return out;
  const std::size_t batch = std::min(cfg.batch_size, shard_size);
  KeyedStream stream(mix64(cfg.seed) ^ 0xba7c4e5ull, round, client);
  for (std::size_t step = 0; step < cfg.local_steps; ++step) {
    const auto start = static_cast<std::size_t>(stream.below(shard_size));
    std::vector<std::size_t> rows(batch);
    for (std::size_t i = 0; i < batch; ++i) rows[i] = (start + i) % shard_size;
    out.push_back(std::move(rows));
  }
  return out;
}

ClientUpdate client_train(const ModelParams& server_params, const ModelSpec& spec,
                          const Dataset& shard, const FLConfig& cfg, std::uint64_t round,
                          std::uint64_t client) {
  if (shard.empty()) throw ClientError(ErrorCode::kSkippedClient, round, client, "empty shard");

  const QuantSelection selection = select_variables(server_params.tags(), cfg.policy, round, client);
  ClientUpdate update;
  update.client = client;
  update.store = compress_for_client(server_params, selection, cfg.policy, cfg.passthrough_as_full);
  update.bytes_down = update.store.parameter_memory_bytes();

  const auto schedule = local_batches(cfg, shard.size(), round, client);
  const StoreSource source(update.store);

  for (const auto& rows : schedule) {
    const Dataset picked = shard.subset(rows);

    const LossAndGrads lg = loss_and_grads(source, spec, picked.all());
    if (!std::isfinite(lg.loss)) {
      throw ClientError(ErrorCode::kDivergedClient, round, client, "non-finite loss");
    }
    update.last_loss = lg.loss;

    for (const auto& g : lg.grads.entries()) {
      const auto& grad = g.tensor.data;
      update.store.update_variable(
          g.name,
          [&](std::span<const float> values) {
            std::vector<float> out(values.size());
            for (std::size_t k = 0; k < values.size(); ++k) {
              out[k] = sgd_update(values[k], grad[k], cfg.learning_rate);
              if (!std::isfinite(out[k])) {
                throw ClientError(ErrorCode::kDivergedClient, round, client,
                                  "non-finite update of '" + g.name + "'");
              }
            }
            return out;
          },
          cfg.policy.use_pvt);
    }
  }

  update.bytes_up = update.store.parameter_memory_bytes();
  update.peak_transient_bytes = update.store.peak_transient_bytes();
  return update;
}

ModelParams aggregate(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw Error(ErrorCode::kInvalidInput, "nothing to aggregate");
  std::vector<const ClientUpdate*> ordered;
  for (const auto& u : updates) ordered.push_back(&u);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const ClientUpdate* a, const ClientUpdate* b) { return a->client < b->client; });

  const auto& reference = ordered.front()->store.records();
  for (const auto* u : ordered) {
    const auto& recs = u->store.records();
    if (recs.size() != reference.size()) {
      throw Error(ErrorCode::kInvalidInput, "client " + std::to_string(u->client) + " has a different variable count");
    }
    for (std::size_t i = 0; i < recs.size(); ++i) {
      if (recs[i].name != reference[i].name || recs[i].shape != reference[i].shape) {
        throw Error(ErrorCode::kInvalidInput, "client " + std::to_string(u->client) +
                                                  " variable '" + recs[i].name + "' does not match");
      }
    }
  }

  ModelParams result;
  const auto count = static_cast<double>(ordered.size());
  std::vector<float> scratch;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const std::size_t n = reference[i].element_count();
    std::vector<double> sum(n, 0.0);
    scratch.resize(n);
    for (const auto* u : ordered) {
      decompress_into(u->store.records()[i], scratch);
      for (std::size_t k = 0; k < n; ++k) sum[k] += scratch[k];
    }
    Tensor t{std::vector<std::size_t>(reference[i].shape.begin(), reference[i].shape.end()),
             std::vector<float>(n)};
    for (std::size_t k = 0; k < n; ++k) t.data[k] = static_cast<float>(sum[k] / count);
    result.add(reference[i].name, reference[i].kind, std::move(t));
  }
  return result;
}

std::vector<std::size_t> sample_clients(const FLConfig& cfg, std::uint64_t round) {
  std::vector<std::size_t> all(cfg.num_clients);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (cfg.clients_per_round >= cfg.num_clients) return all;
  KeyedStream stream(mix64(cfg.seed) ^ 0x5a3b1eull, round, 0);
  for (std::size_t i = 0; i < cfg.clients_per_round; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.below(cfg.num_clients - i));
    std::swap(all[i], all[j]);
  }
  all.resize(cfg.clients_per_round);
  std::sort(all.begin(), all.end());
  return all;
}

RoundMetrics run_round(FLState& state, const FLConfig& cfg, std::uint64_t round) {
  const auto started = std::chrono::steady_clock::now();
  const std::vector<std::size_t> clients = sample_clients(cfg, round);

  struct Slot {
    std::optional<ClientUpdate> update;
    std::exception_ptr error;
  };
  std::vector<Slot> slots(clients.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < clients.size(); i = next.fetch_add(1)) {
      const std::size_t c = clients[i];
      try {
        if (c >= state.shards.size()) {
          throw Error(ErrorCode::kInvalidInput, "client " + std::to_string(c) + " has no shard");
        }
        slots[i].update = client_train(state.server, state.spec, state.shards[c], cfg, round, c);
      } catch (...) {
        slots[i].error = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(cfg.threads, clients.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  }

  RoundMetrics m;
  m.round = round;
  std::vector<ClientUpdate> updates;
  for (auto& slot : slots) {
    if (slot.error) {
      try {
        std::rethrow_exception(slot.error);
      } catch (const ClientError& e) {
        if (e.code() != ErrorCode::kSkippedClient && e.code() != ErrorCode::kDivergedClient) throw;
        if (e.code() == ErrorCode::kDivergedClient) ++m.clients_failed;
        continue;
      }
    }
    ClientUpdate& u = *slot.update;
    m.bytes_down += u.bytes_down;
    m.bytes_up += u.bytes_up;
    m.param_mem_bytes = std::max(m.param_mem_bytes, u.bytes_down);
    m.peak_transient_bytes = std::max(m.peak_transient_bytes, u.peak_transient_bytes);
    updates.push_back(std::move(u));
  }
  m.clients_trained = updates.size();
  if (updates.empty()) {
    throw Error(ErrorCode::kRoundFailed, "round " + std::to_string(round) + ": no client produced an update");
  }

  state.server = aggregate(updates);
  if (round % cfg.eval_every == 0 || round == cfg.total_rounds) {
    const EvalResult ev = evaluate(state.server, state.spec, state.eval_set);
    m.eval_loss = ev.loss;
    m.eval_accuracy = ev.accuracy;
  }
  if (cfg.record_seconds) {
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }
  return m;
}

ExperimentResult run_experiment(FLState state, const FLConfig& cfg, const MetricsSink& sink,
                                const std::string& checkpoint_path) {
  cfg.validate();
  ExperimentResult result;
  auto emit = [&](const RoundMetrics& m) {
    result.metrics.push_back(m);
    if (sink) sink(m);
  };

  RoundMetrics initial;
  const EvalResult ev = evaluate(state.server, state.spec, state.eval_set);
  initial.eval_loss = ev.loss;
  initial.eval_accuracy = ev.accuracy;
  emit(initial);

  for (std::uint64_t round = 1; round <= cfg.total_rounds; ++round) emit(run_round(state, cfg, round));

  if (!checkpoint_path.empty()) save_store_file(full_precision_store(state.server), checkpoint_path);
  result.final_params = std::move(state.server);
  return result;
}

void write_metrics_header(std::ostream& out) {
  out << "round,eval_loss,eval_acc,bytes_down,bytes_up,param_mem_bytes,peak_transient_bytes,seconds\n";
}

namespace {

std::string format_real(std::optional<double> v, const char* fmt = "%.9g") {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, *v);
  return buf;
}

}  // namespace

void write_metrics_row(std::ostream& out, const RoundMetrics& m) {
  out << m.round << ',' << format_real(m.eval_loss) << ',' << format_real(m.eval_accuracy) << ','
      << m.bytes_down << ',' << m.bytes_up << ',' << m.param_mem_bytes << ',' << m.peak_transient_bytes
      << ',' << format_real(m.seconds, "%.6f") << '\n';
}

std::vector<RoundMetrics> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("round,", 0) != 0) {
    throw Error(ErrorCode::kInvalidInput, "metrics CSV is missing its header");
  }
  std::vector<RoundMetrics> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 8) throw Error(ErrorCode::kInvalidInput, "metrics row " + std::to_string(row) + " needs 8 columns");
    try {
      RoundMetrics m;
      m.round = std::stoull(cells[0]);
      if (!cells[1].empty()) m.eval_loss = std::stod(cells[1]);
      if (!cells[2].empty()) m.eval_accuracy = std::stod(cells[2]);
      m.bytes_down = std::stoull(cells[3]);
      m.bytes_up = std::stoull(cells[4]);
      m.param_mem_bytes = std::stoull(cells[5]);
      m.peak_transient_bytes = std::stoull(cells[6]);
      m.seconds = cells[7].empty() ? 0.0 : std::stod(cells[7]);
      out.push_back(m);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kInvalidInput, "bad number in metrics row " + std::to_string(row));
    }
  }
  return out;
}

}  // namespace omc
