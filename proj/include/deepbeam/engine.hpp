// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "deepbeam/beamnet.hpp"
#include "deepbeam/iq_dataset.hpp"
#include "deepbeam/phased_array.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <vector>

namespace deepbeam::engine {

struct InferenceTuple {
    int txb = -1;
    int aoa_class = -1;
    double rsrp_db = 0.0;
    double confidence = 0.0;
    std::int64_t block_index = 0;
};

/// Block mean power in dB; an all-zero block reports the -200 dB floor.
double rsrp_db(const data::IQBlock& block);
double rsrp_db(const std::vector<data::IQBlock>& blocks);

/// (class, confidence) for a group of L blocks matching the model input.
std::pair<int, double> classify(const std::vector<data::IQBlock>& group, const nn::Model& model,
                                bool normalize = false);

enum class DropPolicy { DropOldest, BlockProducer };

/// Bounded tuple queue between the inference producer and subscribers.
class TupleQueue {
  public:
    explicit TupleQueue(std::size_t capacity, DropPolicy policy = DropPolicy::DropOldest);

    void push(InferenceTuple tuple);
    /// Blocks until a tuple is available or the queue is closed and drained.
    std::optional<InferenceTuple> pop();
    bool try_pop(InferenceTuple& out);
    void close();

    std::size_t size() const;
    std::int64_t dropped() const;
    std::size_t capacity() const { return capacity_; }

  private:
    const std::size_t capacity_;
    const DropPolicy policy_;
    mutable std::mutex mutex_;
    std::condition_variable not_empty_;
    std::condition_variable not_full_;
    std::deque<InferenceTuple> items_;
    std::int64_t dropped_ = 0;
    bool closed_ = false;
};

/// Protocol-stack switch gating tuple production.
class Trigger {
  public:
    explicit Trigger(bool active = true) : active_(active) {}
    void activate() { active_.store(true); }
    void deactivate() { active_.store(false); }
    bool active() const { return active_.load(); }

  private:
    std::atomic<bool> active_;
};

struct EngineConfig {
    std::size_t block_len = 2048;            // K
    std::size_t samples_per_inference = 2048; // xi, multiple of K
    bool normalize_input = false;

    void validate() const;
    std::size_t window_blocks() const { return samples_per_inference / block_len; }
};

/// Pull-based block source; nullopt signals end of stream.
using BlockSource = std::function<std::optional<data::IQBlock>()>;

struct StreamStats {
    std::int64_t blocks_consumed = 0;
    std::int64_t blocks_while_triggered = 0;
    std::int64_t tuples_produced = 0;
};

/// Consume the source until exhaustion. While the trigger is active, every
/// xi accumulated samples produce exactly one tuple; the queue is closed on
/// return. aoa_model may be null (tuples then carry aoa_class = -1).
StreamStats run_stream(const BlockSource& source, const EngineConfig& cfg,
                       const nn::Model& txb_model, const nn::Model* aoa_model,
                       const Trigger& trigger, TupleQueue& out);

struct BeamReport {
    struct Entry {
        int txb = 0;
        double mean_rsrp_db = 0.0;
        std::int64_t count = 0;
    };
    std::vector<Entry> ranking; // descending mean RSRP, ties by lower beam id
    std::map<int, int> rx_beam_for_aoa;
    std::int64_t tuples_consumed = 0;

    int best_txb() const { return ranking.front().txb; }
};

BeamReport rank_beams(const std::vector<InferenceTuple>& tuples);
BeamReport rank_beams(const std::vector<InferenceTuple>& tuples,
                      const phy::Codebook& rx_codebook, const std::vector<double>& aoa_set_deg);

/// Beam whose design angle is nearest the AoA; ties go to the lower id.
int decide_rx_beam(double aoa_deg, const phy::Codebook& rx_codebook);

// ---- evaluation harness ----

struct EvalOptions {
    data::TargetField target = data::TargetField::Txb;
    int window = 1; // L blocks per example
    bool normalize = false;
    bool stratify_snr = false;
    bool stratify_antenna = false;
    bool stratify_scenario = false;
};

struct StratumStat {
    std::string key;
    double value = 0.0; // numeric key (snr, seed) when applicable
    std::int64_t correct = 0;
    std::int64_t total = 0;

    double accuracy() const {
        return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    }
};

struct EvalResult {
    std::vector<std::vector<std::int64_t>> counts; // rows = true class
    std::vector<std::vector<double>> confusion;    // row-normalized
    double accuracy = 0.0;
    std::int64_t total = 0;
    std::vector<StratumStat> strata;

    /// Accuracy over examples whose cell SNR lies in [lo, hi].
    double snr_bucket_accuracy(double lo_db, double hi_db) const;
};

EvalResult evaluate(const nn::Model& model, const data::InMemoryDataset& dataset,
                    const std::vector<std::int64_t>& ids, const EvalOptions& options);

} // namespace deepbeam::engine
