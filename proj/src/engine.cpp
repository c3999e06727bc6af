// SPDX-License-Identifier: Apache-2.0
#include "deepbeam/engine.hpp"

#include "deepbeam/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace deepbeam::engine {

namespace {

double mean_power(const std::vector<data::IQBlock>& blocks) {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& b : blocks) {
        for (const auto& s : b.samples) acc += std::norm(std::complex<double>(s));
        n += b.samples.size();
    }
    return n > 0 ? acc / static_cast<double>(n) : 0.0;
}

} // namespace

double rsrp_db(const data::IQBlock& block) {
    if (block.samples.empty()) throw UsageError("rsrp: empty block");
    const double p = mean_power({block});
    return p > 0.0 ? 10.0 * std::log10(p) : -200.0;
}

double rsrp_db(const std::vector<data::IQBlock>& blocks) {
    if (blocks.empty()) throw UsageError("rsrp: no blocks");
    const double p = mean_power(blocks);
    return p > 0.0 ? 10.0 * std::log10(p) : -200.0;
}

std::pair<int, double> classify(const std::vector<data::IQBlock>& group, const nn::Model& model,
                                bool normalize) {
    if (group.size() != model.spec().input_l)
        throw UsageError("classify: group size does not match model input L");
    const nn::Tensor input = data::to_tensor(group, normalize);
    if (input.shape[1] != model.spec().input_k)
        throw UsageError("classify: block length does not match model input K");
    double confidence = 0.0;
    const int cls = model.predict(input, &confidence);
    return {cls, confidence};
}

TupleQueue::TupleQueue(std::size_t capacity, DropPolicy policy)
    : capacity_(capacity), policy_(policy) {
    if (capacity_ < 1) throw UsageError("TupleQueue: capacity must be >= 1");
}

void TupleQueue::push(InferenceTuple tuple) {
    std::unique_lock<std::mutex> lock(mutex_);
    if (closed_) throw UsageError("TupleQueue: push after close");
    if (items_.size() >= capacity_) {
        if (policy_ == DropPolicy::DropOldest) {
            items_.pop_front();
            ++dropped_;
        } else {
            not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
            if (closed_) return;
        }
    }
    items_.push_back(std::move(tuple));
    lock.unlock();
    not_empty_.notify_one();
}

std::optional<InferenceTuple> TupleQueue::pop() {
    std::unique_lock<std::mutex> lock(mutex_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    InferenceTuple t = std::move(items_.front());
    items_.pop_front();
    lock.unlock();
    not_full_.notify_one();
    return t;
}

bool TupleQueue::try_pop(InferenceTuple& out) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (items_.empty()) return false;
    out = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return true;
}

void TupleQueue::close() {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        closed_ = true;
    }
    not_empty_.notify_all();
    not_full_.notify_all();
}

std::size_t TupleQueue::size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return items_.size();
}

std::int64_t TupleQueue::dropped() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return dropped_;
}

void EngineConfig::validate() const {
    if (block_len < 1) throw UsageError("EngineConfig: block_len must be >= 1");
    if (samples_per_inference < 1 || samples_per_inference % block_len != 0)
        throw UsageError("EngineConfig: samples_per_inference must be a multiple of block_len");
}

StreamStats run_stream(const BlockSource& source, const EngineConfig& cfg,
                       const nn::Model& txb_model, const nn::Model* aoa_model,
                       const Trigger& trigger, TupleQueue& out) {
    cfg.validate();
    const std::size_t window = cfg.window_blocks();
    if (txb_model.spec().input_l != window || txb_model.spec().input_k != cfg.block_len)
        throw UsageError("run_stream: txb model input shape does not match engine config");
    if (aoa_model &&
        (aoa_model->spec().input_l != window || aoa_model->spec().input_k != cfg.block_len))
        throw UsageError("run_stream: aoa model input shape does not match engine config");

    StreamStats stats;
    std::vector<data::IQBlock> buffer;
    buffer.reserve(window);

    while (auto block = source()) {
        if (block->samples.size() != cfg.block_len)
            throw UsageError("run_stream: block length mismatch");
        const std::int64_t ordinal = stats.blocks_consumed++;
        if (!trigger.active()) continue; // discarded, nothing accumulates
        ++stats.blocks_while_triggered;
        block->block_index = ordinal;
        buffer.push_back(std::move(*block));
        if (buffer.size() < window) continue;

        InferenceTuple tuple;
        tuple.block_index = buffer.front().block_index;
        tuple.rsrp_db = rsrp_db(buffer);
        const auto [txb, conf] = classify(buffer, txb_model, cfg.normalize_input);
        tuple.txb = txb;
        tuple.confidence = conf;
        if (aoa_model) tuple.aoa_class = classify(buffer, *aoa_model, cfg.normalize_input).first;
        buffer.clear();
        out.push(std::move(tuple));
        ++stats.tuples_produced;
    }
    out.close();
    return stats;
}

int decide_rx_beam(double aoa_deg, const phy::Codebook& rx_codebook) {
    if (rx_codebook.beams.empty()) throw UsageError("decide_rx_beam: empty codebook");
    int best = rx_codebook.beams.front().beam_id;
    double best_dist = std::abs(rx_codebook.beams.front().design_angle_deg - aoa_deg);
    for (const auto& beam : rx_codebook.beams) {
        const double dist = std::abs(beam.design_angle_deg - aoa_deg);
        if (dist < best_dist || (dist == best_dist && beam.beam_id < best)) {
            best = beam.beam_id;
            best_dist = dist;
        }
    }
    return best;
}

BeamReport rank_beams(const std::vector<InferenceTuple>& tuples) {
    if (tuples.empty()) throw UsageError("rank_beams: no tuples");
    std::map<int, std::pair<double, std::int64_t>> agg; // txb -> (rsrp sum, count)
    for (const auto& t : tuples) {
        auto& slot = agg[t.txb];
        slot.first += t.rsrp_db;
        slot.second += 1;
    }
    BeamReport report;
    report.tuples_consumed = static_cast<std::int64_t>(tuples.size());
    for (const auto& [txb, sc] : agg) {
        report.ranking.push_back({txb, sc.first / static_cast<double>(sc.second), sc.second});
    }
    std::stable_sort(report.ranking.begin(), report.ranking.end(),
                     [](const BeamReport::Entry& a, const BeamReport::Entry& b) {
                         if (a.mean_rsrp_db != b.mean_rsrp_db)
                             return a.mean_rsrp_db > b.mean_rsrp_db;
                         return a.txb < b.txb;
                     });
    return report;
}

BeamReport rank_beams(const std::vector<InferenceTuple>& tuples,
                      const phy::Codebook& rx_codebook, const std::vector<double>& aoa_set_deg) {
    BeamReport report = rank_beams(tuples);
    for (std::size_t i = 0; i < aoa_set_deg.size(); ++i)
        report.rx_beam_for_aoa[static_cast<int>(i)] = decide_rx_beam(aoa_set_deg[i], rx_codebook);
    return report;
}

double EvalResult::snr_bucket_accuracy(double lo_db, double hi_db) const {
    std::int64_t correct = 0, n = 0;
    for (const auto& s : strata) {
        if (s.key.rfind("snr:", 0) == 0 && s.value >= lo_db && s.value <= hi_db) {
            correct += s.correct;
            n += s.total;
        }
    }
    return n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
}

EvalResult evaluate(const nn::Model& model, const data::InMemoryDataset& dataset,
                    const std::vector<std::int64_t>& ids, const EvalOptions& options) {
    if (ids.empty()) throw UsageError("evaluate: empty test split");
    const auto examples =
        data::group_examples(dataset.manifest, ids, options.window, options.target);
    if (examples.empty()) throw UsageError("evaluate: no examples after grouping");

    const int classes = model.spec().num_classes;
    EvalResult result;
    result.counts.assign(classes, std::vector<std::int64_t>(classes, 0));
    std::map<std::string, StratumStat> strata;

    nn::Workspace ws;
    for (const auto& ex : examples) {
        std::vector<const data::IQBlock*> ptrs;
        for (auto id : ex.block_ids) ptrs.push_back(&dataset.blocks[static_cast<std::size_t>(id)]);
        const nn::Tensor input = data::to_tensor(ptrs, options.normalize);
        nn::forward_cached(model, input, ws);
        const auto& probs = ws.acts.back();
        const int pred = static_cast<int>(
            std::max_element(probs.data.begin(), probs.data.end()) - probs.data.begin());

        if (ex.target < 0 || ex.target >= classes)
            throw UsageError("evaluate: class index exceeds model classes");
        result.counts[static_cast<std::size_t>(ex.target)][static_cast<std::size_t>(pred)] += 1;
        result.total += 1;
        const bool hit = pred == ex.target;

        const auto& label = dataset.label(ex.block_ids.front());
        auto bump = [&](const std::string& key, double value) {
            auto& s = strata[key];
            s.key = key;
            s.value = value;
            s.total += 1;
            if (hit) s.correct += 1;
        };
        if (options.stratify_snr) {
            std::ostringstream os;
            os << "snr:" << label.snr_db;
            bump(os.str(), label.snr_db);
        }
        if (options.stratify_antenna)
            bump("antenna:" + std::to_string(label.antenna_seed),
                 static_cast<double>(label.antenna_seed));
        if (options.stratify_scenario) bump("scenario:" + data::to_string(label.scenario), 0.0);
    }

    std::int64_t correct = 0;
    result.confusion.assign(classes, std::vector<double>(classes, 0.0));
    for (int i = 0; i < classes; ++i) {
        std::int64_t row = 0;
        for (int j = 0; j < classes; ++j) row += result.counts[i][j];
        if (row > 0) {
            for (int j = 0; j < classes; ++j)
                result.confusion[i][j] =
                    static_cast<double>(result.counts[i][j]) / static_cast<double>(row);
        }
        correct += result.counts[i][i];
    }
    result.accuracy = static_cast<double>(correct) / static_cast<double>(result.total);
    for (auto& [key, stat] : strata) result.strata.push_back(stat);
    return result;
}

} // namespace deepbeam::engine
