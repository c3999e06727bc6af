// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "deepbeam/tensor.hpp"

#include <complex>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace deepbeam::data {

/// One capture unit: K complex baseband samples, float32 I/Q on disk.
struct IQBlock {
    std::vector<std::complex<float>> samples;
    std::int64_t block_index = 0;
};

enum class Scenario { Basic, Obstacle, Diagonal, MultiRf };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);

struct Label {
    int txb = 0;
    int aoa_class = 0;
    int gain_index = 0;
    std::uint64_t antenna_seed = 0;
    Scenario scenario = Scenario::Basic;
    // Recorded per cell so evaluation can stratify accuracy by SNR bucket.
    double snr_db = 0.0;

    bool operator==(const Label&) const = default;
};

/// Contiguous run of blocks sharing one label.
struct CellInfo {
    Label label;
    std::int64_t count = 0;
    std::int64_t offset_bytes = 0;
};

struct DatasetManifest {
    int format_version = 1;
    std::string codebook_kind;
    std::size_t block_len = 2048;
    std::vector<double> aoa_set_deg;
    std::uint64_t master_seed = 0;
    std::string data_file;
    std::vector<CellInfo> cells;

    std::int64_t total_blocks() const;
    /// Cell index and label for a global block ordinal.
    std::size_t cell_of(std::int64_t block_id) const;
};

/// Any-field block filter; unset fields match everything.
struct Selector {
    std::optional<int> txb;
    std::optional<int> aoa_class;
    std::optional<int> gain_index;
    std::optional<std::uint64_t> antenna_seed;
    std::optional<Scenario> scenario;
    std::optional<double> snr_min_db;
    std::optional<double> snr_max_db;

    bool matches(const Label& label) const;
};

/// Owns the .iqb data file until finalize(), which writes the manifest.
class DatasetWriter {
  public:
    /// Creates <path_prefix>.iqb now and <path_prefix>.manifest on finalize.
    DatasetWriter(std::string path_prefix, DatasetManifest header);
    ~DatasetWriter();

    void write_blocks(const Label& label, const std::vector<IQBlock>& blocks);
    void write_block(const Label& label, const IQBlock& block);
    const DatasetManifest& finalize();

  private:
    std::string prefix_;
    DatasetManifest manifest_;
    std::ofstream out_;
    std::int64_t bytes_written_ = 0;
    bool finalized_ = false;
};

class DatasetReader {
  public:
    explicit DatasetReader(const std::string& manifest_path);

    const DatasetManifest& manifest() const { return manifest_; }

    IQBlock read_block(std::int64_t block_id) const;
    const Label& label_of(std::int64_t block_id) const;
    std::vector<std::int64_t> select_ids(const Selector& sel) const;
    void for_each(const Selector& sel,
                  const std::function<void(const IQBlock&, const Label&)>& fn) const;

  private:
    DatasetManifest manifest_;
    std::string data_path_;
    mutable std::ifstream in_;
};

/// Whole dataset resident in memory, for training loops.
struct InMemoryDataset {
    DatasetManifest manifest;
    std::vector<IQBlock> blocks;

    const Label& label(std::int64_t block_id) const {
        return manifest.cells[manifest.cell_of(block_id)].label;
    }
};

InMemoryDataset load_dataset(const std::string& manifest_path);

DatasetManifest read_manifest(const std::string& manifest_path);
void write_manifest(const std::string& manifest_path, const DatasetManifest& manifest);

struct SplitSpec {
    double train_fraction = 0.6;
    std::uint64_t shuffle_seed = 0;
};

struct SplitIds {
    std::vector<std::int64_t> train;
    std::vector<std::int64_t> test;
};

/// Disjoint, exhaustive, per-cell stratified split (deviation <= 1 block).
SplitIds split(const DatasetManifest& manifest, const SplitSpec& spec);

/// Stack L blocks into an (L, K, 2) tensor, channel 0 = I, channel 1 = Q.
nn::Tensor to_tensor(const std::vector<const IQBlock*>& blocks, bool normalize = false);
nn::Tensor to_tensor(const std::vector<IQBlock>& blocks, bool normalize = false);

/// Batches for one epoch; a fresh deterministic shuffle per epoch.
std::vector<std::vector<std::int64_t>> epoch_batches(const std::vector<std::int64_t>& ids,
                                                     std::size_t batch_size,
                                                     std::uint64_t shuffle_seed, int epoch);

enum class TargetField { Txb, AoaClass };

/// Classification example: L consecutive blocks from one cell plus its class.
struct Example {
    std::vector<std::int64_t> block_ids;
    int target = 0;
};

/// Group split ids into non-overlapping windows of L consecutive blocks
/// within each cell; the per-cell remainder (< L blocks) is dropped.
std::vector<Example> group_examples(const DatasetManifest& manifest,
                                    const std::vector<std::int64_t>& ids, int window,
                                    TargetField target);

} // namespace deepbeam::data
