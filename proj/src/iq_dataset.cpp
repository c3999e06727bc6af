// SPDX-License-Identifier: Apache-2.0
#include "deepbeam/iq_dataset.hpp"

#include "deepbeam/errors.hpp"
#include "deepbeam/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>

namespace deepbeam::data {

namespace {

constexpr char kManifestMagic[] = "deepbeam-dataset";
constexpr char kManifestVersion[] = "v1";

std::int64_t block_bytes(std::size_t block_len) {
    return static_cast<std::int64_t>(block_len) * 2 * sizeof(float);
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

} // namespace

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::Basic: return "basic";
        case Scenario::Obstacle: return "obstacle";
        case Scenario::Diagonal: return "diagonal";
        case Scenario::MultiRf: return "multi-rf";
    }
    throw UsageError("unknown scenario");
}

Scenario scenario_from_string(const std::string& name) {
    if (name == "basic") return Scenario::Basic;
    if (name == "obstacle") return Scenario::Obstacle;
    if (name == "diagonal") return Scenario::Diagonal;
    if (name == "multi-rf") return Scenario::MultiRf;
    throw UsageError("unknown scenario: " + name);
}

std::int64_t DatasetManifest::total_blocks() const {
    std::int64_t n = 0;
    for (const auto& c : cells) n += c.count;
    return n;
}

std::size_t DatasetManifest::cell_of(std::int64_t block_id) const {
    std::int64_t start = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (block_id < start + cells[i].count) return i;
        start += cells[i].count;
    }
    throw UsageError("block id out of range: " + std::to_string(block_id));
}

bool Selector::matches(const Label& label) const {
    if (txb && *txb != label.txb) return false;
    if (aoa_class && *aoa_class != label.aoa_class) return false;
    if (gain_index && *gain_index != label.gain_index) return false;
    if (antenna_seed && *antenna_seed != label.antenna_seed) return false;
    if (scenario && *scenario != label.scenario) return false;
    if (snr_min_db && label.snr_db < *snr_min_db) return false;
    if (snr_max_db && label.snr_db > *snr_max_db) return false;
    return true;
}

DatasetWriter::DatasetWriter(std::string path_prefix, DatasetManifest header)
    : prefix_(std::move(path_prefix)), manifest_(std::move(header)) {
    manifest_.cells.clear();
    manifest_.data_file = std::filesystem::path(prefix_).filename().string() + ".iqb";
    out_.open(prefix_ + ".iqb", std::ios::binary | std::ios::trunc);
    if (!out_) throw FormatError("cannot open dataset file for writing: " + prefix_ + ".iqb");
}

DatasetWriter::~DatasetWriter() = default;

void DatasetWriter::write_block(const Label& label, const IQBlock& block) {
    if (finalized_) throw UsageError("DatasetWriter: write after finalize");
    if (block.samples.size() != manifest_.block_len)
        throw UsageError("DatasetWriter: block length mismatch");
    for (const auto& s : block.samples) {
        if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
            throw UsageError("DatasetWriter: non-finite sample");
    }
    if (manifest_.cells.empty() || !(manifest_.cells.back().label == label)) {
        manifest_.cells.push_back({label, 0, bytes_written_});
    }
    out_.write(reinterpret_cast<const char*>(block.samples.data()),
               static_cast<std::streamsize>(block.samples.size() * sizeof(std::complex<float>)));
    if (!out_) throw FormatError("dataset write failure at byte offset " +
                                 std::to_string(bytes_written_));
    bytes_written_ += block_bytes(manifest_.block_len);
    manifest_.cells.back().count += 1;
}

void DatasetWriter::write_blocks(const Label& label, const std::vector<IQBlock>& blocks) {
    for (const auto& b : blocks) write_block(label, b);
}

const DatasetManifest& DatasetWriter::finalize() {
    if (finalized_) return manifest_;
    out_.close();
    write_manifest(prefix_ + ".manifest", manifest_);
    finalized_ = true;
    return manifest_;
}

void write_manifest(const std::string& manifest_path, const DatasetManifest& manifest) {
    std::ofstream out(manifest_path);
    if (!out) throw FormatError("cannot open manifest for writing: " + manifest_path);
    out << kManifestMagic << ' ' << kManifestVersion << '\n';
    out << "codebook = " << manifest.codebook_kind << '\n';
    out << "block_len = " << manifest.block_len << '\n';
    out << "master_seed = " << manifest.master_seed << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "aoa_set =";
    for (std::size_t i = 0; i < manifest.aoa_set_deg.size(); ++i)
        out << (i ? "," : " ") << manifest.aoa_set_deg[i];
    out << '\n';
    out << "data_file = " << manifest.data_file << '\n';
    for (const auto& c : manifest.cells) {
        out << "cell = " << c.label.txb << ' ' << c.label.aoa_class << ' '
            << c.label.gain_index << ' ' << c.label.antenna_seed << ' '
            << to_string(c.label.scenario) << ' ' << c.label.snr_db << ' ' << c.count << ' '
            << c.offset_bytes << '\n';
    }
    out << "total_blocks = " << manifest.total_blocks() << '\n';
    if (!out) throw FormatError("manifest write failure: " + manifest_path);
}

DatasetManifest read_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw FormatError("cannot open manifest: " + manifest_path);

    std::string magic, version;
    in >> magic >> version;
    if (magic != kManifestMagic) throw FormatError("manifest: bad magic in " + manifest_path);
    if (version != kManifestVersion)
        throw FormatError("manifest: unsupported format version '" + version + "'");

    DatasetManifest m;
    std::int64_t declared_total = -1;
    std::string line;
    std::getline(in, line); // rest of header line
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("manifest: malformed line: " + line);
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t") + 1);
        };
        trim(key);
        trim(value);
        if (key == "codebook") {
            m.codebook_kind = value;
        } else if (key == "block_len") {
            m.block_len = std::stoull(value);
        } else if (key == "master_seed") {
            m.master_seed = std::stoull(value);
        } else if (key == "aoa_set") {
            m.aoa_set_deg = parse_double_list(value);
        } else if (key == "data_file") {
            m.data_file = value;
        } else if (key == "cell") {
            std::istringstream cs(value);
            CellInfo c;
            std::string scenario_name;
            if (!(cs >> c.label.txb >> c.label.aoa_class >> c.label.gain_index >>
                  c.label.antenna_seed >> scenario_name >> c.label.snr_db >> c.count >>
                  c.offset_bytes))
                throw FormatError("manifest: malformed cell line: " + line);
            c.label.scenario = scenario_from_string(scenario_name);
            m.cells.push_back(c);
        } else if (key == "total_blocks") {
            declared_total = std::stoll(value);
        } else {
            throw FormatError("manifest: unknown key '" + key + "'");
        }
    }
    if (m.block_len == 0) throw FormatError("manifest: missing block_len");
    if (declared_total != m.total_blocks())
        throw FormatError("manifest: total_blocks " + std::to_string(declared_total) +
                          " does not match cell counts " + std::to_string(m.total_blocks()));
    return m;
}

DatasetReader::DatasetReader(const std::string& manifest_path)
    : manifest_(read_manifest(manifest_path)) {
    const auto dir = std::filesystem::path(manifest_path).parent_path();
    data_path_ = (dir / manifest_.data_file).string();

    std::error_code ec;
    const auto size = std::filesystem::file_size(data_path_, ec);
    if (ec) throw FormatError("cannot stat dataset file: " + data_path_);

    const std::int64_t bb = block_bytes(manifest_.block_len);
    const std::int64_t expected = manifest_.total_blocks() * bb;
    if (static_cast<std::int64_t>(size) != expected) {
        const std::int64_t partial = static_cast<std::int64_t>(size) % bb;
        std::ostringstream os;
        os << "dataset file size " << size << " does not match manifest (" << expected
           << " bytes expected)";
        if (partial != 0)
            os << "; file truncated mid-block at byte offset " << (size - partial);
        throw FormatError(os.str());
    }

    in_.open(data_path_, std::ios::binary);
    if (!in_) throw FormatError("cannot open dataset file: " + data_path_);
}

IQBlock DatasetReader::read_block(std::int64_t block_id) const {
    const std::int64_t bb = block_bytes(manifest_.block_len);
    const std::int64_t offset = block_id * bb;
    in_.clear();
    in_.seekg(offset);
    IQBlock block;
    block.block_index = block_id;
    block.samples.resize(manifest_.block_len);
    in_.read(reinterpret_cast<char*>(block.samples.data()), bb);
    if (!in_)
        throw FormatError("dataset read failure at byte offset " + std::to_string(offset));
    return block;
}

const Label& DatasetReader::label_of(std::int64_t block_id) const {
    return manifest_.cells[manifest_.cell_of(block_id)].label;
}

std::vector<std::int64_t> DatasetReader::select_ids(const Selector& sel) const {
    std::vector<std::int64_t> ids;
    std::int64_t start = 0;
    for (const auto& c : manifest_.cells) {
        if (sel.matches(c.label)) {
            for (std::int64_t i = 0; i < c.count; ++i) ids.push_back(start + i);
        }
        start += c.count;
    }
    return ids;
}

void DatasetReader::for_each(const Selector& sel,
                             const std::function<void(const IQBlock&, const Label&)>& fn) const {
    for (auto id : select_ids(sel)) {
        const IQBlock block = read_block(id);
        fn(block, label_of(id));
    }
}

InMemoryDataset load_dataset(const std::string& manifest_path) {
    DatasetReader reader(manifest_path);
    InMemoryDataset ds;
    ds.manifest = reader.manifest();
    const std::int64_t n = ds.manifest.total_blocks();
    ds.blocks.reserve(n);
    for (std::int64_t i = 0; i < n; ++i) ds.blocks.push_back(reader.read_block(i));
    return ds;
}

SplitIds split(const DatasetManifest& manifest, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw UsageError("split: train_fraction must be in (0, 1)");
    if (manifest.cells.empty()) throw UsageError("split: empty dataset");

    SplitIds out;
    std::int64_t start = 0;
    for (std::size_t ci = 0; ci < manifest.cells.size(); ++ci) {
        const std::int64_t n = manifest.cells[ci].count;
        std::vector<std::int64_t> ids(n);
        for (std::int64_t i = 0; i < n; ++i) ids[i] = start + i;

        Rng rng(mix_seed(spec.shuffle_seed, ci));
        for (std::int64_t i = n - 1; i > 0; --i) {
            const auto j = rng.uniform_int(static_cast<std::uint32_t>(i + 1));
            std::swap(ids[i], ids[j]);
        }
        const auto train_n =
            static_cast<std::int64_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
        for (std::int64_t i = 0; i < n; ++i)
            (i < train_n ? out.train : out.test).push_back(ids[i]);
        start += n;
    }
    return out;
}

nn::Tensor to_tensor(const std::vector<const IQBlock*>& blocks, bool normalize) {
    if (blocks.empty()) throw UsageError("to_tensor: no blocks");
    const std::size_t k = blocks.front()->samples.size();
    for (const auto* b : blocks) {
        if (b->samples.size() != k) throw UsageError("to_tensor: ragged block lengths");
    }
    nn::Tensor t({blocks.size(), k, 2});
    std::size_t idx = 0;
    for (const auto* b : blocks) {
        for (std::size_t i = 0; i < k; ++i) {
            t.data[idx++] = static_cast<double>(b->samples[i].real());
            t.data[idx++] = static_cast<double>(b->samples[i].imag());
        }
    }
    if (normalize) {
        double power = 0.0;
        for (double v : t.data) power += v * v;
        power /= static_cast<double>(blocks.size() * k);
        if (power > 0.0) {
            const double scale = 1.0 / std::sqrt(power);
            for (double& v : t.data) v *= scale;
        }
    }
    return t;
}

nn::Tensor to_tensor(const std::vector<IQBlock>& blocks, bool normalize) {
    std::vector<const IQBlock*> ptrs;
    ptrs.reserve(blocks.size());
    for (const auto& b : blocks) ptrs.push_back(&b);
    return to_tensor(ptrs, normalize);
}

std::vector<std::vector<std::int64_t>> epoch_batches(const std::vector<std::int64_t>& ids,
                                                     std::size_t batch_size,
                                                     std::uint64_t shuffle_seed, int epoch) {
    if (batch_size < 1) throw UsageError("epoch_batches: batch_size must be >= 1");
    std::vector<std::int64_t> order = ids;
    Rng rng(mix_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = rng.uniform_int(static_cast<std::uint32_t>(i));
        std::swap(order[i - 1], order[j]);
    }
    std::vector<std::vector<std::int64_t>> batches;
    for (std::size_t pos = 0; pos < order.size(); pos += batch_size) {
        const auto end = std::min(pos + batch_size, order.size());
        batches.emplace_back(order.begin() + pos, order.begin() + end);
    }
    return batches;
}

std::vector<Example> group_examples(const DatasetManifest& manifest,
                                    const std::vector<std::int64_t>& ids, int window,
                                    TargetField target) {
    if (window < 1) throw UsageError("group_examples: window must be >= 1");
    std::vector<std::vector<std::int64_t>> per_cell(manifest.cells.size());
    std::vector<std::int64_t> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    for (auto id : sorted) per_cell[manifest.cell_of(id)].push_back(id);

    std::vector<Example> examples;
    for (std::size_t ci = 0; ci < per_cell.size(); ++ci) {
        const auto& cell_ids = per_cell[ci];
        const Label& label = manifest.cells[ci].label;
        const int cls = target == TargetField::Txb ? label.txb : label.aoa_class;
        for (std::size_t pos = 0; pos + window <= cell_ids.size(); pos += window) {
            Example ex;
            ex.block_ids.assign(cell_ids.begin() + pos, cell_ids.begin() + pos + window);
            ex.target = cls;
            examples.push_back(std::move(ex));
        }
    }
    return examples;
}

} // namespace deepbeam::data
