// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "deepbeam/iq_dataset.hpp"
#include "deepbeam/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace deepbeam::nn {

enum class LayerKind { Conv, MaxPool, Dense, Relu, Softmax };
enum class Padding { Same, Valid };

struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    // conv
    int filters = 0;
    int kernel_d = 1;
    int kernel_w = 1;
    Padding padding = Padding::Same;
    // dense
    int units = 0;
};

struct ModelSpec {
    std::size_t input_l = 1;
    std::size_t input_k = 2048;
    std::size_t input_c = 2;
    int num_classes = 2;
    std::vector<LayerSpec> layers; // must end with Softmax
};

// ---- primitive ops (activations are (H, W, C) row-major) ----

/// Sliding dot product per output position and filter; filters are stored
/// (d, w, C, F). `same` keeps spatial dims, `valid` yields (n-d+1, m-w+1).
Tensor conv_forward(const Tensor& input, const Tensor& filters, const Tensor& bias,
                    Padding padding);
void conv_backward(const Tensor& input, const Tensor& filters, Padding padding,
                   const Tensor& d_out, Tensor* d_input, Tensor* d_filters, Tensor* d_bias);

/// Window 1x2 max over the W axis; selections recorded for backward.
Tensor maxpool_forward(const Tensor& input, std::vector<std::uint8_t>* selections = nullptr);
void maxpool_backward(const Tensor& d_out, const std::vector<std::uint8_t>& selections,
                      Tensor& d_input);

/// x (N) flat, weights (N, U), bias (U).
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& d_out,
                    Tensor* d_input, Tensor* d_weights, Tensor* d_bias);

Tensor relu(const Tensor& input);
Tensor softmax(const Tensor& logits);
double cross_entropy(const Tensor& probabilities, int label);
double cross_entropy_from_logits(const Tensor& logits, int label);

/// Extra finiteness checks after every layer when enabled.
void set_debug_checks(bool enabled);
bool debug_checks_enabled();

// ---- model ----

enum class Variant { Baseline, TxbSmall512, TxbTiny };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct LayerState {
    LayerSpec spec;
    std::vector<std::size_t> in_shape;
    std::vector<std::size_t> out_shape;
    Tensor weights; // conv: (d, w, C, F); dense: (N, U)
    Tensor bias;    // (F) / (U)
};

class Model {
  public:
    explicit Model(ModelSpec spec);

    const ModelSpec& spec() const { return spec_; }
    const std::vector<LayerState>& layers() const { return layers_; }
    std::vector<LayerState>& layers() { return layers_; }

    /// Parameter tensors in declaration order (weights then bias per layer).
    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;

    /// Kaiming-style uniform fan-in init; biases zero.
    void init_params(std::uint64_t seed);

    Tensor forward(const Tensor& input) const; // class probabilities
    int predict(const Tensor& input, double* confidence = nullptr) const;

  private:
    ModelSpec spec_;
    std::vector<LayerState> layers_;
};

/// Per-layer activation cache for the backward pass. Reusable across calls.
struct Workspace {
    std::vector<Tensor> acts;
    std::vector<std::vector<std::uint8_t>> pool_sel;
};

void forward_cached(const Model& model, const Tensor& input, Workspace& ws);

/// Gradients shaped like Model::parameters(), in the same order.
struct ParamGrads {
    std::vector<Tensor> tensors;

    static ParamGrads zeros_like(const Model& model);
    void add(const ParamGrads& other);
    void scale(double s);
};

/// Forward + backward for one example; accumulates into grads, returns loss.
double backward(const Model& model, const Tensor& input, int label, Workspace& ws,
                ParamGrads& grads);

// ---- optimizer ----

struct AdamState {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    static AdamState for_model(const Model& model, double learning_rate = 1e-4);
};

void adam_step(AdamState& state, std::vector<Tensor*>& params, const ParamGrads& grads);

// ---- assembly & training ----

/// baseline: 7x(conv16 w7 + relu + pool) + dense128 + relu + dense + softmax.
/// txb-small-512: conv16 w7 + relu + pool + dense + softmax, K fixed to 512.
/// txb-tiny: conv12 w7 + relu + dense + softmax.
Model build_model(Variant variant, std::size_t l, std::size_t k, int num_classes);

/// Bridges the dataset to the trainer: examples index L-block windows.
struct TrainingData {
    const data::InMemoryDataset* dataset = nullptr;
    std::vector<data::Example> examples;
    bool normalize = false;

    Tensor input_of(std::size_t index) const;
    int label_of(std::size_t index) const;
    std::size_t size() const { return examples.size(); }
};

struct TrainOptions {
    int epochs = 10;
    std::size_t batch_size = 100;
    double learning_rate = 1e-4;
    std::uint64_t seed = 0;
    int num_threads = 1;
    bool shuffle = true;
    std::ostream* log_csv = nullptr; // header: epoch,split,loss,accuracy
    const TrainingData* eval_data = nullptr;
};

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
};

TrainResult train(Model& model, const TrainingData& data, const TrainOptions& options);

/// Mean over examples and spatial positions of one conv layer's raw output,
/// one value per filter.
std::vector<double> activation_map(const Model& model, const std::vector<Tensor>& inputs,
                                   std::size_t layer_index);

void save_model(const std::string& path, const Model& model);
void save_model(std::ostream& out, const Model& model);
Model load_model(const std::string& path);
Model load_model(std::istream& in);

} // namespace deepbeam::nn
