// SPDX-License-Identifier: Apache-2.0
#include "deepbeam/beamnet.hpp"

#include "deepbeam/errors.hpp"
#include "deepbeam/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

namespace deepbeam::nn {

namespace {

std::atomic<bool> g_debug_checks{false};

void check_finite(const Tensor& t, const char* where) {
    if (g_debug_checks.load(std::memory_order_relaxed) && !t.all_finite())
        throw TrainingError(std::string("non-finite values after ") + where);
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw UsageError(msg);
}

struct ConvDims {
    std::size_t h, w, c;        // input
    std::size_t d, kw, f;       // filters
    std::size_t oh, ow;         // output
    std::size_t pad_t, pad_l;
};

ConvDims conv_dims(const Tensor& input, const Tensor& filters, Padding padding) {
    require(input.shape.size() == 3, "conv: input must be (H, W, C)");
    require(filters.shape.size() == 4, "conv: filters must be (d, w, C, F)");
    ConvDims cd{};
    cd.h = input.shape[0];
    cd.w = input.shape[1];
    cd.c = input.shape[2];
    cd.d = filters.shape[0];
    cd.kw = filters.shape[1];
    cd.f = filters.shape[3];
    require(filters.shape[2] == cd.c, "conv: channel mismatch between input and filters");
    if (padding == Padding::Same) {
        cd.oh = cd.h;
        cd.ow = cd.w;
        cd.pad_t = (cd.d - 1) / 2;
        cd.pad_l = (cd.kw - 1) / 2;
    } else {
        require(cd.h >= cd.d && cd.w >= cd.kw, "conv: filter larger than input for valid padding");
        cd.oh = cd.h - cd.d + 1;
        cd.ow = cd.w - cd.kw + 1;
        cd.pad_t = 0;
        cd.pad_l = 0;
    }
    return cd;
}

void conv_forward_into(const Tensor& input, const Tensor& filters, const Tensor& bias,
                       Padding padding, Tensor& out) {
    const ConvDims cd = conv_dims(input, filters, padding);
    require(bias.numel() == cd.f, "conv: bias size mismatch");
    out.shape = {cd.oh, cd.ow, cd.f};
    out.data.assign(cd.oh * cd.ow * cd.f, 0.0);

    std::vector<double> acc(cd.f);
    const double* in = input.data.data();
    const double* fl = filters.data.data();
    for (std::size_t oh = 0; oh < cd.oh; ++oh) {
        for (std::size_t ow = 0; ow < cd.ow; ++ow) {
            std::copy(bias.data.begin(), bias.data.end(), acc.begin());
            for (std::size_t a = 0; a < cd.d; ++a) {
                const std::ptrdiff_t hi =
                    static_cast<std::ptrdiff_t>(oh + a) - static_cast<std::ptrdiff_t>(cd.pad_t);
                if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(cd.h)) continue;
                for (std::size_t b = 0; b < cd.kw; ++b) {
                    const std::ptrdiff_t wj =
                        static_cast<std::ptrdiff_t>(ow + b) - static_cast<std::ptrdiff_t>(cd.pad_l);
                    if (wj < 0 || wj >= static_cast<std::ptrdiff_t>(cd.w)) continue;
                    const double* ip = in + (static_cast<std::size_t>(hi) * cd.w +
                                             static_cast<std::size_t>(wj)) *
                                                cd.c;
                    const double* fp = fl + (a * cd.kw + b) * cd.c * cd.f;
                    for (std::size_t c = 0; c < cd.c; ++c) {
                        const double v = ip[c];
                        const double* f2 = fp + c * cd.f;
                        for (std::size_t f = 0; f < cd.f; ++f) acc[f] += v * f2[f];
                    }
                }
            }
            std::copy(acc.begin(), acc.end(), out.data.begin() + (oh * cd.ow + ow) * cd.f);
        }
    }
    check_finite(out, "conv_forward");
}

void maxpool_forward_into(const Tensor& input, Tensor& out,
                          std::vector<std::uint8_t>* selections) {
    require(input.shape.size() == 3, "maxpool: input must be (H, W, C)");
    const std::size_t h = input.shape[0], w = input.shape[1], c = input.shape[2];
    require(w >= 2, "maxpool: pooled dimension must be >= 2");
    const std::size_t ow = w / 2;
    out.shape = {h, ow, c};
    out.data.resize(h * ow * c);
    if (selections) selections->resize(h * ow * c);
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
            const double* left = input.data.data() + (i * w + 2 * j) * c;
            const double* right = left + c;
            double* op = out.data.data() + (i * ow + j) * c;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const bool take_right = right[ch] > left[ch];
                op[ch] = take_right ? right[ch] : left[ch];
                if (selections) (*selections)[(i * ow + j) * c + ch] = take_right ? 1 : 0;
            }
        }
    }
    check_finite(out, "maxpool_forward");
}

void dense_forward_into(const Tensor& input, const Tensor& weights, const Tensor& bias,
                        Tensor& out) {
    require(weights.shape.size() == 2, "dense: weights must be (N, U)");
    const std::size_t n = weights.shape[0], u = weights.shape[1];
    require(input.numel() == n, "dense: input size mismatch");
    require(bias.numel() == u, "dense: bias size mismatch");
    out.shape = {u};
    out.data.assign(u, 0.0);
    std::copy(bias.data.begin(), bias.data.end(), out.data.begin());
    const double* w = weights.data.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double v = input.data[i];
        if (v == 0.0) continue;
        const double* wr = w + i * u;
        for (std::size_t j = 0; j < u; ++j) out.data[j] += v * wr[j];
    }
    check_finite(out, "dense_forward");
}

void relu_into(const Tensor& input, Tensor& out) {
    out.shape = input.shape;
    out.data.resize(input.data.size());
    for (std::size_t i = 0; i < input.data.size(); ++i)
        out.data[i] = input.data[i] > 0.0 ? input.data[i] : 0.0;
}

void softmax_into(const Tensor& logits, Tensor& out) {
    require(logits.numel() > 0, "softmax: empty input");
    out.shape = logits.shape;
    out.data.resize(logits.data.size());
    const double m = *std::max_element(logits.data.begin(), logits.data.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        out.data[i] = std::exp(logits.data[i] - m);
        sum += out.data[i];
    }
    for (double& v : out.data) v /= sum;
    check_finite(out, "softmax");
}

} // namespace

void set_debug_checks(bool enabled) { g_debug_checks.store(enabled); }
bool debug_checks_enabled() { return g_debug_checks.load(); }

Tensor conv_forward(const Tensor& input, const Tensor& filters, const Tensor& bias,
                    Padding padding) {
    Tensor out;
    conv_forward_into(input, filters, bias, padding, out);
    return out;
}

void conv_backward(const Tensor& input, const Tensor& filters, Padding padding,
                   const Tensor& d_out, Tensor* d_input, Tensor* d_filters, Tensor* d_bias) {
    const ConvDims cd = conv_dims(input, filters, padding);
    require(d_out.shape.size() == 3 && d_out.shape[0] == cd.oh && d_out.shape[1] == cd.ow &&
                d_out.shape[2] == cd.f,
            "conv_backward: d_out shape mismatch");
    if (d_input) {
        d_input->shape = input.shape;
        d_input->data.assign(input.numel(), 0.0);
    }
    if (d_filters) {
        d_filters->shape = filters.shape;
        d_filters->data.assign(filters.numel(), 0.0);
    }
    if (d_bias) {
        d_bias->shape = {cd.f};
        d_bias->data.assign(cd.f, 0.0);
    }

    const double* in = input.data.data();
    const double* fl = filters.data.data();
    for (std::size_t oh = 0; oh < cd.oh; ++oh) {
        for (std::size_t ow = 0; ow < cd.ow; ++ow) {
            const double* go = d_out.data.data() + (oh * cd.ow + ow) * cd.f;
            if (d_bias) {
                for (std::size_t f = 0; f < cd.f; ++f) d_bias->data[f] += go[f];
            }
            for (std::size_t a = 0; a < cd.d; ++a) {
                const std::ptrdiff_t hi =
                    static_cast<std::ptrdiff_t>(oh + a) - static_cast<std::ptrdiff_t>(cd.pad_t);
                if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(cd.h)) continue;
                for (std::size_t b = 0; b < cd.kw; ++b) {
                    const std::ptrdiff_t wj =
                        static_cast<std::ptrdiff_t>(ow + b) - static_cast<std::ptrdiff_t>(cd.pad_l);
                    if (wj < 0 || wj >= static_cast<std::ptrdiff_t>(cd.w)) continue;
                    const std::size_t base = (static_cast<std::size_t>(hi) * cd.w +
                                              static_cast<std::size_t>(wj)) *
                                             cd.c;
                    const std::size_t fbase = (a * cd.kw + b) * cd.c * cd.f;
                    for (std::size_t c = 0; c < cd.c; ++c) {
                        const double v = in[base + c];
                        const double* f2 = fl + fbase + c * cd.f;
                        double din_acc = 0.0;
                        if (d_filters) {
                            double* df = d_filters->data.data() + fbase + c * cd.f;
                            for (std::size_t f = 0; f < cd.f; ++f) {
                                df[f] += v * go[f];
                                din_acc += f2[f] * go[f];
                            }
                        } else {
                            for (std::size_t f = 0; f < cd.f; ++f) din_acc += f2[f] * go[f];
                        }
                        if (d_input) d_input->data[base + c] += din_acc;
                    }
                }
            }
        }
    }
}

Tensor maxpool_forward(const Tensor& input, std::vector<std::uint8_t>* selections) {
    Tensor out;
    maxpool_forward_into(input, out, selections);
    return out;
}

void maxpool_backward(const Tensor& d_out, const std::vector<std::uint8_t>& selections,
                      Tensor& d_input) {
    require(d_out.shape.size() == 3, "maxpool_backward: d_out must be (H, W, C)");
    const std::size_t h = d_out.shape[0], ow = d_out.shape[1], c = d_out.shape[2];
    require(selections.size() == h * ow * c, "maxpool_backward: selection size mismatch");
    require(d_input.shape.size() == 3 && d_input.shape[0] == h && d_input.shape[2] == c,
            "maxpool_backward: d_input shape mismatch");
    const std::size_t w = d_input.shape[1];
    std::fill(d_input.data.begin(), d_input.data.end(), 0.0);
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
            const std::size_t oidx = (i * ow + j) * c;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t src = (i * w + 2 * j + selections[oidx + ch]) * c + ch;
                d_input.data[src] += d_out.data[oidx + ch];
            }
        }
    }
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    Tensor out;
    dense_forward_into(input, weights, bias, out);
    return out;
}

void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& d_out,
                    Tensor* d_input, Tensor* d_weights, Tensor* d_bias) {
    const std::size_t n = weights.shape[0], u = weights.shape[1];
    require(d_out.numel() == u, "dense_backward: d_out size mismatch");
    require(input.numel() == n, "dense_backward: input size mismatch");
    if (d_bias) {
        d_bias->shape = {u};
        d_bias->data.assign(d_out.data.begin(), d_out.data.end());
    }
    if (d_weights) {
        d_weights->shape = weights.shape;
        d_weights->data.assign(weights.numel(), 0.0);
    }
    if (d_input) {
        d_input->shape = {n};
        d_input->data.assign(n, 0.0);
    }
    const double* w = weights.data.data();
    const double* go = d_out.data.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double v = input.data[i];
        const double* wr = w + i * u;
        double acc = 0.0;
        if (d_weights) {
            double* dw = d_weights->data.data() + i * u;
            for (std::size_t j = 0; j < u; ++j) {
                dw[j] += v * go[j];
                acc += wr[j] * go[j];
            }
        } else {
            for (std::size_t j = 0; j < u; ++j) acc += wr[j] * go[j];
        }
        if (d_input) d_input->data[i] = acc;
    }
}

Tensor relu(const Tensor& input) {
    Tensor out;
    relu_into(input, out);
    return out;
}

Tensor softmax(const Tensor& logits) {
    Tensor out;
    softmax_into(logits, out);
    return out;
}

double cross_entropy(const Tensor& probabilities, int label) {
    require(label >= 0 && static_cast<std::size_t>(label) < probabilities.numel(),
            "cross_entropy: label out of range");
    const double p = probabilities.data[static_cast<std::size_t>(label)];
    return -std::log(std::max(p, 1e-300));
}

double cross_entropy_from_logits(const Tensor& logits, int label) {
    require(label >= 0 && static_cast<std::size_t>(label) < logits.numel(),
            "cross_entropy: label out of range");
    const double m = *std::max_element(logits.data.begin(), logits.data.end());
    double sum = 0.0;
    for (double z : logits.data) sum += std::exp(z - m);
    return m + std::log(sum) - logits.data[static_cast<std::size_t>(label)];
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Baseline: return "baseline";
        case Variant::TxbSmall512: return "txb-small-512";
        case Variant::TxbTiny: return "txb-tiny";
    }
    throw UsageError("unknown variant");
}

Variant variant_from_string(const std::string& name) {
    if (name == "baseline") return Variant::Baseline;
    if (name == "txb-small-512") return Variant::TxbSmall512;
    if (name == "txb-tiny") return Variant::TxbTiny;
    throw UsageError("unknown model variant: " + name);
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
    require(!spec_.layers.empty(), "ModelSpec: no layers");
    require(spec_.layers.back().kind == LayerKind::Softmax,
            "ModelSpec: final layer must be softmax");
    require(spec_.num_classes >= 2, "ModelSpec: num_classes must be >= 2");

    std::vector<std::size_t> shape = {spec_.input_l, spec_.input_k, spec_.input_c};
    for (const auto& ls : spec_.layers) {
        LayerState state;
        state.spec = ls;
        state.in_shape = shape;
        switch (ls.kind) {
            case LayerKind::Conv: {
                require(shape.size() == 3, "conv layer requires (H, W, C) input");
                require(ls.filters >= 1 && ls.kernel_d >= 1 && ls.kernel_w >= 1,
                        "conv layer: bad dimensions");
                const auto d = static_cast<std::size_t>(ls.kernel_d);
                const auto w = static_cast<std::size_t>(ls.kernel_w);
                const auto f = static_cast<std::size_t>(ls.filters);
                state.weights = Tensor({d, w, shape[2], f});
                state.bias = Tensor({f});
                if (ls.padding == Padding::Same) {
                    shape = {shape[0], shape[1], f};
                } else {
                    require(shape[0] >= d && shape[1] >= w,
                            "conv layer: filter larger than input");
                    shape = {shape[0] - d + 1, shape[1] - w + 1, f};
                }
                break;
            }
            case LayerKind::MaxPool: {
                require(shape.size() == 3, "maxpool layer requires (H, W, C) input");
                require(shape[1] >= 2, "maxpool layer: width must be >= 2");
                shape = {shape[0], shape[1] / 2, shape[2]};
                break;
            }
            case LayerKind::Dense: {
                require(ls.units >= 1, "dense layer: units must be >= 1");
                const std::size_t n = Tensor::numel_of(shape);
                state.weights = Tensor({n, static_cast<std::size_t>(ls.units)});
                state.bias = Tensor({static_cast<std::size_t>(ls.units)});
                shape = {static_cast<std::size_t>(ls.units)};
                break;
            }
            case LayerKind::Relu:
            case LayerKind::Softmax:
                break;
        }
        state.out_shape = shape;
        layers_.push_back(std::move(state));
    }
    require(Tensor::numel_of(shape) == static_cast<std::size_t>(spec_.num_classes),
            "ModelSpec: output width does not match num_classes");
}

std::vector<Tensor*> Model::parameters() {
    std::vector<Tensor*> out;
    for (auto& l : layers_) {
        if (l.weights.numel() > 0) {
            out.push_back(&l.weights);
            out.push_back(&l.bias);
        }
    }
    return out;
}

std::vector<const Tensor*> Model::parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& l : layers_) {
        if (l.weights.numel() > 0) {
            out.push_back(&l.weights);
            out.push_back(&l.bias);
        }
    }
    return out;
}

void Model::init_params(std::uint64_t seed) {
    std::size_t layer_index = 0;
    for (auto& l : layers_) {
        if (l.weights.numel() > 0) {
            std::size_t fan_in = 0;
            if (l.spec.kind == LayerKind::Conv) {
                fan_in = static_cast<std::size_t>(l.spec.kernel_d) *
                         static_cast<std::size_t>(l.spec.kernel_w) * l.in_shape[2];
            } else {
                fan_in = l.weights.shape[0];
            }
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            Rng rng(mix_seed(seed, layer_index));
            for (double& v : l.weights.data) v = rng.uniform(-bound, bound);
            l.bias.fill(0.0);
        }
        ++layer_index;
    }
}

void forward_cached(const Model& model, const Tensor& input, Workspace& ws) {
    const auto& layers = model.layers();
    require(input.shape.size() == 3 && input.shape[0] == model.spec().input_l &&
                input.shape[1] == model.spec().input_k && input.shape[2] == model.spec().input_c,
            "forward: input shape does not match model");
    ws.acts.resize(layers.size());
    ws.pool_sel.resize(layers.size());

    const Tensor* cur = &input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        Tensor& out = ws.acts[i];
        switch (l.spec.kind) {
            case LayerKind::Conv:
                conv_forward_into(*cur, l.weights, l.bias, l.spec.padding, out);
                break;
            case LayerKind::MaxPool:
                maxpool_forward_into(*cur, out, &ws.pool_sel[i]);
                break;
            case LayerKind::Dense:
                dense_forward_into(*cur, l.weights, l.bias, out);
                break;
            case LayerKind::Relu:
                relu_into(*cur, out);
                break;
            case LayerKind::Softmax:
                softmax_into(*cur, out);
                break;
        }
        cur = &out;
    }
}

Tensor Model::forward(const Tensor& input) const {
    Workspace ws;
    forward_cached(*this, input, ws);
    return ws.acts.back();
}

int Model::predict(const Tensor& input, double* confidence) const {
    const Tensor probs = forward(input);
    const auto it = std::max_element(probs.data.begin(), probs.data.end());
    if (confidence) *confidence = *it;
    return static_cast<int>(it - probs.data.begin());
}

ParamGrads ParamGrads::zeros_like(const Model& model) {
    ParamGrads g;
    for (const Tensor* p : model.parameters()) g.tensors.emplace_back(p->shape);
    return g;
}

void ParamGrads::add(const ParamGrads& other) {
    require(tensors.size() == other.tensors.size(), "ParamGrads: size mismatch");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        for (std::size_t j = 0; j < tensors[i].data.size(); ++j)
            tensors[i].data[j] += other.tensors[i].data[j];
    }
}

void ParamGrads::scale(double s) {
    for (auto& t : tensors) {
        for (double& v : t.data) v *= s;
    }
}

double backward(const Model& model, const Tensor& input, int label, Workspace& ws,
                ParamGrads& grads) {
    const auto& layers = model.layers();
    require(label >= 0 && label < model.spec().num_classes, "backward: label out of range");
    forward_cached(model, input, ws);

    // Softmax + cross-entropy fused: d(logits) = p - onehot(y).
    const Tensor& probs = ws.acts.back();
    const Tensor& logits = layers.size() >= 2 ? ws.acts[layers.size() - 2] : probs;
    const double loss = cross_entropy_from_logits(logits, label);

    Tensor d_cur = probs;
    d_cur.data[static_cast<std::size_t>(label)] -= 1.0;

    // Map layers to their parameter slots.
    std::vector<std::ptrdiff_t> slot(layers.size(), -1);
    std::ptrdiff_t next = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].weights.numel() > 0) {
            slot[i] = next;
            next += 2;
        }
    }
    require(static_cast<std::size_t>(next) == grads.tensors.size(),
            "backward: gradient accumulator does not match model");

    Tensor d_prev;
    for (std::size_t ri = layers.size() - 1; ri-- > 0;) {
        // ri walks layers.size()-2 .. 0; layer (ri) consumed acts[ri-1] (or input).
        const auto& l = layers[ri];
        const Tensor& lin = ri == 0 ? input : ws.acts[ri - 1];
        switch (l.spec.kind) {
            case LayerKind::Conv: {
                Tensor dw, db;
                conv_backward(lin, l.weights, l.spec.padding, d_cur, ri == 0 ? nullptr : &d_prev,
                              &dw, &db);
                auto& gw = grads.tensors[static_cast<std::size_t>(slot[ri])];
                auto& gb = grads.tensors[static_cast<std::size_t>(slot[ri]) + 1];
                for (std::size_t j = 0; j < dw.data.size(); ++j) gw.data[j] += dw.data[j];
                for (std::size_t j = 0; j < db.data.size(); ++j) gb.data[j] += db.data[j];
                break;
            }
            case LayerKind::MaxPool: {
                d_prev = Tensor(lin.shape);
                maxpool_backward(d_cur, ws.pool_sel[ri], d_prev);
                break;
            }
            case LayerKind::Dense: {
                Tensor dw, db, din;
                dense_backward(lin, l.weights, d_cur, ri == 0 ? nullptr : &din, &dw, &db);
                auto& gw = grads.tensors[static_cast<std::size_t>(slot[ri])];
                auto& gb = grads.tensors[static_cast<std::size_t>(slot[ri]) + 1];
                for (std::size_t j = 0; j < dw.data.size(); ++j) gw.data[j] += dw.data[j];
                for (std::size_t j = 0; j < db.data.size(); ++j) gb.data[j] += db.data[j];
                if (ri != 0) {
                    d_prev = std::move(din);
                    d_prev.shape = lin.shape; // restore pre-flatten shape
                }
                break;
            }
            case LayerKind::Relu: {
                d_prev.shape = lin.shape;
                d_prev.data.resize(lin.numel());
                for (std::size_t j = 0; j < lin.data.size(); ++j)
                    d_prev.data[j] = lin.data[j] > 0.0 ? d_cur.data[j] : 0.0;
                break;
            }
            case LayerKind::Softmax:
                // handled by the fused loss gradient
                d_prev = d_cur;
                break;
        }
        if (ri == 0) break;
        d_cur = std::move(d_prev);
        d_prev = Tensor();
    }
    return loss;
}

AdamState AdamState::for_model(const Model& model, double learning_rate) {
    AdamState s;
    s.learning_rate = learning_rate;
    for (const Tensor* p : model.parameters()) {
        s.m.emplace_back(p->shape);
        s.v.emplace_back(p->shape);
    }
    return s;
}

void adam_step(AdamState& state, std::vector<Tensor*>& params, const ParamGrads& grads) {
    require(params.size() == grads.tensors.size(), "adam_step: parameter/gradient mismatch");
    require(params.size() == state.m.size(), "adam_step: state does not match parameters");
    state.step += 1;
    const double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads.tensors[i];
        require(p.numel() == g.numel(), "adam_step: shape mismatch");
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < p.data.size(); ++j) {
            m.data[j] = state.beta1 * m.data[j] + (1.0 - state.beta1) * g.data[j];
            v.data[j] = state.beta2 * v.data[j] + (1.0 - state.beta2) * g.data[j] * g.data[j];
            const double mhat = m.data[j] / b1t;
            const double vhat = v.data[j] / b2t;
            p.data[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

Model build_model(Variant variant, std::size_t l, std::size_t k, int num_classes) {
    require(l >= 1 && k >= 1, "build_model: bad input dims");
    require(num_classes >= 2, "build_model: need at least two classes");
    ModelSpec spec;
    spec.input_l = l;
    spec.input_k = k;
    spec.input_c = 2;
    spec.num_classes = num_classes;

    auto conv = [](int filters, int width) {
        LayerSpec s;
        s.kind = LayerKind::Conv;
        s.filters = filters;
        s.kernel_d = 1;
        s.kernel_w = width;
        s.padding = Padding::Same;
        return s;
    };
    auto plain = [](LayerKind kind) {
        LayerSpec s;
        s.kind = kind;
        return s;
    };
    auto dense = [](int units) {
        LayerSpec s;
        s.kind = LayerKind::Dense;
        s.units = units;
        return s;
    };

    switch (variant) {
        case Variant::Baseline: {
            if (k % 128 != 0)
                throw UsageError("baseline: K must be divisible by 2^7 (pooling depth)");
            for (int stage = 0; stage < 7; ++stage) {
                spec.layers.push_back(conv(16, 7));
                spec.layers.push_back(plain(LayerKind::Relu));
                spec.layers.push_back(plain(LayerKind::MaxPool));
            }
            spec.layers.push_back(dense(128));
            spec.layers.push_back(plain(LayerKind::Relu));
            spec.layers.push_back(dense(num_classes));
            spec.layers.push_back(plain(LayerKind::Softmax));
            break;
        }
        case Variant::TxbSmall512: {
            if (k != 512) throw UsageError("txb-small-512: K must be 512");
            spec.layers.push_back(conv(16, 7));
            spec.layers.push_back(plain(LayerKind::Relu));
            spec.layers.push_back(plain(LayerKind::MaxPool));
            spec.layers.push_back(dense(num_classes));
            spec.layers.push_back(plain(LayerKind::Softmax));
            break;
        }
        case Variant::TxbTiny: {
            spec.layers.push_back(conv(12, 7));
            spec.layers.push_back(plain(LayerKind::Relu));
            spec.layers.push_back(dense(num_classes));
            spec.layers.push_back(plain(LayerKind::Softmax));
            break;
        }
    }
    return Model(std::move(spec));
}

Tensor TrainingData::input_of(std::size_t index) const {
    const auto& ex = examples[index];
    std::vector<const data::IQBlock*> ptrs;
    ptrs.reserve(ex.block_ids.size());
    for (auto id : ex.block_ids) ptrs.push_back(&dataset->blocks[static_cast<std::size_t>(id)]);
    return data::to_tensor(ptrs, normalize);
}

int TrainingData::label_of(std::size_t index) const { return examples[index].target; }

namespace {

struct BatchResult {
    ParamGrads grads;
    double loss_sum = 0.0;
    std::size_t correct = 0;
};

void run_batch_chunk(const Model& model, const TrainingData& data,
                     const std::vector<std::int64_t>& batch, std::size_t begin, std::size_t end,
                     BatchResult& result) {
    Workspace ws;
    for (std::size_t i = begin; i < end; ++i) {
        const auto ex = static_cast<std::size_t>(batch[i]);
        const Tensor input = data.input_of(ex);
        const int label = data.label_of(ex);
        result.loss_sum += backward(model, input, label, ws, result.grads);
        const Tensor& probs = ws.acts.back();
        const auto pred =
            std::max_element(probs.data.begin(), probs.data.end()) - probs.data.begin();
        if (pred == label) ++result.correct;
    }
}

std::pair<double, double> eval_loss_accuracy(const Model& model, const TrainingData& data) {
    double loss = 0.0;
    std::size_t correct = 0;
    Workspace ws;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Tensor input = data.input_of(i);
        forward_cached(model, input, ws);
        const Tensor& probs = ws.acts.back();
        const Tensor& logits = ws.acts[ws.acts.size() - 2];
        loss += cross_entropy_from_logits(logits, data.label_of(i));
        const auto pred =
            std::max_element(probs.data.begin(), probs.data.end()) - probs.data.begin();
        if (pred == data.label_of(i)) ++correct;
    }
    const double n = static_cast<double>(data.size());
    return {loss / n, static_cast<double>(correct) / n};
}

} // namespace

TrainResult train(Model& model, const TrainingData& data, const TrainOptions& options) {
    if (data.size() == 0) throw UsageError("train: empty dataset");
    if (options.epochs < 1) throw UsageError("train: epochs must be >= 1");
    if (options.batch_size < 1) throw UsageError("train: batch_size must be >= 1");
    const int threads = std::max(1, options.num_threads);

    AdamState adam = AdamState::for_model(model, options.learning_rate);
    auto params = model.parameters();

    std::vector<std::int64_t> indices(data.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<std::int64_t>(i);

    if (options.log_csv) *options.log_csv << "epoch,split,loss,accuracy\n";

    TrainResult result;
    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        std::vector<std::vector<std::int64_t>> batches;
        if (options.shuffle) {
            batches = data::epoch_batches(indices, options.batch_size, options.seed, epoch);
        } else {
            for (std::size_t pos = 0; pos < indices.size(); pos += options.batch_size) {
                const auto end = std::min(pos + options.batch_size, indices.size());
                batches.emplace_back(indices.begin() + pos, indices.begin() + end);
            }
        }

        double epoch_loss = 0.0;
        std::size_t epoch_correct = 0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& batch = batches[bi];
            std::vector<BatchResult> partial(static_cast<std::size_t>(threads));
            for (auto& p : partial) p.grads = ParamGrads::zeros_like(model);

            if (threads == 1 || batch.size() < 2) {
                run_batch_chunk(model, data, batch, 0, batch.size(), partial[0]);
            } else {
                std::vector<std::thread> pool;
                const std::size_t per = (batch.size() + threads - 1) / threads;
                for (int t = 0; t < threads; ++t) {
                    const std::size_t begin = std::min(batch.size(), t * per);
                    const std::size_t end = std::min(batch.size(), begin + per);
                    if (begin >= end) break;
                    pool.emplace_back(run_batch_chunk, std::cref(model), std::cref(data),
                                      std::cref(batch), begin, end, std::ref(partial[t]));
                }
                for (auto& th : pool) th.join();
            }

            ParamGrads total = std::move(partial[0].grads);
            double batch_loss = partial[0].loss_sum;
            std::size_t batch_correct = partial[0].correct;
            for (int t = 1; t < threads; ++t) {
                total.add(partial[t].grads);
                batch_loss += partial[t].loss_sum;
                batch_correct += partial[t].correct;
            }

            if (!std::isfinite(batch_loss))
                throw TrainingError("training diverged at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(bi));

            total.scale(1.0 / static_cast<double>(batch.size()));
            adam_step(adam, params, total);
            epoch_loss += batch_loss;
            epoch_correct += batch_correct;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = epoch_loss / static_cast<double>(data.size());
        stats.accuracy = static_cast<double>(epoch_correct) / static_cast<double>(data.size());
        result.history.push_back(stats);
        if (options.log_csv)
            *options.log_csv << epoch << ",train," << stats.loss << ',' << stats.accuracy << '\n';
        if (options.eval_data && options.eval_data->size() > 0) {
            const auto [tl, ta] = eval_loss_accuracy(model, *options.eval_data);
            if (options.log_csv) *options.log_csv << epoch << ",test," << tl << ',' << ta << '\n';
        }
    }
    return result;
}

std::vector<double> activation_map(const Model& model, const std::vector<Tensor>& inputs,
                                   std::size_t layer_index) {
    require(layer_index < model.layers().size(), "activation_map: layer index out of range");
    const auto& layer = model.layers()[layer_index];
    require(layer.spec.kind == LayerKind::Conv, "activation_map: layer is not convolutional");
    require(!inputs.empty(), "activation_map: no inputs");

    const std::size_t f = static_cast<std::size_t>(layer.spec.filters);
    std::vector<double> mean(f, 0.0);
    Workspace ws;
    double count = 0.0;
    for (const auto& input : inputs) {
        forward_cached(model, input, ws);
        const Tensor& act = ws.acts[layer_index];
        const std::size_t spatial = act.shape[0] * act.shape[1];
        for (std::size_t s = 0; s < spatial; ++s) {
            for (std::size_t j = 0; j < f; ++j) mean[j] += act.data[s * f + j];
        }
        count += static_cast<double>(spatial);
    }
    for (auto& v : mean) v /= count;
    return mean;
}

namespace {

constexpr std::uint32_t kModelMagic = 0x4d4e4244; // "DBNM"
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError("model file: unexpected end of data");
    return v;
}

} // namespace

void save_model(std::ostream& out, const Model& model) {
    write_pod(out, kModelMagic);
    write_pod(out, kModelVersion);
    const auto& spec = model.spec();
    write_pod(out, static_cast<std::uint64_t>(spec.input_l));
    write_pod(out, static_cast<std::uint64_t>(spec.input_k));
    write_pod(out, static_cast<std::uint64_t>(spec.input_c));
    write_pod(out, static_cast<std::int32_t>(spec.num_classes));
    write_pod(out, static_cast<std::uint32_t>(spec.layers.size()));
    for (const auto& l : spec.layers) {
        write_pod(out, static_cast<std::uint32_t>(l.kind));
        write_pod(out, static_cast<std::int32_t>(l.filters));
        write_pod(out, static_cast<std::int32_t>(l.kernel_d));
        write_pod(out, static_cast<std::int32_t>(l.kernel_w));
        write_pod(out, static_cast<std::uint32_t>(l.padding));
        write_pod(out, static_cast<std::int32_t>(l.units));
    }
    const auto params = model.parameters();
    write_pod(out, static_cast<std::uint32_t>(params.size()));
    for (const Tensor* p : params) {
        write_pod(out, static_cast<std::uint32_t>(p->shape.size()));
        for (auto d : p->shape) write_pod(out, static_cast<std::uint64_t>(d));
        out.write(reinterpret_cast<const char*>(p->data.data()),
                  static_cast<std::streamsize>(p->data.size() * sizeof(double)));
    }
    if (!out) throw FormatError("model file: write failure");
}

void save_model(const std::string& path, const Model& model) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open model file for writing: " + path);
    save_model(out, model);
}

Model load_model(std::istream& in) {
    if (read_pod<std::uint32_t>(in) != kModelMagic)
        throw FormatError("model file: bad magic");
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kModelVersion)
        throw FormatError("model file: unsupported version " + std::to_string(version));

    ModelSpec spec;
    spec.input_l = read_pod<std::uint64_t>(in);
    spec.input_k = read_pod<std::uint64_t>(in);
    spec.input_c = read_pod<std::uint64_t>(in);
    spec.num_classes = read_pod<std::int32_t>(in);
    const auto num_layers = read_pod<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < num_layers; ++i) {
        LayerSpec l;
        l.kind = static_cast<LayerKind>(read_pod<std::uint32_t>(in));
        l.filters = read_pod<std::int32_t>(in);
        l.kernel_d = read_pod<std::int32_t>(in);
        l.kernel_w = read_pod<std::int32_t>(in);
        l.padding = static_cast<Padding>(read_pod<std::uint32_t>(in));
        l.units = read_pod<std::int32_t>(in);
        spec.layers.push_back(l);
    }

    Model model(std::move(spec));
    auto params = model.parameters();
    const auto num_params = read_pod<std::uint32_t>(in);
    if (num_params != params.size())
        throw FormatError("model file: parameter count mismatch");
    for (Tensor* p : params) {
        const auto rank = read_pod<std::uint32_t>(in);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = read_pod<std::uint64_t>(in);
        if (shape != p->shape) throw FormatError("model file: parameter shape mismatch");
        in.read(reinterpret_cast<char*>(p->data.data()),
                static_cast<std::streamsize>(p->data.size() * sizeof(double)));
        if (!in) throw FormatError("model file: truncated parameter data");
    }
    return model;
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open model file: " + path);
    return load_model(in);
}

} // namespace deepbeam::nn
