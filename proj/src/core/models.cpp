#include "core/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedent {

namespace {

constexpr double kProbFloor = 1e-12;

void check_finite_layer(const std::vector<double>& values, int layer, const char* stage) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            fail(ErrorKind::numeric, std::string("non-finite value in ") + stage +
                                         " at layer " + std::to_string(layer));
        }
    }
}

// logits -> probabilities in place, with log-sum-exp stabilization.
void softmax_inplace(std::vector<double>& logits) {
    double top = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double& z : logits) {
        z = std::exp(z - top);
        denom += z;
    }
    for (double& z : logits) z /= denom;
}

struct LayerView {
    const double* weights;  // out x in, row-major
    const double* bias;     // out
    int in;
    int out;
};

std::vector<LayerView> layer_views(const ModelSpec& spec, const ParamVector& params) {
    std::vector<int> sizes = spec.layer_sizes();
    std::vector<LayerView> views;
    const double* cursor = params.data();
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        LayerView view{cursor, cursor + static_cast<std::size_t>(sizes[l]) * sizes[l + 1],
                       sizes[l], sizes[l + 1]};
        cursor = view.bias + view.out;
        views.push_back(view);
    }
    return views;
}

void affine_forward(const LayerView& layer, const std::vector<double>& in, std::vector<double>& out) {
    out.assign(static_cast<std::size_t>(layer.out), 0.0);
    for (int r = 0; r < layer.out; ++r) {
        const double* wrow = layer.weights + static_cast<std::size_t>(r) * layer.in;
        double acc = layer.bias[r];
        for (int c = 0; c < layer.in; ++c) {
            acc += wrow[c] * in[static_cast<std::size_t>(c)];
        }
        out[static_cast<std::size_t>(r)] = acc;
    }
}

void check_params(const ModelSpec& spec, const ParamVector& params) {
    int expected = param_count(spec);
    if (static_cast<int>(params.size()) != expected) {
        fail(ErrorKind::invalid_argument,
             "model parameters have length " + std::to_string(params.size()) +
                 ", spec requires " + std::to_string(expected));
    }
}

void check_batch(const ModelSpec& spec, const Batch& batch) {
    if (batch.size() == 0) {
        fail(ErrorKind::invalid_argument, "batch is empty");
    }
    if (batch.input_dim != spec.input_dim) {
        fail(ErrorKind::invalid_argument,
             "batch input_dim " + std::to_string(batch.input_dim) + " does not match model input_dim " +
                 std::to_string(spec.input_dim));
    }
    if (batch.inputs.size() != batch.size() * static_cast<std::size_t>(batch.input_dim)) {
        fail(ErrorKind::invalid_argument, "batch inputs/labels size mismatch");
    }
    for (int label : batch.labels) {
        if (label < 0 || label >= spec.num_classes) {
            fail(ErrorKind::invalid_argument,
                 "batch label " + std::to_string(label) + " outside [0, " +
                     std::to_string(spec.num_classes) + ")");
        }
    }
}

}  // namespace

std::vector<int> ModelSpec::layer_sizes() const {
    std::vector<int> sizes;
    sizes.push_back(input_dim);
    if (kind == ModelKind::mlp) {
        sizes.insert(sizes.end(), hidden_dims.begin(), hidden_dims.end());
    }
    sizes.push_back(num_classes);
    return sizes;
}

void validate_model_spec(const ModelSpec& spec) {
    if (spec.input_dim <= 0) fail(ErrorKind::config, "model input_dim must be positive");
    if (spec.num_classes <= 1) fail(ErrorKind::config, "model num_classes must be at least 2");
    if (spec.kind == ModelKind::softmax_regression && !spec.hidden_dims.empty()) {
        fail(ErrorKind::config, "softmax_regression takes no hidden_dims");
    }
    for (int h : spec.hidden_dims) {
        if (h <= 0) fail(ErrorKind::config, "hidden layer sizes must be positive");
    }
    if (spec.kind == ModelKind::mlp && spec.hidden_dims.empty()) {
        fail(ErrorKind::config, "mlp requires at least one hidden layer");
    }
}

int param_count(const ModelSpec& spec) {
    std::vector<int> sizes = spec.layer_sizes();
    int total = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        total += sizes[l] * sizes[l + 1] + sizes[l + 1];
    }
    return total;
}

Batch gather_batch(const Batch& all, const std::vector<std::uint32_t>& indices) {
    Batch out;
    out.input_dim = all.input_dim;
    out.inputs.reserve(indices.size() * static_cast<std::size_t>(all.input_dim));
    out.labels.reserve(indices.size());
    for (std::uint32_t idx : indices) {
        if (idx >= all.size()) {
            fail(ErrorKind::invalid_argument, "gather index " + std::to_string(idx) + " out of range");
        }
        const double* row = all.row(idx);
        out.inputs.insert(out.inputs.end(), row, row + all.input_dim);
        out.labels.push_back(all.labels[idx]);
    }
    return out;
}

std::vector<double> forward_probs(const ModelSpec& spec, const ParamVector& params, const double* input) {
    check_params(spec, params);
    std::vector<LayerView> layers = layer_views(spec, params);
    std::vector<double> activation(input, input + spec.input_dim);
    std::vector<double> next;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        affine_forward(layers[l], activation, next);
        check_finite_layer(next, static_cast<int>(l), "forward pass");
        if (l + 1 < layers.size()) {
            for (double& v : next) v = std::max(0.0, v);  // relu
        }
        activation.swap(next);
    }
    softmax_inplace(activation);
    return activation;
}

double loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    check_params(spec, params);
    check_batch(spec, batch);
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::vector<double> probs = forward_probs(spec, params, batch.row(i));
        double p = std::max(probs[static_cast<std::size_t>(batch.labels[i])], kProbFloor);
        total += -std::log(p);
    }
    return total / static_cast<double>(batch.size());
}

double loss_and_gradient(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                         ParamVector& grad) {
    check_params(spec, params);
    check_batch(spec, batch);
    std::vector<LayerView> layers = layer_views(spec, params);
    grad.assign(params.size(), 0.0);

    // Gradient views share the parameter layout.
    std::vector<double*> gw(layers.size());
    std::vector<double*> gb(layers.size());
    {
        double* cursor = grad.data();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            gw[l] = cursor;
            cursor += static_cast<std::size_t>(layers[l].in) * layers[l].out;
            gb[l] = cursor;
            cursor += layers[l].out;
        }
    }

    double total_loss = 0.0;
    double inv_batch = 1.0 / static_cast<double>(batch.size());
    std::vector<std::vector<double>> activations(layers.size() + 1);
    std::vector<std::vector<double>> pre_acts(layers.size());

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double* x = batch.row(i);
        activations[0].assign(x, x + spec.input_dim);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            affine_forward(layers[l], activations[l], pre_acts[l]);
            check_finite_layer(pre_acts[l], static_cast<int>(l), "forward pass");
            activations[l + 1] = pre_acts[l];
            if (l + 1 < layers.size()) {
                for (double& v : activations[l + 1]) v = std::max(0.0, v);
            }
        }

        std::vector<double> probs = activations.back();
        softmax_inplace(probs);
        int label = batch.labels[i];
        total_loss += -std::log(std::max(probs[static_cast<std::size_t>(label)], kProbFloor));

        // delta starts as dLoss/dlogits = (p - onehot) / B.
        std::vector<double> delta = probs;
        delta[static_cast<std::size_t>(label)] -= 1.0;
        for (double& v : delta) v *= inv_batch;

        for (std::size_t l = layers.size(); l-- > 0;) {
            const LayerView& layer = layers[l];
            const std::vector<double>& in_act = activations[l];
            for (int r = 0; r < layer.out; ++r) {
                double d = delta[static_cast<std::size_t>(r)];
                if (d == 0.0) continue;
                double* grow = gw[l] + static_cast<std::size_t>(r) * layer.in;
                for (int c = 0; c < layer.in; ++c) {
                    grow[c] += d * in_act[static_cast<std::size_t>(c)];
                }
                gb[l][r] += d;
            }
            if (l == 0) break;
            std::vector<double> prev_delta(static_cast<std::size_t>(layer.in), 0.0);
            for (int r = 0; r < layer.out; ++r) {
                double d = delta[static_cast<std::size_t>(r)];
                if (d == 0.0) continue;
                const double* wrow = layer.weights + static_cast<std::size_t>(r) * layer.in;
                for (int c = 0; c < layer.in; ++c) {
                    prev_delta[static_cast<std::size_t>(c)] += d * wrow[c];
                }
            }
            // relu mask from the previous layer's pre-activation.
            for (int c = 0; c < layer.in; ++c) {
                if (pre_acts[l - 1][static_cast<std::size_t>(c)] <= 0.0) {
                    prev_delta[static_cast<std::size_t>(c)] = 0.0;
                }
            }
            delta.swap(prev_delta);
        }
    }
    check_finite_layer(grad, -1, "backward pass");
    return total_loss * inv_batch;
}

ParamVector gradient(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    ParamVector grad;
    loss_and_gradient(spec, params, batch, grad);
    return grad;
}

ParamVector init_params(const ModelSpec& spec, RngStream& rng) {
    validate_model_spec(spec);
    std::vector<int> sizes = spec.layer_sizes();
    ParamVector params;
    params.reserve(static_cast<std::size_t>(param_count(spec)));
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        double limit = std::sqrt(6.0 / (sizes[l] + sizes[l + 1]));
        for (int k = 0; k < sizes[l] * sizes[l + 1]; ++k) {
            params.push_back(rng.uniform(-limit, limit));
        }
        for (int k = 0; k < sizes[l + 1]; ++k) {
            params.push_back(0.0);
        }
    }
    return params;
}

SmoothnessEstimate estimate_bounds_fn(const GradientFn& grad_fn,
                                      const std::vector<ParamVector>& anchors,
                                      int trials, double radius, RngStream& rng) {
    if (trials < 1) fail(ErrorKind::invalid_argument, "estimate_bounds: trials must be >= 1");
    if (!(radius > 0.0)) fail(ErrorKind::invalid_argument, "estimate_bounds: radius must be positive");
    if (anchors.empty()) fail(ErrorKind::invalid_argument, "estimate_bounds: no anchor points");

    SmoothnessEstimate est;
    est.trials = trials;
    int usable_pairs = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const ParamVector& anchor = anchors[static_cast<std::size_t>(trial) % anchors.size()];
        ParamVector direction(anchor.size());
        for (double& v : direction) v = rng.normal();
        double norm = l2norm(direction);
        if (norm < 1e-300) continue;  // degenerate probe, skipped
        for (double& v : direction) v *= radius / norm;
        ParamVector probe = axpy(1.0, direction, anchor);

        ParamVector g_anchor = grad_fn(anchor);
        ParamVector g_probe = grad_fn(probe);
        est.d_bound = std::max(est.d_bound, l2norm(g_anchor));
        est.d_bound = std::max(est.d_bound, l2norm(g_probe));

        ParamVector diff = axpy(-1.0, g_probe, g_anchor);
        est.lipschitz = std::max(est.lipschitz, l2norm(diff) / radius);
        ++usable_pairs;
    }
    if (usable_pairs == 0) {
        fail(ErrorKind::numeric, "estimate_bounds: every probe pair was degenerate");
    }
    return est;
}

SmoothnessEstimate estimate_bounds(const ModelSpec& spec, const Batch& dataset,
                                   const std::vector<ParamVector>& anchors,
                                   int trials, double radius, RngStream& rng) {
    GradientFn grad_fn = [&](const ParamVector& w) { return gradient(spec, w, dataset); };
    return estimate_bounds_fn(grad_fn, anchors, trials, radius, rng);
}

}  // namespace fedent
