#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/numerics.hpp"

namespace fedent {

enum class ModelKind { softmax_regression, mlp };

// Architecture description. Parameter count is a pure function of the spec;
// the flat layout is, per layer, the row-major weight matrix followed by the
// bias vector.
struct ModelSpec {
    ModelKind kind = ModelKind::softmax_regression;
    int input_dim = 0;
    std::vector<int> hidden_dims;  // empty for softmax_regression
    int num_classes = 0;

    // Layer sizes including input and output, e.g. {784, 64, 10}.
    std::vector<int> layer_sizes() const;
};

void validate_model_spec(const ModelSpec& spec);
int param_count(const ModelSpec& spec);

// Mini-batch with flat row-major inputs.
struct Batch {
    int input_dim = 0;
    std::vector<double> inputs;  // size() * input_dim
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    const double* row(std::size_t i) const { return inputs.data() + i * static_cast<std::size_t>(input_dim); }
};

Batch gather_batch(const Batch& all, const std::vector<std::uint32_t>& indices);

// Class probabilities for a single input row (softmax over the final logits).
std::vector<double> forward_probs(const ModelSpec& spec, const ParamVector& params, const double* input);

// Mean cross-entropy over the batch. Probabilities are floored at 1e-12
// before the log so confident mistakes stay finite.
double loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// Gradient of the mean cross-entropy via manual backpropagation.
ParamVector gradient(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// Single fused pass; returns the loss and fills grad.
double loss_and_gradient(const ModelSpec& spec, const ParamVector& params, const Batch& batch, ParamVector& grad);

// Glorot-uniform weights, zero biases.
ParamVector init_params(const ModelSpec& spec, RngStream& rng);

struct SmoothnessEstimate {
    double d_bound = 0.0;    // max observed gradient norm
    double lipschitz = 0.0;  // max observed gradient difference ratio
    int trials = 0;
};

using GradientFn = std::function<ParamVector(const ParamVector&)>;

// Empirical D / L probing around a set of anchor points (typically the
// parameters visited by a run). Each trial perturbs one anchor by
// radius * unit-random and measures the gradient there and the secant
// Lipschitz ratio against the anchor. Degenerate probe pairs are skipped.
SmoothnessEstimate estimate_bounds_fn(const GradientFn& grad_fn,
                                      const std::vector<ParamVector>& anchors,
                                      int trials, double radius, RngStream& rng);

// Same probing against the model's full-dataset loss gradient.
SmoothnessEstimate estimate_bounds(const ModelSpec& spec, const Batch& dataset,
                                   const std::vector<ParamVector>& anchors,
                                   int trials, double radius, RngStream& rng);

}  // namespace fedent
