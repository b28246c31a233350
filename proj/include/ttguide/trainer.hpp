#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ttguide/adapters.hpp"
#include "ttguide/tasks.hpp"

namespace ttguide {

enum class Optimizer { SGD, Adam };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

struct TrainConfig {
    Optimizer optimizer = Optimizer::Adam;
    double learning_rate = 3e-3;
    std::size_t epochs = 15;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    bool shuffle = true;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    /// learning_rate >= 0 (0 allowed for null-update checks), epochs and batch_size >= 1.
    void validate() const;
};

/// One gradient tensor per trainable parameter, in param_names() order.
struct GradientSet {
    std::vector<std::string> names;
    std::vector<DenseTensor> grads;

    std::size_t size() const { return grads.size(); }
    const DenseTensor& at(const std::string& name) const;
    /// All gradients concatenated in canonical parameter order.
    std::vector<double> flatten() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;  ///< 1-based
    double train_loss = 0;
    double train_acc = 0;
    double test_loss = 0;
    double test_acc = 0;
    double exp_loss = 0;  ///< exp(test_loss), perplexity-style
};

struct TrainReport {
    std::string adapter_kind;
    std::vector<EpochMetrics> epochs;
    std::size_t param_count = 0;
    std::uint64_t seed = 0;
    double wall_seconds = 0;  ///< informational; never serialized
};

/// Mean over rows of -log softmax(logits)[label], max-subtracted.
double cross_entropy(const RowMatrixXd& logits, std::span<const std::uint32_t> labels);
double cross_entropy(const DenseTensor& logits, std::span<const std::uint32_t> labels);

struct BackwardResult {
    double loss = 0;
    RowMatrixXd logits;
    GradientSet grads;
};

/// Exact reverse-mode gradients of cross_entropy for a batch of raw inputs.
BackwardResult backward(const Adapter& a, const FrozenBackbone& b, const DenseTensor& batch_raw,
                        std::span<const std::uint32_t> labels);

/// Same, from precomputed features. `latent` overrides the TensorGuide z when non-null.
BackwardResult backward_features(const Adapter& a, const FrozenBackbone& b, const RowMatrixXd& x,
                                 std::span<const std::uint32_t> labels, const DenseTensor* latent = nullptr);

/// Pulls an arbitrary upstream dL/dlogits ([batch x Q]) back to every trainable parameter.
GradientSet backward_upstream(const Adapter& a, const FrozenBackbone& b, const RowMatrixXd& x,
                              const RowMatrixXd& dlogits, const DenseTensor* latent = nullptr);

/// dL/d[vec(W1_hat) | vec(W2_hat)] as a [1 x (D*M + M*Q)] row, given dL/dlogits.
RowMatrixXd generated_weight_gradient(const TensorGuideAdapter& g, const RowMatrixXd& x, const RowMatrixXd& dlogits,
                                      const DenseTensor* latent = nullptr);

struct OptimizerState {
    std::size_t steps = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

/// SGD: p -= lr g. Adam: bias-corrected moments with (beta1, beta2, eps) from the config.
void step(std::span<DenseTensor* const> params, const GradientSet& grads, OptimizerState& state,
          const TrainConfig& config);

struct Evaluation {
    double loss = 0;
    double accuracy = 0;
};

Evaluation evaluate(const Adapter& a, const FrozenBackbone& b, const Dataset& d);

/// Mini-batch training with the backbone frozen. Deterministic given config.seed.
/// Throws NumericError when a loss or parameter becomes non-finite.
TrainReport train(Adapter& a, const FrozenBackbone& b, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& config);

/// Central differences of cross_entropy over every trainable scalar; returns
/// max |analytic - numeric| / max(|numeric|, 1e-8).
double finite_diff_check(const Adapter& a, const FrozenBackbone& b, const Dataset& sample, double eps = 1e-5);

} // namespace ttguide
