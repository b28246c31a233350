#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ttguide/tensor.hpp"
#include "ttguide/tt.hpp"

namespace ttguide {

/// Frozen pretrained stand-in: a random projection from raw inputs to features
/// followed by a linear head. Never touched by training.
struct FrozenBackbone {
    DenseTensor W0;           ///< [D x Q]
    DenseTensor feature_map;  ///< [P x D]

    std::size_t P() const { return feature_map.rows(); }
    std::size_t D() const { return feature_map.cols(); }
    std::size_t Q() const { return W0.cols(); }

    /// x = x_raw * feature_map, [batch x D].
    RowMatrixXd features(const RowMatrixXd& x_raw) const;
};

enum class Activation { ReLU, Sigmoid, Identity };
enum class HeadMode { Additive, ReplaceHead };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);
std::string to_string(HeadMode m);
HeadMode head_mode_from_string(const std::string& s);

/// Delta(x) = (x W1) W2.
struct LoRAAdapter {
    DenseTensor W1;  ///< [D x r]
    DenseTensor W2;  ///< [r x Q]

    std::size_t rank() const { return W1.cols(); }
};

/// Delta(x) = (x mat(tt1)) mat(tt2), with mat(tt1) [D x r] and mat(tt2) [r x Q].
struct TTLoRAAdapter {
    TTMatrix<double> tt1;
    TTMatrix<double> tt2;

    std::size_t rank() const { return tt1.format().out_size(); }
};

/// One TT-matrix maps the latent z to [vec(W1_hat) | vec(W2_hat)];
/// Delta(x) = sigma(x W1_hat) W2_hat with W1_hat [D x M], W2_hat [M x Q].
struct TensorGuideAdapter {
    TTMatrix<double> tt;
    DenseTensor z;  ///< latent, length prod(in_dims); fixed unless resampled during training
    std::size_t D = 0, Q = 0, M = 0;
    Activation activation = Activation::ReLU;
    HeadMode head_mode = HeadMode::Additive;
    bool resample_per_batch = false;
};

using Adapter = std::variant<LoRAAdapter, TTLoRAAdapter, TensorGuideAdapter>;

LoRAAdapter make_lora(std::size_t D, std::size_t Q, std::size_t r, std::uint64_t seed);

/// W1 cores Xavier; W2 cores Xavier except the last, which starts at zero so
/// Delta = 0 at initialization (same starting point as LoRA).
TTLoRAAdapter make_ttlora(std::size_t D, std::size_t Q, const TTFormat& f1, const TTFormat& f2, std::uint64_t seed);

/// Throws ShapeError carrying the violated identity when the format cannot
/// generate D*M + M*Q weights.
TensorGuideAdapter make_tensor_guide(std::size_t D, std::size_t Q, std::size_t M, const TTFormat& f,
                                     std::uint64_t seed, Activation act = Activation::ReLU,
                                     HeadMode mode = HeadMode::Additive, bool resample_per_batch = false);

/// Checks the adapter against (D, Q); throws ShapeError.
void validate(const Adapter& a, std::size_t D, std::size_t Q);

std::string kind(const Adapter& a);

struct GeneratedWeights {
    RowMatrixXd W1;  ///< [D x M]
    RowMatrixXd W2;  ///< [M x Q]
};

/// y = tt_apply(tt, z); W1_hat = y[0, D*M), W2_hat = y[D*M, D*M + M*Q), both row-major.
GeneratedWeights generate_weights(const TensorGuideAdapter& a);
GeneratedWeights generate_weights(const TensorGuideAdapter& a, const DenseTensor& z);

double apply_activation(Activation a, double v);
double activation_derivative(Activation a, double pre);

/// logits = x W0 + Delta(x) for raw inputs [batch x P].
DenseTensor forward(const Adapter& a, const FrozenBackbone& b, const DenseTensor& x_raw);

/// Same as forward() but starting from precomputed features [batch x D].
RowMatrixXd forward_features(const Adapter& a, const FrozenBackbone& b, const RowMatrixXd& x);

/// Trainable scalars only; the backbone never counts.
std::size_t param_count(const Adapter& a);

/// Symbolic complexity class of the trainable parameters.
std::string complexity_class(const Adapter& a);

/// Parameter tensors in canonical order: LoRA {W1, W2}; TT-LoRA {tt1.core0.., tt2.core0..};
/// TensorGuide {core0..}. Flattened Jacobians follow this order.
std::vector<std::string> param_names(const Adapter& a);
std::vector<const DenseTensor*> param_refs(const Adapter& a);
std::vector<DenseTensor*> param_refs(Adapter& a);

} // namespace ttguide
