#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ttguide/adapters.hpp"
#include "ttguide/tensor.hpp"

namespace ttguide {

/// Labeled samples S = {(x_n, y_n)}: inputs [N x P], labels in [0, Q).
struct Dataset {
    DenseTensor inputs;
    std::vector<std::uint32_t> labels;
    std::size_t num_classes = 0;

    // metadata
    std::string task;
    std::uint64_t seed = 0;
    double noise_level = 0.0;

    std::size_t size() const { return labels.size(); }
    std::size_t input_width() const { return inputs.cols(); }
    std::vector<std::size_t> class_counts() const;

    /// Checks labels < num_classes and inputs/labels row agreement; throws ShapeError.
    void validate() const;

    /// Rows `idx` in the given order, metadata copied.
    Dataset subset(const std::vector<std::size_t>& idx) const;
};

inline constexpr std::size_t kQdSide = 50;
inline constexpr std::size_t kQdPixels = kQdSide * kQdSide;

/// Procedural stand-in for single (label 0) vs double (label 1) quantum-dot charge
/// stability diagrams, 50x50 pixels in [0, 1].
///
/// Label 0: one family of parallel anti-diagonal lines, spacing 6-12 px, random phase.
/// Label 1: two families (steep and shallow) forming a honeycomb lattice; each crossing
/// is replaced by a short avoided-crossing gap bridged by a connecting segment.
/// Lines are drawn at 1.0 on 0.0 with a 1-px linear feather (value 1.5 - d for distance
/// d in (0.5, 1.5) px, 1.0 inside d <= 0.5). Gaussian pixel noise of std noise_level
/// is added, then values are clamped to [0, 1]. Classes alternate 0,1,0,1,...
Dataset gen_quantum_dot(std::size_t n, double noise_level, std::uint64_t seed);

/// Q Gaussian prototypes in R^{D_raw}; sample n is prototype[n mod Q] + noise_level * N(0, I).
Dataset gen_wide_output(std::size_t n, std::size_t D_raw, std::size_t Q, double noise_level, std::uint64_t seed);

/// feature_map ~ N(0, 1/P), W0 ~ N(0, 1/D), independent seeded streams. Columns of
/// feature_map therefore have norm close to 1.
FrozenBackbone make_backbone(std::size_t P, std::size_t D, std::size_t Q, std::uint64_t seed);

/// Stratified seeded split: each class is shuffled and its first round(train_fraction * count)
/// members go to train; both halves keep the original relative order of samples.
std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction, std::uint64_t seed);

} // namespace ttguide
