#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttguide/io.hpp"
#include "ttguide/ntk.hpp"

namespace ttguide {

struct AdapterSpec {
    std::string type = "tensorguide";  ///< lora | ttlora | tensorguide
    std::string label;                 ///< defaults to type
    std::size_t r = 4;                 ///< LoRA rank
    std::size_t M = 0;                 ///< TensorGuide hidden width
    TTFormat tt;                       ///< TensorGuide generator, or the TT-LoRA W1 factor
    TTFormat tt2;                      ///< TT-LoRA W2 factor
    Activation activation = Activation::ReLU;
    HeadMode head_mode = HeadMode::Additive;
    bool resample_per_batch = false;

    std::string name() const { return label.empty() ? type : label; }
};

struct BackboneSpec {
    std::size_t P = kQdPixels, D = 64, Q = 2;
    std::uint64_t seed = 0;
};

struct TaskSpec {
    std::string name = "quantum-dot";  ///< quantum-dot | wide-output
    std::size_t n = 1000;
    double noise_level = 0.3;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
    std::size_t D_raw = 32;  ///< wide-output input width
    std::string data_file;   ///< read instead of generating when set
};

struct NtkSpec {
    std::size_t samples = 16;
    std::size_t output_index = 0;
};

struct ExperimentConfig {
    std::string preset;
    std::string note;
    bool enabled = true;
    std::vector<AdapterSpec> adapters;
    BackboneSpec backbone;
    TaskSpec task;
    TrainConfig train;
    NtkSpec ntk;
    BoundInputs bounds;  ///< placeholder constants 1.0 unless supplied
    std::string out_dir = "out";

    /// Throws ConfigError naming the first violated requirement.
    void validate() const;
};

std::vector<std::string> preset_names();
/// Throws ConfigError for unknown names. Disabled presets come back with enabled = false.
ExperimentConfig preset(const std::string& name);

json to_json(const AdapterSpec& a);
json to_json(const ExperimentConfig& c);
json to_json(const BoundInputs& b);
/// Keys present in `j` override `base`; "preset" (if given) replaces base first. Unknown keys are errors.
ExperimentConfig config_from_json(const json& j, ExperimentConfig base = {});
BoundInputs bounds_from_json(const json& j, BoundInputs base = {});

Adapter build_adapter(const AdapterSpec& spec, const BackboneSpec& b, std::uint64_t seed);
FrozenBackbone build_backbone(const BackboneSpec& b);
Dataset generate_task(const TaskSpec& t, std::size_t Q);

struct PreparedData {
    FrozenBackbone backbone;
    Dataset train;
    Dataset test;
};

PreparedData prepare(const ExperimentConfig& c);

struct RunOutput {
    TrainReport report;
    Adapter adapter;
};

/// Adapter initialization and shuffling both use `seed`; data and backbone keep their own seeds.
RunOutput run_one(const ExperimentConfig& c, const AdapterSpec& spec, const PreparedData& data, std::uint64_t seed);

struct CompareRow {
    std::string label;
    std::string kind;
    std::size_t param_count = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<double> test_acc, test_loss, exp_loss;

    double mean_acc() const;
    double mean_loss() const;
    double mean_exp_loss() const;
};

std::vector<CompareRow> run_compare(const ExperimentConfig& c, const std::vector<std::uint64_t>& seeds);
json compare_json(const std::vector<CompareRow>& rows);

json params_report(const ExperimentConfig& c);
json bounds_report(const BoundInputs& b, double M);
/// Spectral table over the config's adapters on the first ntk.samples training inputs,
/// plus bound evaluations. Throws CapError when the Jacobian would exceed the cap.
json ntk_report(const ExperimentConfig& c);

} // namespace ttguide
