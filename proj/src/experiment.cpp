#include "ttguide/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>

namespace ttguide {

namespace {

AdapterSpec lora(std::size_t r, std::string label = {}) {
    AdapterSpec a;
    a.type = "lora";
    a.r = r;
    a.label = std::move(label);
    return a;
}

AdapterSpec ttlora(TTFormat f1, TTFormat f2, std::string label = {}) {
    AdapterSpec a;
    a.type = "ttlora";
    a.tt = std::move(f1);
    a.tt2 = std::move(f2);
    a.label = std::move(label);
    return a;
}

AdapterSpec guide(std::size_t M, TTFormat f, std::string label = {}) {
    AdapterSpec a;
    a.type = "tensorguide";
    a.M = M;
    a.tt = std::move(f);
    a.label = std::move(label);
    return a;
}

ExperimentConfig qd_base() {
    ExperimentConfig c;
    c.backbone = BackboneSpec{kQdPixels, 64, 2, 0};
    c.task = TaskSpec{};
    c.task.name = "quantum-dot";
    c.task.n = 1000;
    c.task.noise_level = 0.3;
    c.task.train_fraction = 0.8;
    return c;
}

ExperimentConfig wide_base() {
    ExperimentConfig c;
    c.backbone = BackboneSpec{32, 32, 200, 0};
    c.task.name = "wide-output";
    c.task.n = 2000;
    c.task.D_raw = 32;
    c.task.noise_level = 0.5;
    c.task.train_fraction = 0.8;
    return c;
}

// Matched budgets on the quantum-dot task: 264 / 268 / 270 trainable parameters.
AdapterSpec qd_lora() { return lora(4); }
AdapterSpec qd_ttlora() { return ttlora({{8, 8}, {2, 2}, {1, 8, 1}}, {{2, 2}, {2, 1}, {1, 2, 1}}); }
AdapterSpec qd_guide() { return guide(16, {{2, 2, 2}, {16, 6, 11}, {1, 3, 3, 1}}); }

// Width sweep: only the trailing rank-1 core grows.
AdapterSpec width_guide(std::size_t M) {
    return guide(M, {{2, 2, 2, 1}, {8, 12, 11, M / 16}, {1, 2, 3, 1, 1}}, "tensorguide-m" + std::to_string(M));
}

AdapterSpec wide_lora() { return lora(1, "lora-r1"); }
// The wide regime swaps the frozen head for the generated MLP instead of adding to it.
AdapterSpec wide_guide() {
    AdapterSpec a = guide(8, {{2, 2, 2}, {8, 8, 29}, {1, 2, 1, 1}});
    a.head_mode = HeadMode::ReplaceHead;
    return a;
}

TTFormat table2(std::size_t M) {
    if (M == 1024) return {{1, 2, 2, 1}, {16, 8, 257, 16}, {1, 2, 2, 1, 1}};
    if (M == 2048) return {{1, 2, 2, 1}, {16, 8, 257, 32}, {1, 2, 2, 1, 1}};
    return {{1, 2, 2, 1}, {16, 16, 257, 32}, {1, 2, 2, 1, 1}};
}

TTFormat table3(std::vector<std::size_t> ranks) { return {{2, 2, 2, 2, 2}, {1, 8, 13, 25, 157}, std::move(ranks)}; }

ExperimentConfig table2_base() {
    ExperimentConfig c = qd_base();
    c.backbone.D = 512;
    c.note = "parameter accounting preset (D=512, Q=2)";
    return c;
}

ExperimentConfig table3_base() {
    ExperimentConfig c;
    c.backbone = BackboneSpec{768, 768, 50257, 0};
    c.task.name = "wide-output";
    c.task.D_raw = 768;
    c.task.n = 50257;
    c.note = "parameter accounting preset (D=768, Q=50257); the out-dims product fixes the hidden width at 8";
    return c;
}

using Factory = std::function<ExperimentConfig()>;

const std::vector<std::pair<std::string, Factory>>& registry() {
    static const std::vector<std::pair<std::string, Factory>> r = {
        {"small",
         [] {
             ExperimentConfig c;
             c.backbone = BackboneSpec{8, 6, 3, 0};
             c.task.name = "wide-output";
             c.task.n = 60;
             c.task.D_raw = 8;
             c.task.noise_level = 0.5;
             c.train.epochs = 5;
             c.ntk.samples = 8;
             c.adapters = {lora(2), ttlora({{2, 3}, {1, 2}, {1, 2, 1}}, {{1, 2}, {3, 1}, {1, 2, 1}}),
                           guide(4, {{2, 2}, {6, 6}, {1, 3, 1}})};
             return c;
         }},
        {"qd",
         [] {
             ExperimentConfig c = qd_base();
             c.task.n = 2000;
             c.task.train_fraction = 0.9;
             c.adapters = {qd_lora(), qd_ttlora(), qd_guide()};
             return c;
         }},
        {"qd-compare",
         [] {
             ExperimentConfig c = qd_base();
             c.adapters = {qd_lora(), qd_ttlora(), qd_guide()};
             return c;
         }},
        {"qd-lora",
         [] {
             ExperimentConfig c = qd_base();
             c.adapters = {qd_lora()};
             return c;
         }},
        {"qd-ttlora",
         [] {
             ExperimentConfig c = qd_base();
             c.adapters = {qd_ttlora()};
             return c;
         }},
        {"qd-tensorguide",
         [] {
             ExperimentConfig c = qd_base();
             c.adapters = {qd_guide()};
             return c;
         }},
        {"qd-width",
         [] {
             ExperimentConfig c = qd_base();
             c.adapters = {width_guide(16), width_guide(64)};
             return c;
         }},
        {"wide-compare",
         [] {
             ExperimentConfig c = wide_base();
             c.adapters = {wide_lora(), wide_guide()};
             return c;
         }},
        {"wide-lora",
         [] {
             ExperimentConfig c = wide_base();
             c.adapters = {wide_lora()};
             return c;
         }},
        {"wide-tensorguide",
         [] {
             ExperimentConfig c = wide_base();
             c.adapters = {wide_guide()};
             return c;
         }},
        {"table2",
         [] {
             ExperimentConfig c = table2_base();
             c.adapters = {guide(1024, table2(1024), "tensorguide-m1024"), guide(2048, table2(2048), "tensorguide-m2048"),
                           guide(4096, table2(4096), "tensorguide-m4096")};
             return c;
         }},
        {"table2-m1024",
         [] {
             ExperimentConfig c = table2_base();
             c.adapters = {guide(1024, table2(1024))};
             return c;
         }},
        {"table2-m2048",
         [] {
             ExperimentConfig c = table2_base();
             c.adapters = {guide(2048, table2(2048))};
             return c;
         }},
        {"table2-m4096",
         [] {
             ExperimentConfig c = table2_base();
             c.adapters = {guide(4096, table2(4096))};
             return c;
         }},
        {"table3",
         [] {
             ExperimentConfig c = table3_base();
             c.adapters = {lora(1, "lora"), guide(8, table3({1, 8, 16, 16, 8, 1}), "tensorguide-row1"),
                           guide(8, table3({1, 12, 16, 16, 12, 1}), "tensorguide-row2"),
                           guide(8, table3({1, 16, 16, 16, 16, 1}), "tensorguide-row3")};
             return c;
         }},
        {"table3-lora",
         [] {
             ExperimentConfig c = table3_base();
             c.adapters = {lora(1)};
             return c;
         }},
        {"table3-m1",
         [] {
             ExperimentConfig c = table3_base();
             c.adapters = {guide(8, table3({1, 8, 16, 16, 8, 1}))};
             return c;
         }},
        {"table3-m2",
         [] {
             ExperimentConfig c = table3_base();
             c.adapters = {guide(8, table3({1, 12, 16, 16, 12, 1}))};
             return c;
         }},
        {"table3-m3",
         [] {
             ExperimentConfig c = table3_base();
             c.adapters = {guide(8, table3({1, 16, 16, 16, 16, 1}))};
             return c;
         }},
        {"table3-m4",
         [] {
             ExperimentConfig c = table3_base();
             c.adapters = {guide(8, table3({2, 16, 16, 16, 16, 2}))};
             c.enabled = false;
             c.note = "disabled: boundary ranks [2, ..., 2] violate r0 = rK = 1";
             return c;
         }},
        {"table4",
         [] {
             ExperimentConfig c = table2_base();
             c.adapters = {guide(1024, {{2, 2, 2, 2, 2}, {16, 8, 257, 16}, {1, 2, 2, 1, 1}})};
             c.enabled = false;
             c.note = "disabled: 5 input dims against 4 output dims cannot pair into TT-matrix cores";
             return c;
         }},
    };
    return r;
}

template <typename T>
T get_field(const json& j, const char* key, const char* where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string(where) + "." + key + ": " + e.what());
    }
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(std::string("unknown key '") + it.key() + "' in " + where);
    }
}

std::size_t get_size(const json& j, const char* key, const char* where) {
    const json& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError(std::string(where) + "." + key + " must be a nonnegative integer");
    return v.get<std::size_t>();
}

double get_real(const json& j, const char* key, const char* where) {
    const json& v = j.at(key);
    if (!v.is_number()) throw ConfigError(std::string(where) + "." + key + " must be a number");
    return v.get<double>();
}

AdapterSpec adapter_spec_from_json(const json& j) {
    reject_unknown(j, {"type", "label", "r", "M", "tt", "tt2", "activation", "head_mode", "resample_per_batch"},
                   "adapter");
    AdapterSpec a;
    a.type = get_field<std::string>(j, "type", "adapter");
    if (j.contains("label")) a.label = get_field<std::string>(j, "label", "adapter");
    if (j.contains("r")) a.r = get_size(j, "r", "adapter");
    if (j.contains("M")) a.M = get_size(j, "M", "adapter");
    if (j.contains("tt")) a.tt = format_from_json(j.at("tt"));
    if (j.contains("tt2")) a.tt2 = format_from_json(j.at("tt2"));
    if (j.contains("activation")) a.activation = activation_from_string(get_field<std::string>(j, "activation", "adapter"));
    if (j.contains("head_mode")) a.head_mode = head_mode_from_string(get_field<std::string>(j, "head_mode", "adapter"));
    if (j.contains("resample_per_batch")) a.resample_per_batch = get_field<bool>(j, "resample_per_batch", "adapter");
    return a;
}

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

void ExperimentConfig::validate() const {
    if (!enabled) throw ConfigError("preset '" + preset + "' is " + note);
    if (adapters.empty()) throw ConfigError("config lists no adapters");
    const std::size_t D = backbone.D, Q = backbone.Q;
    if (backbone.P == 0 || D == 0 || Q == 0) throw ConfigError("backbone P, D, Q must be positive");

    std::set<std::string> names;
    for (const AdapterSpec& a : adapters) {
        if (!names.insert(a.name()).second) throw ConfigError("duplicate adapter label '" + a.name() + "'");
        if (a.type == "lora") {
            if (a.r == 0) throw ConfigError(a.name() + ": LoRA rank must be >= 1");
        } else if (a.type == "ttlora") {
            try {
                a.tt.validate();
                a.tt2.validate();
            } catch (const ShapeError& e) {
                throw ConfigError(a.name() + ": " + e.what());
            }
            if (a.tt.in_size() != D || a.tt2.out_size() != Q || a.tt.out_size() != a.tt2.in_size())
                throw ConfigError(a.name() + ": TT-LoRA factors give " + std::to_string(a.tt.in_size()) + " x " +
                                  std::to_string(a.tt.out_size()) + " and " + std::to_string(a.tt2.in_size()) + " x " +
                                  std::to_string(a.tt2.out_size()) + ", need D x r and r x Q with D=" +
                                  std::to_string(D) + ", Q=" + std::to_string(Q));
        } else if (a.type == "tensorguide") {
            try {
                a.tt.validate();
            } catch (const ShapeError& e) {
                throw ConfigError(a.name() + ": " + e.what());
            }
            const FormatCheck chk = validate_adapter_format(a.tt, D, Q, a.M, a.tt.in_size());
            if (!chk.ok) throw ConfigError(a.name() + ": TensorGuide format rejected: " + chk.violation);
        } else {
            throw ConfigError("unknown adapter type '" + a.type + "' (expected lora, ttlora or tensorguide)");
        }
    }

    if (!(task.noise_level >= 0) || !std::isfinite(task.noise_level))
        throw ConfigError("task.noise_level must be finite and >= 0");
    if (!(task.train_fraction > 0 && task.train_fraction < 1))
        throw ConfigError("task.train_fraction must lie strictly between 0 and 1");
    if (task.data_file.empty()) {
        if (task.name == "quantum-dot") {
            if (task.n == 0 || task.n % 2) throw ConfigError("task.n must be even and positive for quantum-dot");
            if (backbone.P != kQdPixels) throw ConfigError("quantum-dot images have P = 2500 pixels; backbone.P differs");
            if (Q != 2) throw ConfigError("quantum-dot has Q = 2 classes; backbone.Q differs");
        } else if (task.name == "wide-output") {
            if (task.n < Q) throw ConfigError("wide-output needs task.n >= Q");
            if (backbone.P != task.D_raw) throw ConfigError("wide-output inputs have width D_raw; backbone.P differs");
        } else {
            throw ConfigError("unknown task '" + task.name + "' (expected quantum-dot or wide-output)");
        }
    }
    train.validate();
    bounds.validate();
    if (ntk.samples == 0) throw ConfigError("ntk.samples must be >= 1");
    if (ntk.output_index >= Q) throw ConfigError("ntk.output_index must be < Q");
}

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const auto& [name, f] : registry()) out.push_back(name);
    return out;
}

ExperimentConfig preset(const std::string& name) {
    for (const auto& [n, f] : registry())
        if (n == name) {
            ExperimentConfig c = f();
            c.preset = name;
            return c;
        }
    std::string all;
    for (const auto& n : preset_names()) all += (all.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (available: " + all + ")");
}

json to_json(const AdapterSpec& a) {
    json j;
    j["type"] = a.type;
    j["label"] = a.name();
    if (a.type == "lora") j["r"] = a.r;
    if (a.type == "tensorguide") j["M"] = a.M;
    if (a.type != "lora") j["tt"] = format_to_json(a.tt);
    if (a.type == "ttlora") j["tt2"] = format_to_json(a.tt2);
    if (a.type == "tensorguide") {
        j["activation"] = to_string(a.activation);
        j["head_mode"] = to_string(a.head_mode);
        j["resample_per_batch"] = a.resample_per_batch;
    }
    return j;
}

json to_json(const BoundInputs& b) {
    return json{{"L_ce", b.L_ce},   {"C1", b.C1},        {"C2", b.C2},     {"L_sigma", b.L_sigma},
                {"eps_tt", b.eps_tt}, {"C0", b.C0},      {"lambda_min", b.lambda_min},
                {"t", b.t},           {"B", b.B},        {"L_ell", b.L_ell}, {"kappa", b.kappa},
                {"gamma", b.gamma},   {"N", b.N},        {"delta", b.delta}, {"empirical_risk", b.empirical_risk}};
}

json to_json(const ExperimentConfig& c) {
    json j;
    if (!c.preset.empty()) j["preset"] = c.preset;
    j["adapters"] = json::array();
    for (const auto& a : c.adapters) j["adapters"].push_back(to_json(a));
    j["backbone"] = {{"P", c.backbone.P}, {"D", c.backbone.D}, {"Q", c.backbone.Q}, {"seed", c.backbone.seed}};
    j["task"] = {{"name", c.task.name},
                 {"n", c.task.n},
                 {"noise_level", c.task.noise_level},
                 {"seed", c.task.seed},
                 {"train_fraction", c.task.train_fraction},
                 {"D_raw", c.task.D_raw}};
    if (!c.task.data_file.empty()) j["task"]["data_file"] = c.task.data_file;
    j["train"] = {{"optimizer", to_string(c.train.optimizer)},
                  {"lr", c.train.learning_rate},
                  {"epochs", c.train.epochs},
                  {"batch", c.train.batch_size},
                  {"seed", c.train.seed},
                  {"shuffle", c.train.shuffle}};
    j["ntk"] = {{"samples", c.ntk.samples}, {"output_index", c.ntk.output_index}};
    j["bounds"] = to_json(c.bounds);
    j["output"] = {{"dir", c.out_dir}};
    return j;
}

BoundInputs bounds_from_json(const json& j, BoundInputs b) {
    reject_unknown(j, {"L_ce", "C1", "C2", "L_sigma", "eps_tt", "C0", "lambda_min", "t", "B", "L_ell", "kappa", "gamma",
                       "N", "delta", "empirical_risk"},
                   "bounds");
    const std::pair<const char*, double BoundInputs::*> fields[] = {
        {"L_ce", &BoundInputs::L_ce},     {"C1", &BoundInputs::C1},         {"C2", &BoundInputs::C2},
        {"L_sigma", &BoundInputs::L_sigma}, {"eps_tt", &BoundInputs::eps_tt}, {"C0", &BoundInputs::C0},
        {"lambda_min", &BoundInputs::lambda_min}, {"t", &BoundInputs::t}, {"B", &BoundInputs::B},
        {"L_ell", &BoundInputs::L_ell},   {"kappa", &BoundInputs::kappa},   {"gamma", &BoundInputs::gamma},
        {"N", &BoundInputs::N},           {"delta", &BoundInputs::delta},   {"empirical_risk", &BoundInputs::empirical_risk}};
    for (const auto& [key, field] : fields)
        if (j.contains(key)) b.*field = get_real(j, key, "bounds");
    b.validate();
    return b;
}

ExperimentConfig config_from_json(const json& j, ExperimentConfig c) {
    reject_unknown(j, {"preset", "adapters", "backbone", "task", "train", "ntk", "bounds", "output"}, "config");
    if (j.contains("preset")) c = preset(get_field<std::string>(j, "preset", "config"));
    if (j.contains("adapters")) {
        if (!j.at("adapters").is_array()) throw ConfigError("config.adapters must be an array");
        c.adapters.clear();
        for (const auto& a : j.at("adapters")) c.adapters.push_back(adapter_spec_from_json(a));
    }
    if (j.contains("backbone")) {
        const json& b = j.at("backbone");
        reject_unknown(b, {"P", "D", "Q", "seed"}, "backbone");
        if (b.contains("P")) c.backbone.P = get_size(b, "P", "backbone");
        if (b.contains("D")) c.backbone.D = get_size(b, "D", "backbone");
        if (b.contains("Q")) c.backbone.Q = get_size(b, "Q", "backbone");
        if (b.contains("seed")) c.backbone.seed = get_size(b, "seed", "backbone");
    }
    if (j.contains("task")) {
        const json& t = j.at("task");
        reject_unknown(t, {"name", "n", "noise_level", "seed", "train_fraction", "D_raw", "data_file"}, "task");
        if (t.contains("name")) c.task.name = get_field<std::string>(t, "name", "task");
        if (t.contains("n")) c.task.n = get_size(t, "n", "task");
        if (t.contains("noise_level")) c.task.noise_level = get_real(t, "noise_level", "task");
        if (t.contains("seed")) c.task.seed = get_size(t, "seed", "task");
        if (t.contains("train_fraction")) c.task.train_fraction = get_real(t, "train_fraction", "task");
        if (t.contains("D_raw")) c.task.D_raw = get_size(t, "D_raw", "task");
        if (t.contains("data_file")) c.task.data_file = get_field<std::string>(t, "data_file", "task");
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown(t, {"optimizer", "lr", "epochs", "batch", "seed", "shuffle"}, "train");
        if (t.contains("optimizer")) c.train.optimizer = optimizer_from_string(get_field<std::string>(t, "optimizer", "train"));
        if (t.contains("lr")) c.train.learning_rate = get_real(t, "lr", "train");
        if (t.contains("epochs")) c.train.epochs = get_size(t, "epochs", "train");
        if (t.contains("batch")) c.train.batch_size = get_size(t, "batch", "train");
        if (t.contains("seed")) c.train.seed = get_size(t, "seed", "train");
        if (t.contains("shuffle")) c.train.shuffle = get_field<bool>(t, "shuffle", "train");
    }
    if (j.contains("ntk")) {
        const json& n = j.at("ntk");
        reject_unknown(n, {"samples", "output_index"}, "ntk");
        if (n.contains("samples")) c.ntk.samples = get_size(n, "samples", "ntk");
        if (n.contains("output_index")) c.ntk.output_index = get_size(n, "output_index", "ntk");
    }
    if (j.contains("bounds")) c.bounds = bounds_from_json(j.at("bounds"), c.bounds);
    if (j.contains("output")) {
        const json& o = j.at("output");
        reject_unknown(o, {"dir"}, "output");
        if (o.contains("dir")) c.out_dir = get_field<std::string>(o, "dir", "output");
    }
    return c;
}

Adapter build_adapter(const AdapterSpec& s, const BackboneSpec& b, std::uint64_t seed) {
    if (s.type == "lora") return make_lora(b.D, b.Q, s.r, seed);
    if (s.type == "ttlora") return make_ttlora(b.D, b.Q, s.tt, s.tt2, seed);
    if (s.type == "tensorguide")
        return make_tensor_guide(b.D, b.Q, s.M, s.tt, seed, s.activation, s.head_mode, s.resample_per_batch);
    throw ConfigError("unknown adapter type '" + s.type + "'");
}

FrozenBackbone build_backbone(const BackboneSpec& b) { return make_backbone(b.P, b.D, b.Q, b.seed); }

Dataset generate_task(const TaskSpec& t, std::size_t Q) {
    if (t.name == "quantum-dot") return gen_quantum_dot(t.n, t.noise_level, t.seed);
    if (t.name == "wide-output") return gen_wide_output(t.n, t.D_raw, Q, t.noise_level, t.seed);
    throw ConfigError("unknown task '" + t.name + "'");
}

PreparedData prepare(const ExperimentConfig& c) {
    c.validate();
    const Dataset all = c.task.data_file.empty() ? generate_task(c.task, c.backbone.Q) : read_dataset(c.task.data_file);
    if (all.input_width() != c.backbone.P)
        throw ConfigError("dataset width " + std::to_string(all.input_width()) + " does not match backbone.P = " +
                          std::to_string(c.backbone.P));
    if (all.num_classes != c.backbone.Q)
        throw ConfigError("dataset has " + std::to_string(all.num_classes) + " classes but backbone.Q = " +
                          std::to_string(c.backbone.Q));
    PreparedData p;
    p.backbone = build_backbone(c.backbone);
    auto [tr, te] = split(all, c.task.train_fraction, c.task.seed);
    p.train = std::move(tr);
    p.test = std::move(te);
    return p;
}

RunOutput run_one(const ExperimentConfig& c, const AdapterSpec& spec, const PreparedData& data, std::uint64_t seed) {
    RunOutput out{TrainReport{}, build_adapter(spec, c.backbone, seed)};
    TrainConfig t = c.train;
    t.seed = seed;
    out.report = train(out.adapter, data.backbone, data.train, data.test, t);
    return out;
}

double CompareRow::mean_acc() const { return mean(test_acc); }
double CompareRow::mean_loss() const { return mean(test_loss); }
double CompareRow::mean_exp_loss() const { return mean(exp_loss); }

std::vector<CompareRow> run_compare(const ExperimentConfig& c, const std::vector<std::uint64_t>& seeds) {
    const PreparedData data = prepare(c);
    std::vector<CompareRow> rows;
    for (const AdapterSpec& spec : c.adapters) {
        CompareRow row;
        row.label = spec.name();
        row.kind = spec.type;
        for (std::uint64_t s : seeds) {
            const RunOutput r = run_one(c, spec, data, s);
            const EpochMetrics& e = r.report.epochs.back();
            row.param_count = r.report.param_count;
            row.seeds.push_back(s);
            row.test_acc.push_back(e.test_acc);
            row.test_loss.push_back(e.test_loss);
            row.exp_loss.push_back(e.exp_loss);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

json compare_json(const std::vector<CompareRow>& rows) {
    json j = json::array();
    for (const CompareRow& r : rows) {
        j.push_back({{"model", r.label},
                     {"kind", r.kind},
                     {"params", r.param_count},
                     {"loss", r.mean_loss()},
                     {"acc", r.mean_acc()},
                     {"exp_loss", r.mean_exp_loss()},
                     {"seeds", r.seeds},
                     {"per_seed", {{"loss", r.test_loss}, {"acc", r.test_acc}, {"exp_loss", r.exp_loss}}}});
    }
    return j;
}

json params_report(const ExperimentConfig& c) {
    if (!c.enabled) throw ConfigError("preset '" + c.preset + "' is " + c.note);
    json rows = json::array();
    for (const AdapterSpec& s : c.adapters) {
        json r;
        r["model"] = s.name();
        r["kind"] = s.type;
        std::size_t count = 0;
        std::string cls;
        if (s.type == "lora") {
            count = s.r * (c.backbone.D + c.backbone.Q);
            cls = "O(r(D+Q))";
        } else if (s.type == "ttlora") {
            count = tt_param_count(s.tt) + tt_param_count(s.tt2);
            cls = "O(2K r_tt^2 H)";
        } else if (s.type == "tensorguide") {
            const FormatCheck chk = validate_adapter_format(s.tt, c.backbone.D, c.backbone.Q, s.M, s.tt.in_size());
            if (!chk.ok) throw ConfigError(s.name() + ": TensorGuide format rejected: " + chk.violation);
            count = tt_param_count(s.tt);
            cls = "O(K r_tt^2 H)";
            r["M"] = s.M;
            r["out_size"] = s.tt.out_size();
            r["format"] = format_to_json(s.tt);
        } else {
            throw ConfigError("unknown adapter type '" + s.type + "'");
        }
        r["params"] = count;
        r["complexity"] = cls;
        rows.push_back(r);
    }
    return json{{"preset", c.preset}, {"D", c.backbone.D}, {"Q", c.backbone.Q}, {"adapters", rows}};
}

json bounds_report(const BoundInputs& b, double M) {
    b.validate();
    return json{{"inputs", to_json(b)},
                {"M", M},
                {"approximation", approximation_bound(b, M)},
                {"optimization", optimization_bound(b.C0, b.lambda_min, b.t)},
                {"generalization", generalization_bound(b)},
                {"rademacher", rademacher_bound(b.B, b.kappa, b.N)},
                {"placeholder_constants", "C0, C1, C2, B, L_ce, L_sigma default to 1.0; the source gives no values"}};
}

json ntk_report(const ExperimentConfig& c) {
    const PreparedData data = prepare(c);
    const std::size_t N = c.ntk.samples;
    if (N > data.train.size())
        throw ConfigError("ntk.samples = " + std::to_string(N) + " exceeds the " + std::to_string(data.train.size()) +
                          " training rows");
    std::vector<std::size_t> idx(N);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const Dataset sample = data.train.subset(idx);

    std::vector<std::pair<std::string, Adapter>> adapters;
    for (const AdapterSpec& s : c.adapters) adapters.emplace_back(s.name(), build_adapter(s, c.backbone, c.train.seed));
    const auto stats = ntk_compare(adapters, data.backbone, sample.inputs, c.ntk.output_index);

    json rows = json::array();
    bool all_psd = true;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const SpectralStats& s = stats[i];
        all_psd = all_psd && s.psd;
        json r{{"model", s.name},
               {"kind", s.kind},
               {"param_count", s.param_count},
               {"lambda_min", s.lambda_min},
               {"lambda_max", s.lambda_max},
               {"condition_number", s.condition ? json(*s.condition) : json(nullptr)},
               {"kappa", s.kappa},
               {"psd", s.psd},
               {"max_asymmetry", s.max_asymmetry},
               {"eigenvalues", s.eigenvalues}};
        BoundInputs b = c.bounds;
        b.kappa = s.kappa;
        b.N = static_cast<double>(N);
        r["rademacher_bound"] = rademacher_bound(b.B, b.kappa, b.N);
        r["generalization_bound"] = generalization_bound(b);
        r["optimization_bound"] = optimization_bound(b.C0, std::max(0.0, s.lambda_min), b.t);
        if (const auto* g = std::get_if<TensorGuideAdapter>(&adapters[i].second)) {
            r["approximation_bound"] = approximation_bound(b, static_cast<double>(g->M));
            try {
                const RayleighCheck rc = rayleigh_check(*g, data.backbone, sample.inputs, c.ntk.output_index);
                r["factorized_lower_bound"] = {{"lambda_min_ntk", rc.lambda_min_ntk},
                                               {"lambda_min_generator", rc.lambda_min_generator},
                                               {"lambda_min_weights", rc.lambda_min_weights},
                                               {"rhs", rc.rhs},
                                               {"holds", rc.holds}};
            } catch (const CapError& e) {
                r["factorized_lower_bound"] = {{"skipped", e.what()}};
            }
        }
        rows.push_back(r);
    }
    return json{{"preset", c.preset},
                {"samples", N},
                {"output_index", c.ntk.output_index},
                {"psd", all_psd},
                {"adapters", rows},
                {"bounds", bounds_report(c.bounds, 1.0)},
                {"note", "lambda_min comparisons are diagnostics, not assertions"}};
}

} // namespace ttguide
