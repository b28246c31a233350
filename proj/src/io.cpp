#include "ttguide/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ttguide {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

template <typename T>
void put_le(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw ConfigError("dataset file is truncated");
    unsigned char b[sizeof(T)];
    std::memcpy(b, in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

std::string read_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::size_t> dims(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_array()) throw ConfigError(std::string("missing array '") + key + "'");
    std::vector<std::size_t> out;
    for (const auto& v : j.at(key)) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            throw ConfigError(std::string("'") + key + "' must hold nonnegative integers");
        out.push_back(v.get<std::size_t>());
    }
    return out;
}

DenseTensor tensor_from_json(const json& j, const Shape& shape) {
    if (!j.is_array()) throw ConfigError("tensor values must be an array");
    std::vector<double> v;
    v.reserve(j.size());
    for (const auto& x : j) {
        if (!x.is_number()) throw ConfigError("tensor values must be numbers");
        v.push_back(x.get<double>());
    }
    try {
        return DenseTensor(shape, std::move(v));
    } catch (const ShapeError& e) {
        throw ConfigError(e.what());
    }
}

json values_json(const DenseTensor& t) { return json(std::vector<double>(t.values().begin(), t.values().end())); }

} // namespace

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

std::filesystem::path sidecar_path(const std::filesystem::path& file) {
    std::filesystem::path p = file;
    return p.replace_extension(".json");
}

json dataset_metadata(const Dataset& d) {
    json j;
    j["task"] = d.task;
    j["n"] = d.size();
    j["P"] = d.input_width();
    j["Q"] = d.num_classes;
    j["seed"] = d.seed;
    j["noise_level"] = d.noise_level;
    j["class_counts"] = d.class_counts();
    return j;
}

void write_dataset(const std::filesystem::path& file, const Dataset& d) {
    d.validate();
    std::string out;
    out.reserve(32 + d.inputs.size() * 8 + d.size() * 4);
    put_le<std::uint64_t>(out, d.size());
    put_le<std::uint64_t>(out, d.input_width());
    put_le<std::uint64_t>(out, d.num_classes);
    put_le<std::uint64_t>(out, d.seed);
    for (double v : d.inputs.values()) put_le<double>(out, v);
    for (std::uint32_t y : d.labels) put_le<std::uint32_t>(out, y);
    write_text(file, out);
    write_json(sidecar_path(file), dataset_metadata(d));
}

Dataset read_dataset(const std::filesystem::path& file) {
    const std::string in = read_file(file);
    std::size_t pos = 0;
    const auto N = get_le<std::uint64_t>(in, pos);
    const auto P = get_le<std::uint64_t>(in, pos);
    const auto Q = get_le<std::uint64_t>(in, pos);
    Dataset d;
    d.seed = get_le<std::uint64_t>(in, pos);
    if (N == 0 || P == 0 || Q == 0) throw ConfigError(file.string() + ": header has a zero dimension");
    if (in.size() != 32 + N * P * 8 + N * 4)
        throw ConfigError(file.string() + ": size " + std::to_string(in.size()) + " does not match header N=" +
                          std::to_string(N) + ", P=" + std::to_string(P));
    std::vector<double> v(N * P);
    for (double& x : v) x = get_le<double>(in, pos);
    d.labels.resize(N);
    for (auto& y : d.labels) y = get_le<std::uint32_t>(in, pos);
    try {
        d.inputs = DenseTensor(Shape{N, P}, std::move(v));
    } catch (const NumericError& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
    d.num_classes = Q;
    const auto side = sidecar_path(file);
    if (std::filesystem::exists(side)) {
        const json meta = read_json(side);
        d.task = meta.value("task", std::string());
        d.noise_level = meta.value("noise_level", 0.0);
    }
    try {
        d.validate();
    } catch (const ShapeError& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
    return d;
}

json format_to_json(const TTFormat& f) {
    json j;
    j["in_dims"] = f.in_dims;
    j["out_dims"] = f.out_dims;
    j["ranks"] = f.ranks;
    return j;
}

TTFormat format_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("TT format must be an object with in_dims, out_dims, ranks");
    TTFormat f{dims(j, "in_dims"), dims(j, "out_dims"), dims(j, "ranks")};
    try {
        f.validate();
    } catch (const ShapeError& e) {
        throw ConfigError(std::string("invalid TT format: ") + e.what());
    }
    return f;
}

json tt_to_json(const TTMatrix<double>& tt) {
    json j = format_to_json(tt.format());
    j["cores"] = json::array();
    for (const auto& c : tt.cores()) j["cores"].push_back(values_json(c));
    return j;
}

TTMatrix<double> tt_from_json(const json& j) {
    const TTFormat f = format_from_json(j);
    if (!j.contains("cores") || !j.at("cores").is_array() || j.at("cores").size() != f.order())
        throw ConfigError("TT needs one 'cores' entry per core");
    std::vector<DenseTensor> cores;
    for (std::size_t k = 0; k < f.order(); ++k) cores.push_back(tensor_from_json(j.at("cores")[k], f.core_shape(k)));
    return TTMatrix<double>(f, std::move(cores));
}

json adapter_to_json(const Adapter& a) {
    json j;
    j["kind"] = kind(a);
    std::visit(overloaded{
                   [&](const LoRAAdapter& l) {
                       j["D"] = l.W1.rows();
                       j["Q"] = l.W2.cols();
                       j["r"] = l.rank();
                       j["W1"] = values_json(l.W1);
                       j["W2"] = values_json(l.W2);
                   },
                   [&](const TTLoRAAdapter& t) {
                       j["tt1"] = tt_to_json(t.tt1);
                       j["tt2"] = tt_to_json(t.tt2);
                   },
                   [&](const TensorGuideAdapter& g) {
                       j["D"] = g.D;
                       j["Q"] = g.Q;
                       j["M"] = g.M;
                       j["activation"] = to_string(g.activation);
                       j["head_mode"] = to_string(g.head_mode);
                       j["resample_per_batch"] = g.resample_per_batch;
                       j["tt"] = tt_to_json(g.tt);
                       j["z"] = values_json(g.z);
                   },
               },
               a);
    return j;
}

Adapter adapter_from_json(const json& j) {
    try {
        const std::string k = j.at("kind").get<std::string>();
        if (k == "lora") {
            const auto D = j.at("D").get<std::size_t>(), Q = j.at("Q").get<std::size_t>(), r = j.at("r").get<std::size_t>();
            return LoRAAdapter{tensor_from_json(j.at("W1"), Shape{D, r}), tensor_from_json(j.at("W2"), Shape{r, Q})};
        }
        if (k == "ttlora") {
            TTLoRAAdapter t{tt_from_json(j.at("tt1")), tt_from_json(j.at("tt2"))};
            if (t.tt1.format().out_size() != t.tt2.format().in_size())
                throw ConfigError("TT-LoRA checkpoint factors do not compose");
            return t;
        }
        if (k == "tensorguide") {
            TensorGuideAdapter g;
            g.D = j.at("D").get<std::size_t>();
            g.Q = j.at("Q").get<std::size_t>();
            g.M = j.at("M").get<std::size_t>();
            g.activation = activation_from_string(j.at("activation").get<std::string>());
            g.head_mode = head_mode_from_string(j.at("head_mode").get<std::string>());
            g.resample_per_batch = j.at("resample_per_batch").get<bool>();
            g.tt = tt_from_json(j.at("tt"));
            g.z = tensor_from_json(j.at("z"), Shape{g.tt.format().in_size()});
            const FormatCheck c = validate_adapter_format(g.tt.format(), g.D, g.Q, g.M, g.z.size());
            if (!c.ok) throw ConfigError("TensorGuide checkpoint rejected: " + c.violation);
            return g;
        }
        throw ConfigError("unknown adapter kind '" + k + "'");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed adapter checkpoint: ") + e.what());
    }
}

std::string metrics_csv(const TrainReport& r) {
    std::string out = "epoch,train_loss,train_acc,test_loss,test_acc,exp_loss\n";
    for (const auto& e : r.epochs) {
        out += std::to_string(e.epoch) + ',' + format_double(e.train_loss) + ',' + format_double(e.train_acc) + ',' +
               format_double(e.test_loss) + ',' + format_double(e.test_acc) + ',' + format_double(e.exp_loss) + '\n';
    }
    return out;
}

json report_summary(const TrainReport& r) {
    json j;
    j["adapter"] = r.adapter_kind;
    j["param_count"] = r.param_count;
    j["seed"] = r.seed;
    j["epochs"] = r.epochs.size();
    if (!r.epochs.empty()) {
        const auto& e = r.epochs.back();
        j["final"] = {{"train_loss", e.train_loss}, {"train_acc", e.train_acc}, {"test_loss", e.test_loss},
                      {"test_acc", e.test_acc},     {"exp_loss", e.exp_loss}};
    }
    return j;
}

void write_text(const std::filesystem::path& file, const std::string& text) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + file.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw ConfigError("write failed for " + file.string());
}

void write_json(const std::filesystem::path& file, const json& j) { write_text(file, j.dump(2) + "\n"); }

json read_json(const std::filesystem::path& file) {
    try {
        return json::parse(read_file(file));
    } catch (const json::parse_error& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
}

} // namespace ttguide
