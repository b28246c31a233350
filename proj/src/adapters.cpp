#include "ttguide/adapters.hpp"

#include <cmath>

namespace ttguide {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

RowMatrixXd materialized(const TTMatrix<double>& tt) {
    const DenseTensor m = tt_materialize(tt);
    return m.matrix();
}

RowMatrixXd activate(Activation act, const RowMatrixXd& pre) {
    RowMatrixXd h(pre.rows(), pre.cols());
    for (Eigen::Index i = 0; i < pre.size(); ++i) h.data()[i] = apply_activation(act, pre.data()[i]);
    return h;
}

} // namespace

RowMatrixXd FrozenBackbone::features(const RowMatrixXd& x_raw) const {
    if (static_cast<std::size_t>(x_raw.cols()) != P())
        throw ShapeError("raw input width " + std::to_string(x_raw.cols()) + " does not match backbone P = " +
                         std::to_string(P()));
    return gemm<double>(x_raw, feature_map.matrix());
}

std::string to_string(Activation a) {
    switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
    }
    return "relu";
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::ReLU;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + s + "' (expected relu, sigmoid or identity)");
}

std::string to_string(HeadMode m) { return m == HeadMode::Additive ? "additive" : "replace-head"; }

HeadMode head_mode_from_string(const std::string& s) {
    if (s == "additive") return HeadMode::Additive;
    if (s == "replace-head") return HeadMode::ReplaceHead;
    throw ConfigError("unknown head mode '" + s + "' (expected additive or replace-head)");
}

double apply_activation(Activation a, double v) {
    switch (a) {
    case Activation::ReLU: return v > 0.0 ? v : 0.0;
    case Activation::Sigmoid: return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    case Activation::Identity: return v;
    }
    return v;
}

// ReLU subgradient at 0 is 0.
double activation_derivative(Activation a, double pre) {
    switch (a) {
    case Activation::ReLU: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: {
        const double s = apply_activation(Activation::Sigmoid, pre);
        return s * (1.0 - s);
    }
    case Activation::Identity: return 1.0;
    }
    return 1.0;
}

LoRAAdapter make_lora(std::size_t D, std::size_t Q, std::size_t r, std::uint64_t seed) {
    if (D == 0 || Q == 0 || r == 0) throw ShapeError("LoRA needs D, Q, r >= 1");
    return LoRAAdapter{init_xavier_uniform(Shape{D, r}, D, r, derive_seed(seed, 1)), DenseTensor::zeros(Shape{r, Q})};
}

TTLoRAAdapter make_ttlora(std::size_t D, std::size_t Q, const TTFormat& f1, const TTFormat& f2, std::uint64_t seed) {
    TTLoRAAdapter a{tt_init(f1, derive_seed(seed, 2)), tt_init(f2, derive_seed(seed, 3))};
    const std::size_t last = a.tt2.order() - 1;
    a.tt2.mutable_core(last) = DenseTensor::zeros(a.tt2.core(last).shape());
    validate(Adapter{a}, D, Q);
    return a;
}

TensorGuideAdapter make_tensor_guide(std::size_t D, std::size_t Q, std::size_t M, const TTFormat& f,
                                     std::uint64_t seed, Activation act, HeadMode mode, bool resample_per_batch) {
    const FormatCheck check = validate_adapter_format(f, D, Q, M, f.in_size());
    if (!check.ok) throw ShapeError("TensorGuide format rejected: " + check.violation);
    TensorGuideAdapter a;
    a.tt = tt_init(f, derive_seed(seed, 4));
    a.z = init_gaussian(Shape{f.in_size()}, derive_seed(seed, 5));
    a.D = D;
    a.Q = Q;
    a.M = M;
    a.activation = act;
    a.head_mode = mode;
    a.resample_per_batch = resample_per_batch;
    return a;
}

void validate(const Adapter& a, std::size_t D, std::size_t Q) {
    std::visit(overloaded{
                   [&](const LoRAAdapter& l) {
                       if (l.W1.shape().rank() != 2 || l.W2.shape().rank() != 2 || l.W1.rows() != D ||
                           l.W2.cols() != Q || l.W1.cols() != l.W2.rows() || l.W1.cols() == 0)
                           throw ShapeError("LoRA factors " + l.W1.shape().to_string() + ", " +
                                            l.W2.shape().to_string() + " do not compose to " + std::to_string(D) +
                                            " x " + std::to_string(Q));
                   },
                   [&](const TTLoRAAdapter& t) {
                       const auto& f1 = t.tt1.format();
                       const auto& f2 = t.tt2.format();
                       if (f1.in_size() != D || f2.out_size() != Q || f1.out_size() != f2.in_size())
                           throw ShapeError("TT-LoRA factors materialize to " + std::to_string(f1.in_size()) + " x " +
                                            std::to_string(f1.out_size()) + " and " + std::to_string(f2.in_size()) +
                                            " x " + std::to_string(f2.out_size()) + ", expected D x r and r x Q with D=" +
                                            std::to_string(D) + ", Q=" + std::to_string(Q));
                   },
                   [&](const TensorGuideAdapter& g) {
                       if (g.D != D || g.Q != Q)
                           throw ShapeError("TensorGuide built for D=" + std::to_string(g.D) + ", Q=" +
                                            std::to_string(g.Q) + " used with D=" + std::to_string(D) +
                                            ", Q=" + std::to_string(Q));
                       const FormatCheck c = validate_adapter_format(g.tt.format(), g.D, g.Q, g.M, g.z.size());
                       if (!c.ok) throw ShapeError("TensorGuide format rejected: " + c.violation);
                   },
               },
               a);
}

std::string kind(const Adapter& a) {
    return std::visit(overloaded{
                          [](const LoRAAdapter&) { return std::string("lora"); },
                          [](const TTLoRAAdapter&) { return std::string("ttlora"); },
                          [](const TensorGuideAdapter&) { return std::string("tensorguide"); },
                      },
                      a);
}

GeneratedWeights generate_weights(const TensorGuideAdapter& a) { return generate_weights(a, a.z); }

GeneratedWeights generate_weights(const TensorGuideAdapter& a, const DenseTensor& z) {
    const FormatCheck c = validate_adapter_format(a.tt.format(), a.D, a.Q, a.M, z.size());
    if (!c.ok) throw ShapeError("TensorGuide layout mismatch: " + c.violation);
    const DenseTensor y = tt_apply(a.tt, z);
    GeneratedWeights w;
    w.W1 = Eigen::Map<const RowMatrixXd>(y.data(), static_cast<Eigen::Index>(a.D), static_cast<Eigen::Index>(a.M));
    w.W2 = Eigen::Map<const RowMatrixXd>(y.data() + a.D * a.M, static_cast<Eigen::Index>(a.M),
                                         static_cast<Eigen::Index>(a.Q));
    return w;
}

RowMatrixXd forward_features(const Adapter& a, const FrozenBackbone& b, const RowMatrixXd& x) {
    validate(a, b.D(), b.Q());
    if (static_cast<std::size_t>(x.cols()) != b.D())
        throw ShapeError("feature width " + std::to_string(x.cols()) + " does not match D = " + std::to_string(b.D()));
    RowMatrixXd base = gemm<double>(x, b.W0.matrix());

    return std::visit(overloaded{
                          [&](const LoRAAdapter& l) -> RowMatrixXd {
                              return base + gemm<double>(gemm<double>(x, l.W1.matrix()), l.W2.matrix());
                          },
                          [&](const TTLoRAAdapter& t) -> RowMatrixXd {
                              return base + gemm<double>(gemm<double>(x, materialized(t.tt1)), materialized(t.tt2));
                          },
                          [&](const TensorGuideAdapter& g) -> RowMatrixXd {
                              const GeneratedWeights w = generate_weights(g);
                              RowMatrixXd delta = gemm<double>(activate(g.activation, gemm<double>(x, w.W1)), w.W2);
                              if (g.head_mode == HeadMode::ReplaceHead) return delta;
                              return base + delta;
                          },
                      },
                      a);
}

DenseTensor forward(const Adapter& a, const FrozenBackbone& b, const DenseTensor& x_raw) {
    if (x_raw.shape().rank() != 2) throw ShapeError("forward expects a [batch x P] input");
    const RowMatrixXd logits = forward_features(a, b, b.features(x_raw.matrix()));
    return DenseTensor::from_matrix(logits);
}

std::size_t param_count(const Adapter& a) {
    return std::visit(overloaded{
                          [](const LoRAAdapter& l) { return l.W1.size() + l.W2.size(); },
                          [](const TTLoRAAdapter& t) {
                              return tt_param_count(t.tt1.format()) + tt_param_count(t.tt2.format());
                          },
                          [](const TensorGuideAdapter& g) { return tt_param_count(g.tt.format()); },
                      },
                      a);
}

std::string complexity_class(const Adapter& a) {
    return std::visit(overloaded{
                          [](const LoRAAdapter&) { return std::string("O(r(D+Q))"); },
                          [](const TTLoRAAdapter&) { return std::string("O(2K r_tt^2 H)"); },
                          [](const TensorGuideAdapter&) { return std::string("O(K r_tt^2 H)"); },
                      },
                      a);
}

std::vector<std::string> param_names(const Adapter& a) {
    std::vector<std::string> names;
    std::visit(overloaded{
                   [&](const LoRAAdapter&) { names = {"W1", "W2"}; },
                   [&](const TTLoRAAdapter& t) {
                       for (std::size_t k = 0; k < t.tt1.order(); ++k) names.push_back("tt1.core" + std::to_string(k));
                       for (std::size_t k = 0; k < t.tt2.order(); ++k) names.push_back("tt2.core" + std::to_string(k));
                   },
                   [&](const TensorGuideAdapter& g) {
                       for (std::size_t k = 0; k < g.tt.order(); ++k) names.push_back("core" + std::to_string(k));
                   },
               },
               a);
    return names;
}

std::vector<const DenseTensor*> param_refs(const Adapter& a) {
    std::vector<const DenseTensor*> refs;
    std::visit(overloaded{
                   [&](const LoRAAdapter& l) { refs = {&l.W1, &l.W2}; },
                   [&](const TTLoRAAdapter& t) {
                       for (const auto& c : t.tt1.cores()) refs.push_back(&c);
                       for (const auto& c : t.tt2.cores()) refs.push_back(&c);
                   },
                   [&](const TensorGuideAdapter& g) {
                       for (const auto& c : g.tt.cores()) refs.push_back(&c);
                   },
               },
               a);
    return refs;
}

std::vector<DenseTensor*> param_refs(Adapter& a) {
    std::vector<DenseTensor*> refs;
    std::visit(overloaded{
                   [&](LoRAAdapter& l) { refs = {&l.W1, &l.W2}; },
                   [&](TTLoRAAdapter& t) {
                       for (std::size_t k = 0; k < t.tt1.order(); ++k) refs.push_back(&t.tt1.mutable_core(k));
                       for (std::size_t k = 0; k < t.tt2.order(); ++k) refs.push_back(&t.tt2.mutable_core(k));
                   },
                   [&](TensorGuideAdapter& g) {
                       for (std::size_t k = 0; k < g.tt.order(); ++k) refs.push_back(&g.tt.mutable_core(k));
                   },
               },
               a);
    return refs;
}

} // namespace ttguide
