#include "ttguide/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "ttguide/rng.hpp"

namespace ttguide {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

DenseTensor to_tensor(const RowMatrixXd& m, const Shape& shape) {
    return DenseTensor(shape, std::vector<double>(m.data(), m.data() + m.size()));
}

Adapter with_latent(const Adapter& a, const DenseTensor* latent) {
    Adapter copy = a;
    if (latent)
        if (auto* g = std::get_if<TensorGuideAdapter>(&copy)) g->z = *latent;
    return copy;
}

RowMatrixXd rows_of(const RowMatrixXd& m, std::span<const std::size_t> idx) {
    RowMatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
    return out;
}

std::size_t correct_count(const RowMatrixXd& logits, std::span<const std::uint32_t> labels) {
    std::size_t c = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index best = 0;
        logits.row(i).maxCoeff(&best);  // first maximum wins ties
        if (static_cast<std::uint32_t>(best) == labels[static_cast<std::size_t>(i)]) ++c;
    }
    return c;
}

void check_labels(const RowMatrixXd& logits, std::span<const std::uint32_t> labels) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size())
        throw ShapeError("cross_entropy: " + std::to_string(logits.rows()) + " logit rows but " +
                         std::to_string(labels.size()) + " labels");
    if (logits.rows() == 0) throw ShapeError("cross_entropy: empty batch");
    for (std::uint32_t y : labels)
        if (y >= static_cast<std::uint32_t>(logits.cols()))
            throw ShapeError("label " + std::to_string(y) + " out of range [0, " + std::to_string(logits.cols()) + ")");
}

// (softmax - onehot) / batch
RowMatrixXd ce_gradient(const RowMatrixXd& logits, std::span<const std::uint32_t> labels) {
    const double inv_b = 1.0 / static_cast<double>(logits.rows());
    RowMatrixXd g(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        double s = 0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) s += std::exp(logits(i, j) - mx);
        for (Eigen::Index j = 0; j < logits.cols(); ++j) g(i, j) = std::exp(logits(i, j) - mx) / s * inv_b;
        g(i, labels[static_cast<std::size_t>(i)]) -= inv_b;
    }
    return g;
}

} // namespace

std::string to_string(Optimizer o) { return o == Optimizer::SGD ? "sgd" : "adam"; }

Optimizer optimizer_from_string(const std::string& s) {
    if (s == "sgd") return Optimizer::SGD;
    if (s == "adam") return Optimizer::Adam;
    throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning_rate must be finite and >= 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(adam_eps > 0))
        throw ConfigError("Adam constants need 0 <= beta < 1 and eps > 0");
}

const DenseTensor& GradientSet::at(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return grads[i];
    throw ShapeError("no gradient named '" + name + "'");
}

std::vector<double> GradientSet::flatten() const {
    std::vector<double> out;
    for (const auto& g : grads) out.insert(out.end(), g.values().begin(), g.values().end());
    return out;
}

double cross_entropy(const RowMatrixXd& logits, std::span<const std::uint32_t> labels) {
    check_labels(logits, labels);
    double total = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        double s = 0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) s += std::exp(logits(i, j) - mx);
        total += mx + std::log(s) - logits(i, labels[static_cast<std::size_t>(i)]);
    }
    return total / static_cast<double>(logits.rows());
}

double cross_entropy(const DenseTensor& logits, std::span<const std::uint32_t> labels) {
    if (logits.shape().rank() != 2) throw ShapeError("cross_entropy expects [batch x Q] logits");
    return cross_entropy(RowMatrixXd(logits.matrix()), labels);
}

RowMatrixXd generated_weight_gradient(const TensorGuideAdapter& g, const RowMatrixXd& x, const RowMatrixXd& dlogits,
                                      const DenseTensor* latent) {
    const DenseTensor& z = latent ? *latent : g.z;
    const GeneratedWeights w = generate_weights(g, z);
    if (x.cols() != w.W1.rows() || dlogits.rows() != x.rows() || dlogits.cols() != w.W2.cols())
        throw ShapeError("generated_weight_gradient: features and upstream gradient do not match D, Q");

    const RowMatrixXd pre = gemm<double>(x, w.W1);
    RowMatrixXd h(pre.rows(), pre.cols());
    for (Eigen::Index i = 0; i < pre.size(); ++i) h.data()[i] = apply_activation(g.activation, pre.data()[i]);

    const RowMatrixXd dW2 = gemm<double>(h.transpose(), dlogits);
    RowMatrixXd dpre = gemm<double>(dlogits, w.W2.transpose());
    for (Eigen::Index i = 0; i < dpre.size(); ++i) dpre.data()[i] *= activation_derivative(g.activation, pre.data()[i]);
    const RowMatrixXd dW1 = gemm<double>(x.transpose(), dpre);

    RowMatrixXd dy(1, dW1.size() + dW2.size());
    std::copy(dW1.data(), dW1.data() + dW1.size(), dy.data());
    std::copy(dW2.data(), dW2.data() + dW2.size(), dy.data() + dW1.size());
    return dy;
}

GradientSet backward_upstream(const Adapter& a, const FrozenBackbone& b, const RowMatrixXd& x,
                              const RowMatrixXd& dlogits, const DenseTensor* latent) {
    validate(a, b.D(), b.Q());
    if (static_cast<std::size_t>(x.cols()) != b.D() || dlogits.rows() != x.rows() ||
        static_cast<std::size_t>(dlogits.cols()) != b.Q())
        throw ShapeError("backward: features [" + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                         "] and upstream [" + std::to_string(dlogits.rows()) + "x" + std::to_string(dlogits.cols()) +
                         "] do not match D=" + std::to_string(b.D()) + ", Q=" + std::to_string(b.Q()));
    GradientSet out;
    out.names = param_names(a);

    std::visit(overloaded{
                   [&](const LoRAAdapter& l) {
                       const RowMatrixXd A = gemm<double>(x, l.W1.matrix());
                       const RowMatrixXd dW2 = gemm<double>(A.transpose(), dlogits);
                       const RowMatrixXd dA = gemm<double>(dlogits, l.W2.matrix().transpose());
                       const RowMatrixXd dW1 = gemm<double>(x.transpose(), dA);
                       out.grads = {to_tensor(dW1, l.W1.shape()), to_tensor(dW2, l.W2.shape())};
                   },
                   [&](const TTLoRAAdapter& t) {
                       // Each factor is the TT applied to the identity, so its reverse pass is tt_backward.
                       const auto n1 = static_cast<Eigen::Index>(t.tt1.format().in_size());
                       const auto n2 = static_cast<Eigen::Index>(t.tt2.format().in_size());
                       TTChainTape<double> tape1, tape2;
                       const RowMatrixXd W1 = tt_apply_batch(t.tt1, RowMatrixXd::Identity(n1, n1), &tape1);
                       const RowMatrixXd W2 = tt_apply_batch(t.tt2, RowMatrixXd::Identity(n2, n2), &tape2);
                       const RowMatrixXd A = gemm<double>(x, W1);
                       const RowMatrixXd dW2 = gemm<double>(A.transpose(), dlogits);
                       const RowMatrixXd dW1 = gemm<double>(x.transpose(), gemm<double>(dlogits, W2.transpose()));
                       out.grads = tt_backward(t.tt1, tape1, dW1);
                       for (auto& g : tt_backward(t.tt2, tape2, dW2)) out.grads.push_back(std::move(g));
                   },
                   [&](const TensorGuideAdapter& g) {
                       const DenseTensor& z = latent ? *latent : g.z;
                       TTChainTape<double> tape;
                       Eigen::Map<const RowMatrixXd> zrow(z.data(), 1, static_cast<Eigen::Index>(z.size()));
                       tt_apply_batch(g.tt, zrow, &tape);
                       const RowMatrixXd dy = generated_weight_gradient(g, x, dlogits, latent);
                       out.grads = tt_backward(g.tt, tape, dy);
                   },
               },
               a);
    return out;
}

BackwardResult backward_features(const Adapter& a, const FrozenBackbone& b, const RowMatrixXd& x,
                                 std::span<const std::uint32_t> labels, const DenseTensor* latent) {
    BackwardResult r;
    r.logits = latent ? forward_features(with_latent(a, latent), b, x) : forward_features(a, b, x);
    r.loss = cross_entropy(r.logits, labels);
    r.grads = backward_upstream(a, b, x, ce_gradient(r.logits, labels), latent);
    return r;
}

BackwardResult backward(const Adapter& a, const FrozenBackbone& b, const DenseTensor& batch_raw,
                        std::span<const std::uint32_t> labels) {
    if (batch_raw.shape().rank() != 2) throw ShapeError("backward expects a [batch x P] input");
    return backward_features(a, b, b.features(batch_raw.matrix()), labels);
}

void step(std::span<DenseTensor* const> params, const GradientSet& grads, OptimizerState& state,
          const TrainConfig& config) {
    if (params.size() != grads.size())
        throw ShapeError("step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i]->shape() != grads.grads[i].shape())
            throw ShapeError("step: parameter " + std::to_string(i) + " has shape " + params[i]->shape().to_string() +
                             " but its gradient has " + grads.grads[i].shape().to_string());

    const double lr = config.learning_rate;
    if (config.optimizer == Optimizer::SGD) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto p = params[i]->mutable_values();
            const auto g = grads.grads[i].values();
            for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
        }
        ++state.steps;
        return;
    }

    if (state.m.empty()) {
        for (const DenseTensor* p : params) {
            state.m.emplace_back(p->size(), 0.0);
            state.v.emplace_back(p->size(), 0.0);
        }
    }
    ++state.steps;
    const double t = static_cast<double>(state.steps);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i]->mutable_values();
        const auto g = grads.grads[i].values();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config.adam_eps);
        }
    }
}

Evaluation evaluate(const Adapter& a, const FrozenBackbone& b, const Dataset& d) {
    const RowMatrixXd logits = forward_features(a, b, b.features(d.inputs.matrix()));
    Evaluation e;
    e.loss = cross_entropy(logits, d.labels);
    e.accuracy = static_cast<double>(correct_count(logits, d.labels)) / static_cast<double>(d.size());
    return e;
}

TrainReport train(Adapter& a, const FrozenBackbone& b, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& config) {
    config.validate();
    train_set.validate();
    test_set.validate();
    if (train_set.size() == 0 || test_set.size() == 0) throw ConfigError("train and test sets must be nonempty");
    validate(a, b.D(), b.Q());
    const auto t0 = std::chrono::steady_clock::now();

    const RowMatrixXd Xtr = b.features(train_set.inputs.matrix());
    const RowMatrixXd Xte = b.features(test_set.inputs.matrix());

    TrainReport report;
    report.adapter_kind = kind(a);
    report.param_count = param_count(a);
    report.seed = config.seed;

    SplitMix64 shuffle_rng(derive_seed(config.seed, 6));
    SplitMix64 latent_rng(derive_seed(config.seed, 7));
    auto* guide = std::get_if<TensorGuideAdapter>(&a);
    const bool resample = guide && guide->resample_per_batch;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    OptimizerState state;
    const std::vector<DenseTensor*> params = param_refs(a);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        if (config.shuffle)
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double loss_sum = 0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, stop - start);
            const RowMatrixXd xb = rows_of(Xtr, idx);
            std::vector<std::uint32_t> yb(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = train_set.labels[idx[i]];

            DenseTensor z;
            if (resample) z = init_gaussian(guide->z.shape(), latent_rng.next());
            const BackwardResult r = backward_features(a, b, xb, yb, resample ? &z : nullptr);
            if (!std::isfinite(r.loss))
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
            loss_sum += r.loss * static_cast<double>(idx.size());
            correct += correct_count(r.logits, yb);
            step(params, r.grads, state, config);
        }
        for (const DenseTensor* p : params)
            for (double v : p->values())
                if (!std::isfinite(v))
                    throw NumericError("non-finite parameter after epoch " + std::to_string(epoch) +
                                       "; lower the learning rate");

        const RowMatrixXd test_logits = forward_features(a, b, Xte);
        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / static_cast<double>(train_set.size());
        m.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
        m.test_loss = cross_entropy(test_logits, test_set.labels);
        m.test_acc = static_cast<double>(correct_count(test_logits, test_set.labels)) /
                     static_cast<double>(test_set.size());
        m.exp_loss = std::exp(m.test_loss);
        if (!std::isfinite(m.test_loss) || !std::isfinite(m.exp_loss))
            throw NumericError("non-finite test loss at epoch " + std::to_string(epoch));
        report.epochs.push_back(m);
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

double finite_diff_check(const Adapter& a, const FrozenBackbone& b, const Dataset& sample, double eps) {
    if (!(eps > 0)) throw ConfigError("finite_diff_check: eps must be > 0");
    const RowMatrixXd x = b.features(sample.inputs.matrix());
    const GradientSet analytic = backward_features(a, b, x, sample.labels).grads;

    Adapter probe = a;
    const std::vector<DenseTensor*> params = param_refs(probe);
    double worst = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i]->mutable_values();
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double keep = p[j];
            p[j] = keep + eps;
            const double up = cross_entropy(forward_features(probe, b, x), sample.labels);
            p[j] = keep - eps;
            const double down = cross_entropy(forward_features(probe, b, x), sample.labels);
            p[j] = keep;
            const double numeric = (up - down) / (2 * eps);
            const double err = std::abs(analytic.grads[i][j] - numeric) / std::max(std::abs(numeric), 1e-8);
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace ttguide
