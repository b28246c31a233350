#include "ttguide/tasks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "ttguide/rng.hpp"

namespace ttguide {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kGap = 1.5;  // half-length of the avoided-crossing bridge, px

double feather(double d) {
    if (d <= 0.5) return 1.0;
    if (d < 1.5) return 1.5 - d;
    return 0.0;
}

// Parallel lines n.p = phase + k * spacing.
struct LineFamily {
    double nx, ny, spacing, phase;

    double coord(double x, double y) const { return nx * x + ny * y - phase; }
    double index(double x, double y) const { return std::round(coord(x, y) / spacing); }
    double distance(double x, double y) const { return std::abs(coord(x, y) - index(x, y) * spacing); }
};

LineFamily random_family(SplitMix64& rng, double angle_lo, double angle_hi) {
    const double a = (angle_lo + (angle_hi - angle_lo) * rng.uniform()) * kDeg;
    const double spacing = 6.0 + 6.0 * rng.uniform();
    return LineFamily{std::cos(a), std::sin(a), spacing, spacing * rng.uniform()};
}

void draw_single(std::span<double> img, SplitMix64& rng) {
    const LineFamily f = random_family(rng, 35.0, 55.0);
    for (std::size_t r = 0; r < kQdSide; ++r)
        for (std::size_t c = 0; c < kQdSide; ++c)
            img[r * kQdSide + c] = feather(f.distance(static_cast<double>(c), static_cast<double>(r)));
}

void draw_double(std::span<double> img, SplitMix64& rng) {
    const LineFamily steep = random_family(rng, 10.0, 30.0);
    const LineFamily shallow = random_family(rng, 60.0, 80.0);
    // bridge direction: perpendicular to the bisector of the two normals
    double bx = -(steep.ny + shallow.ny), by = steep.nx + shallow.nx;
    const double bn = std::hypot(bx, by);
    bx /= bn;
    by /= bn;
    const double det = steep.nx * shallow.ny - steep.ny * shallow.nx;

    for (std::size_t r = 0; r < kQdSide; ++r)
        for (std::size_t c = 0; c < kQdSide; ++c) {
            const double x = static_cast<double>(c), y = static_cast<double>(r);
            // nearest lattice crossing
            const double t1 = steep.phase + steep.index(x, y) * steep.spacing;
            const double t2 = shallow.phase + shallow.index(x, y) * shallow.spacing;
            const double qx = (t1 * shallow.ny - steep.ny * t2) / det;
            const double qy = (steep.nx * t2 - t1 * shallow.nx) / det;
            const double dx = x - qx, dy = y - qy;

            double v = 0.0;
            if (std::hypot(dx, dy) > kGap) v = std::max(feather(steep.distance(x, y)), feather(shallow.distance(x, y)));
            const double along = std::clamp(dx * bx + dy * by, -kGap, kGap);
            v = std::max(v, feather(std::hypot(dx - along * bx, dy - along * by)));
            img[r * kQdSide + c] = v;
        }
}

} // namespace

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::uint32_t y : labels)
        if (y < num_classes) ++counts[y];
    return counts;
}

void Dataset::validate() const {
    if (labels.empty()) throw ShapeError("dataset is empty");
    if (inputs.shape().rank() != 2 || inputs.rows() != labels.size())
        throw ShapeError("dataset inputs " + inputs.shape().to_string() + " do not match " +
                         std::to_string(labels.size()) + " labels");
    for (std::uint32_t y : labels)
        if (y >= num_classes)
            throw ShapeError("label " + std::to_string(y) + " out of range [0, " + std::to_string(num_classes) + ")");
}

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
    Dataset out;
    out.num_classes = num_classes;
    out.task = task;
    out.seed = seed;
    out.noise_level = noise_level;
    const std::size_t P = inputs.cols();
    std::vector<double> v;
    v.reserve(idx.size() * P);
    for (std::size_t i : idx) {
        if (i >= labels.size()) throw ShapeError("subset index " + std::to_string(i) + " out of range");
        const auto row = inputs.values().subspan(i * P, P);
        v.insert(v.end(), row.begin(), row.end());
        out.labels.push_back(labels[i]);
    }
    if (!idx.empty()) out.inputs = DenseTensor(Shape{idx.size(), P}, std::move(v));
    return out;
}

Dataset gen_quantum_dot(std::size_t n, double noise_level, std::uint64_t seed) {
    if (n == 0 || n % 2 != 0) throw ConfigError("gen_quantum_dot needs an even, positive n (got " + std::to_string(n) + ")");
    if (!(noise_level >= 0.0) || !std::isfinite(noise_level))
        throw ConfigError("noise_level must be finite and >= 0");

    std::vector<double> pixels(n * kQdPixels);
    Dataset d;
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        SplitMix64 rng(derive_seed(seed, i));
        std::span<double> img(pixels.data() + i * kQdPixels, kQdPixels);
        d.labels[i] = static_cast<std::uint32_t>(i % 2);
        if (d.labels[i] == 0)
            draw_single(img, rng);
        else
            draw_double(img, rng);
        if (noise_level > 0)
            for (double& p : img) p = std::clamp(p + noise_level * rng.normal(), 0.0, 1.0);
    }
    d.inputs = DenseTensor(Shape{n, kQdPixels}, std::move(pixels));
    d.num_classes = 2;
    d.task = "quantum-dot";
    d.seed = seed;
    d.noise_level = noise_level;
    return d;
}

Dataset gen_wide_output(std::size_t n, std::size_t D_raw, std::size_t Q, double noise_level, std::uint64_t seed) {
    if (Q < 2) throw ConfigError("gen_wide_output needs Q >= 2");
    if (n < Q) throw ConfigError("gen_wide_output needs n >= Q (got n=" + std::to_string(n) + ", Q=" + std::to_string(Q) + ")");
    if (D_raw == 0) throw ConfigError("gen_wide_output needs D_raw >= 1");
    if (!(noise_level >= 0.0) || !std::isfinite(noise_level))
        throw ConfigError("noise_level must be finite and >= 0");

    const DenseTensor proto = init_gaussian(Shape{Q, D_raw}, derive_seed(seed, 1));
    SplitMix64 noise(derive_seed(seed, 2));
    std::vector<double> v(n * D_raw);
    Dataset d;
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t q = i % Q;
        d.labels[i] = static_cast<std::uint32_t>(q);
        for (std::size_t j = 0; j < D_raw; ++j) {
            double x = proto(q, j);
            if (noise_level > 0) x += noise_level * noise.normal();
            v[i * D_raw + j] = x;
        }
    }
    d.inputs = DenseTensor(Shape{n, D_raw}, std::move(v));
    d.num_classes = Q;
    d.task = "wide-output";
    d.seed = seed;
    d.noise_level = noise_level;
    return d;
}

FrozenBackbone make_backbone(std::size_t P, std::size_t D, std::size_t Q, std::uint64_t seed) {
    if (P == 0 || D == 0 || Q == 0) throw ConfigError("backbone dims must be positive");
    FrozenBackbone b;
    b.feature_map = init_gaussian(Shape{P, D}, derive_seed(seed, 11));
    b.feature_map.mutable_matrix() /= std::sqrt(static_cast<double>(P));
    b.W0 = init_gaussian(Shape{D, Q}, derive_seed(seed, 12));
    b.W0.mutable_matrix() /= std::sqrt(static_cast<double>(D));
    return b;
}

std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train_fraction must lie strictly between 0 and 1");
    d.validate();

    std::vector<std::vector<std::size_t>> by_class(d.num_classes);
    for (std::size_t i = 0; i < d.size(); ++i) by_class[d.labels[i]].push_back(i);

    std::vector<std::size_t> tr, te;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        SplitMix64 rng(derive_seed(seed, c));
        for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
        const auto k = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
        tr.insert(tr.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
        te.insert(te.end(), members.begin() + static_cast<std::ptrdiff_t>(k), members.end());
    }
    if (tr.empty() || te.empty())
        throw ConfigError("train_fraction " + std::to_string(train_fraction) + " leaves an empty split for " +
                          std::to_string(d.size()) + " samples");
    std::sort(tr.begin(), tr.end());
    std::sort(te.begin(), te.end());
    return {d.subset(tr), d.subset(te)};
}

} // namespace ttguide
