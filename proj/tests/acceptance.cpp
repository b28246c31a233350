// One PASS/FAIL line per acceptance criterion. Criteria 6-8 are soft: they print
// FAIL (soft) without failing the run. argv[1], if given, is the CLI binary used
// for the determinism check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "tt_oracle.hpp"
#include "ttguide/experiment.hpp"

using namespace ttguide;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::size_t count_of(const std::string& p, std::size_t row = 0) {
    return params_report(preset(p)).at("adapters").at(row).at("params").get<std::size_t>();
}

double rel_frob(const DenseTensor& a, const DenseTensor& b) {
    if (a.size() != b.size()) return INFINITY;
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / (den > 0 ? std::sqrt(den) : 1.0);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

Outcome c1_param_deltas() {
    const long d1 = long(count_of("table2-m2048")) - long(count_of("table2-m1024"));
    const long d2 = long(count_of("table2-m4096")) - long(count_of("table2-m2048"));
    const long d3 = long(count_of("table3-m2")) - long(count_of("table3-m1"));
    return {d1 == 16 && d2 == 64 && d3 == 5488,
            "deltas " + std::to_string(d1) + ", " + std::to_string(d2) + ", " + std::to_string(d3)};
}

Outcome c2_shape_identity() {
    const ExperimentConfig c = preset("table2");
    const std::size_t want[] = {526336, 1052672, 2105344};
    bool ok = c.adapters.size() == 3;
    std::string d;
    for (std::size_t i = 0; ok && i < 3; ++i) {
        const AdapterSpec& a = c.adapters[i];
        ok = validate_adapter_format(a.tt, 512, 2, a.M, a.tt.in_size()).ok && a.tt.out_size() == want[i] &&
             a.tt.out_size() == a.M * (512 + 2);
        d += std::to_string(a.tt.out_size()) + (i < 2 ? ", " : "");
    }
    return {ok, "prod(out_dims) = " + d};
}

Outcome c3_gradients() {
    const ExperimentConfig c = preset("small");
    const PreparedData data = prepare(c);
    const Dataset sample = data.train.subset({0, 1, 2, 3, 4, 5});
    double worst = 0;
    for (std::uint64_t seed : {0u, 1u, 2u})
        for (const AdapterSpec& s : c.adapters)
            worst = std::max(worst, finite_diff_check(build_adapter(s, c.backbone, seed), data.backbone, sample));
    return {worst <= 1e-5, "max relative error " + fmt(worst)};
}

Outcome c4_tt_fidelity() {
    double svd_worst = 0, apply_worst = 0;
    for (std::uint64_t i = 0; i < 50; ++i) {
        const TTFormat f = test::random_format(1000 + i, 16);
        const DenseTensor w = init_gaussian(Shape{f.in_size(), f.out_size()}, derive_seed(i, 3));
        const auto tt = tt_svd(w, f.in_dims, f.out_dims);
        svd_worst = std::max(svd_worst, rel_frob(tt_materialize(tt), w));
    }
    for (std::uint64_t i = 0; i < 200; ++i) {
        const TTFormat f = test::random_format(5000 + i, 16);
        const auto tt = tt_init(f, derive_seed(i, 1));
        const DenseTensor z = init_gaussian(Shape{1, f.in_size()}, derive_seed(i, 2));
        const DenseTensor y = tt_apply(tt, z);
        const DenseTensor want = test::row_times(z, test::brute_force_materialize(tt));
        apply_worst = std::max(apply_worst, rel_frob(y, want));
        apply_worst = std::max(apply_worst, rel_frob(tt_materialize(tt), test::brute_force_materialize(tt)));
    }
    return {svd_worst <= 1e-10 && apply_worst <= 1e-10,
            "tt_svd round trip " + fmt(svd_worst) + ", tt_apply vs dense " + fmt(apply_worst)};
}

Outcome c5_ntk() {
    double asym = 0, min_eig = INFINITY, rec = 0, lin = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const ExperimentConfig c = preset("small");
        const FrozenBackbone b = build_backbone(c.backbone);
        const DenseTensor x = init_gaussian(Shape{10, c.backbone.P}, derive_seed(seed, 50));
        for (const AdapterSpec& s : c.adapters)
            for (std::size_t q = 0; q < c.backbone.Q; ++q) {
                const NTKMatrix k = ntk_matrix(build_adapter(s, c.backbone, seed), b, x, q);
                asym = std::max(asym, k.max_asymmetry());
                const EigResult e = eig_sym<double>(k.data.matrix());
                min_eig = std::min(min_eig, e.values.minCoeff());
                const Eigen::MatrixXd r = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
                rec = std::max(rec, (r - k.data.matrix()).cwiseAbs().maxCoeff() / std::max(1.0, k.max_diagonal()));
            }
        // W2 = 0 at init, so the LoRA logit is linear in W2 with features x W1
        const LoRAAdapter l = make_lora(c.backbone.D, c.backbone.Q, 3, seed);
        const NTKMatrix k = ntk_matrix(Adapter{l}, b, x, 0);
        const Eigen::MatrixXd phi = b.features(x.matrix()) * l.W1.matrix();
        lin = std::max(lin, (k.data.matrix() - phi * phi.transpose()).cwiseAbs().maxCoeff());
    }
    return {asym <= 1e-10 && min_eig >= -1e-8 && lin <= 1e-10 && rec <= 1e-10,
            "asymmetry " + fmt(asym) + ", min eigenvalue " + fmt(min_eig) + ", linear-model gap " + fmt(lin) +
                ", reconstruction " + fmt(rec)};
}

const std::vector<std::uint64_t> kSeeds = {0, 1, 2};

Outcome c6_qd_ordering() {
    const auto rows = run_compare(preset("qd-compare"), kSeeds);
    double acc[3];
    std::size_t lo = SIZE_MAX, hi = 0;
    std::string d;
    for (std::size_t i = 0; i < 3; ++i) {
        acc[i] = rows[i].mean_acc();
        lo = std::min(lo, rows[i].param_count);
        hi = std::max(hi, rows[i].param_count);
        d += rows[i].label + " " + fmt(acc[i]) + " @" + std::to_string(rows[i].param_count) + (i < 2 ? ", " : "");
    }
    const bool budget = double(hi) <= 1.10 * double(lo);
    return {budget && acc[2] >= acc[0] && acc[2] >= acc[1], "mean test acc " + d};
}

Outcome c7_width() {
    const auto rows = run_compare(preset("qd-width"), kSeeds);
    const bool grow = rows[1].param_count > rows[0].param_count &&
                      double(rows[1].param_count) < 1.10 * double(rows[0].param_count);
    return {grow && rows[1].mean_loss() <= rows[0].mean_loss(),
            "M=16 loss " + fmt(rows[0].mean_loss()) + " @" + std::to_string(rows[0].param_count) + ", M=64 loss " +
                fmt(rows[1].mean_loss()) + " @" + std::to_string(rows[1].param_count)};
}

Outcome c8_wide() {
    const auto rows = run_compare(preset("wide-compare"), kSeeds);
    const CompareRow &lora = rows[0], &tg = rows[1];
    const bool budget = double(tg.param_count) <= 0.60 * double(lora.param_count);
    return {budget && tg.mean_exp_loss() <= 1.02 * lora.mean_exp_loss(),
            "exp(CE) lora " + fmt(lora.mean_exp_loss()) + " @" + std::to_string(lora.param_count) + ", tensorguide " +
                fmt(tg.mean_exp_loss()) + " @" + std::to_string(tg.param_count)};
}

Outcome c9_bounds() {
    BoundInputs g;
    g.N = 100;
    g.delta = 0.1;
    BoundInputs a;
    a.L_ce = 2;
    a.eps_tt = 0.1;
    const double gen = generalization_bound(g), opt = optimization_bound(1, 1, 1), app = approximation_bound(a, 16);
    return {std::abs(gen - 0.307298) <= 1e-6 && std::abs(opt - std::exp(-1.0)) <= 1e-9 && std::abs(app - 0.9) <= 1e-12,
            "generalization " + format_double(gen) + ", optimization " + format_double(opt) + ", approximation " +
                format_double(app)};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), dir).string()] = ss.str();
    }
    return out;
}

Outcome c10_determinism(const std::string& cli) {
    if (cli.empty()) return {false, "no CLI path given"};
    const fs::path root = fs::temp_directory_path() / "ttguide_acceptance";
    fs::remove_all(root);
    const std::vector<std::pair<std::string, std::string>> runs = {
        {"gen-data", "gen-data --preset qd --n 100"},
        {"train", "train --preset small --seeds 0,1"},
        {"ntk", "ntk --preset small"},
    };
    std::size_t files = 0;
    for (const auto& [name, args] : runs) {
        std::map<std::string, std::string> snap[2];
        const fs::path out = root / name;
        for (int k = 0; k < 2; ++k) {
            const std::string cmd = "\"" + cli + "\" " + args + " --out \"" + out.string() + "\" > /dev/null";
            if (std::system(cmd.c_str()) != 0) return {false, name + " exited nonzero"};
            snap[k] = snapshot(out);
        }
        if (snap[0].empty() || snap[0] != snap[1]) return {false, name + " outputs differ between runs"};
        files += snap[0].size();
    }
    fs::remove_all(root);
    return {true, std::to_string(files) + " files byte-identical across repeated gen-data/train/ntk"};
}

} // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";
    const std::vector<std::tuple<int, bool, std::function<Outcome()>>> criteria = {
        {1, false, c1_param_deltas},
        {2, false, c2_shape_identity},
        {3, false, c3_gradients},
        {4, false, c4_tt_fidelity},
        {5, false, c5_ntk},
        {6, true, c6_qd_ordering},
        {7, true, c7_width},
        {8, true, c8_wide},
        {9, false, c9_bounds},
        {10, false, [&] { return c10_determinism(cli); }},
    };
    int hard_failures = 0;
    for (const auto& [id, soft, run] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const char* verdict = o.pass ? "PASS" : (soft ? "FAIL (soft)" : "FAIL");
        std::printf("criterion %2d: %s  %s  [%.1f s]\n", id, verdict, o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass && !soft) ++hard_failures;
    }
    return hard_failures == 0 ? 0 : 1;
}
