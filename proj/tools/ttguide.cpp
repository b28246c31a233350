#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

#include "ttguide/experiment.hpp"

using namespace ttguide;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string preset;
    std::string config;
    std::string out;
    std::string adapter;
    std::string data;
    std::optional<double> noise, lr;
    std::optional<std::size_t> n, epochs, batch, samples;
    std::optional<std::uint64_t> data_seed;
    std::vector<std::uint64_t> seeds;
};

void add_common(CLI::App* sub, Common& c, const std::string& default_preset, bool training) {
    c.preset = default_preset;
    sub->add_option("--preset", c.preset, "named preset (see `params --list`)")->capture_default_str();
    sub->add_option("--config", c.config, "JSON config; its keys override the preset");
    sub->add_option("--out", c.out, "output directory (beats TTGUIDE_OUT and the config)");
    sub->add_option("--noise", c.noise, "task noise level");
    sub->add_option("--n", c.n, "number of generated samples");
    sub->add_option("--data-seed", c.data_seed, "task seed");
    sub->add_option("--data", c.data, "read this dataset file instead of generating");
    if (training) {
        sub->add_option("--adapter", c.adapter, "only run the adapter with this label");
        sub->add_option("--lr", c.lr, "learning rate");
        sub->add_option("--epochs", c.epochs, "epochs");
        sub->add_option("--batch", c.batch, "batch size");
        sub->add_option("--seeds", c.seeds, "comma-separated seeds, run in order")->delimiter(',');
    }
}

ExperimentConfig resolve(const Common& o) {
    ExperimentConfig c = preset(o.preset);
    if (!o.config.empty()) c = config_from_json(read_json(o.config), c);
    if (const char* env = std::getenv("TTGUIDE_OUT"); env && *env) c.out_dir = env;
    if (!o.out.empty()) c.out_dir = o.out;
    if (o.noise) c.task.noise_level = *o.noise;
    if (o.n) c.task.n = *o.n;
    if (o.data_seed) c.task.seed = *o.data_seed;
    if (!o.data.empty()) c.task.data_file = o.data;
    if (o.lr) c.train.learning_rate = *o.lr;
    if (o.epochs) c.train.epochs = *o.epochs;
    if (o.batch) c.train.batch_size = *o.batch;
    if (o.samples) c.ntk.samples = *o.samples;
    if (!o.adapter.empty()) {
        std::vector<AdapterSpec> keep;
        for (const auto& a : c.adapters)
            if (a.name() == o.adapter) keep.push_back(a);
        if (keep.empty()) throw ConfigError("no adapter labelled '" + o.adapter + "' in preset/config");
        c.adapters = keep;
    }
    return c;
}

std::vector<std::uint64_t> seeds_of(const Common& o, const ExperimentConfig& c) {
    return o.seeds.empty() ? std::vector<std::uint64_t>{c.train.seed} : o.seeds;
}

int cmd_gen_data(const Common& o, const std::string& file) {
    ExperimentConfig c = resolve(o);
    if (!c.task.data_file.empty()) throw ConfigError("gen-data generates; drop --data / task.data_file");
    c.validate();
    const Dataset d = generate_task(c.task, c.backbone.Q);
    const fs::path path = file.empty() ? fs::path(c.out_dir) / (c.task.name + ".bin") : fs::path(file);
    write_dataset(path, d);
    std::cout << "wrote " << d.size() << " samples (P=" << d.input_width() << ", Q=" << d.num_classes << ") to "
              << path.string() << "\n";
    return 0;
}

int cmd_train(const Common& o) {
    const ExperimentConfig c = resolve(o);
    const PreparedData data = prepare(c);
    const fs::path root(c.out_dir);
    write_json(root / "config.json", to_json(c));
    for (const AdapterSpec& spec : c.adapters) {
        for (std::uint64_t s : seeds_of(o, c)) {
            const RunOutput r = run_one(c, spec, data, s);
            const fs::path dir = root / spec.name() / ("seed" + std::to_string(s));
            write_text(dir / "metrics.csv", metrics_csv(r.report));
            write_json(dir / "summary.json", report_summary(r.report));
            write_json(dir / "adapter.json", adapter_to_json(r.adapter));
            const EpochMetrics& e = r.report.epochs.back();
            std::cout << spec.name() << " seed " << s << ": param_count=" << r.report.param_count
                      << " test_acc=" << format_double(e.test_acc) << " test_loss=" << format_double(e.test_loss)
                      << " (" << format_double(r.report.wall_seconds) << " s)\n";
        }
    }
    return 0;
}

int cmd_ntk(const Common& o) {
    const ExperimentConfig c = resolve(o);
    const json report = ntk_report(c);
    write_json(fs::path(c.out_dir) / "ntk.json", report);
    for (const auto& r : report.at("adapters")) {
        std::cout << r.at("model").get<std::string>() << ": params=" << r.at("param_count")
                  << " lambda_min=" << r.at("lambda_min") << " lambda_max=" << r.at("lambda_max")
                  << " kappa=" << r.at("kappa") << " psd=" << r.at("psd") << "\n";
    }
    return 0;
}

int cmd_params(const Common& o, bool list) {
    if (list) {
        for (const auto& n : preset_names()) {
            const ExperimentConfig c = preset(n);
            std::cout << n << (c.enabled ? "" : "  [" + c.note + "]") << "\n";
        }
        return 0;
    }
    const ExperimentConfig c = resolve(o);
    const json report = params_report(c);
    std::printf("%-24s %-12s %12s  %s\n", "model", "kind", "params", "complexity");
    for (const auto& r : report.at("adapters")) {
        std::printf("%-24s %-12s %12zu  %s\n", r.at("model").get<std::string>().c_str(),
                    r.at("kind").get<std::string>().c_str(), r.at("params").get<std::size_t>(),
                    r.at("complexity").get<std::string>().c_str());
    }
    return 0;
}

int cmd_bounds(const Common& o, const std::string& constants, std::optional<double> M) {
    BoundInputs b;
    double m = 1.0;
    if (!constants.empty()) {
        json j = read_json(constants);
        if (!j.is_object()) throw ConfigError(constants + ": expected a JSON object of constants");
        if (j.contains("M")) {
            if (!j.at("M").is_number()) throw ConfigError(constants + ": M must be a number");
            m = j.at("M").get<double>();
            j.erase("M");
        }
        b = bounds_from_json(j, b);
    }
    if (M) m = *M;
    if (!(m > 0)) throw ConfigError("M must be positive");
    const json report = bounds_report(b, m);
    std::string dir = o.out;
    if (dir.empty())
        if (const char* env = std::getenv("TTGUIDE_OUT"); env && *env) dir = env;
    if (!dir.empty()) write_json(fs::path(dir) / "bounds.json", report);
    std::cout << report.dump(2) << "\n";
    return 0;
}

int cmd_compare(const Common& o) {
    const ExperimentConfig c = resolve(o);
    const auto seeds = seeds_of(o, c);
    const auto rows = run_compare(c, seeds);
    const json j = compare_json(rows);
    const fs::path root(c.out_dir);
    write_json(root / "compare.json", j);
    std::string csv = "model,kind,params,loss,acc,exp_loss\n";
    for (const auto& r : rows)
        csv += r.label + ',' + r.kind + ',' + std::to_string(r.param_count) + ',' + format_double(r.mean_loss()) + ',' +
               format_double(r.mean_acc()) + ',' + format_double(r.mean_exp_loss()) + '\n';
    write_text(root / "compare.csv", csv);
    std::printf("%-20s %8s %10s %8s %10s\n", "model", "params", "loss", "acc", "exp_loss");
    for (const auto& r : rows)
        std::printf("%-20s %8zu %10.4f %8.4f %10.4f\n", r.label.c_str(), r.param_count, r.mean_loss(), r.mean_acc(),
                    r.mean_exp_loss());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"TensorGuide, LoRA and TT-LoRA adapters on a frozen backbone"};
    app.require_subcommand(1);

    Common gen, tr, ntk, par, bnd, cmp;
    std::string gen_file, constants;
    std::optional<double> bound_M;
    bool list = false;

    auto* s_gen = app.add_subcommand("gen-data", "generate a dataset file and its JSON sidecar");
    add_common(s_gen, gen, "qd", false);
    s_gen->add_option("--file", gen_file, "dataset path (default <out>/<task>.bin)");

    auto* s_train = app.add_subcommand("train", "train each configured adapter; writes metrics.csv, summary.json");
    add_common(s_train, tr, "qd-compare", true);

    auto* s_ntk = app.add_subcommand("ntk", "empirical NTK spectra and bound evaluations");
    add_common(s_ntk, ntk, "qd-compare", false);
    s_ntk->add_option("--samples", ntk.samples, "number of training inputs in the kernel");

    auto* s_params = app.add_subcommand("params", "trainable-parameter counts per adapter");
    add_common(s_params, par, "qd-compare", false);
    s_params->add_flag("--list", list, "list presets");

    auto* s_bounds = app.add_subcommand("bounds", "evaluate the three bounds from a constants file");
    s_bounds->add_option("constants", constants, "JSON file of constants");
    s_bounds->add_option("--M", bound_M, "hidden width for the approximation bound");
    s_bounds->add_option("--out", bnd.out, "also write bounds.json here");

    auto* s_cmp = app.add_subcommand("compare", "LoRA / TT-LoRA / TensorGuide side by side over seeds");
    add_common(s_cmp, cmp, "qd-compare", true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*s_gen) return cmd_gen_data(gen, gen_file);
        if (*s_train) return cmd_train(tr);
        if (*s_ntk) return cmd_ntk(ntk);
        if (*s_params) return cmd_params(par, list);
        if (*s_bounds) return cmd_bounds(bnd, constants, bound_M);
        if (*s_cmp) return cmd_compare(cmp);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const CapError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
