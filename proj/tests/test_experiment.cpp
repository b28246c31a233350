#include <doctest.h>

#include "ttguide/experiment.hpp"

using namespace ttguide;

namespace {

// sum_k r_{k-1} n_k m_k r_k, written out independently of tt_param_count
std::size_t core_sum(const TTFormat& f) {
    std::size_t s = 0;
    for (std::size_t k = 0; k < f.in_dims.size(); ++k) s += f.ranks[k] * f.in_dims[k] * f.out_dims[k] * f.ranks[k + 1];
    return s;
}

std::size_t count_of(const std::string& p, std::size_t row = 0) {
    return params_report(preset(p)).at("adapters").at(row).at("params").get<std::size_t>();
}

std::size_t out_prod(const TTFormat& f) {
    std::size_t p = 1;
    for (auto m : f.out_dims) p *= m;
    return p;
}

} // namespace

TEST_CASE("every enabled preset validates; disabled ones explain themselves") {
    std::size_t disabled = 0;
    for (const auto& name : preset_names()) {
        const ExperimentConfig c = preset(name);
        CHECK(c.preset == name);
        if (c.enabled) {
            CHECK_NOTHROW(c.validate());
        } else {
            ++disabled;
            CHECK_FALSE(c.note.empty());
            CHECK_THROWS_AS(c.validate(), ConfigError);
            CHECK_THROWS_AS(params_report(c), ConfigError);
        }
    }
    CHECK(disabled == 2);
    CHECK_THROWS_AS(preset("no-such-preset"), ConfigError);
}

TEST_CASE("parameter accounting for the shipped shape rows") {
    CHECK(count_of("table3-lora") == 51025);
    CHECK(count_of("table2-m2048") - count_of("table2-m1024") == 16);
    CHECK(count_of("table2-m4096") - count_of("table2-m2048") == 64);
    CHECK(count_of("table3-m2") - count_of("table3-m1") == 5488);

    const std::size_t M[] = {1024, 2048, 4096};
    const std::size_t want[] = {526336, 1052672, 2105344};
    const ExperimentConfig t2 = preset("table2");
    for (std::size_t i = 0; i < 3; ++i) {
        const AdapterSpec& a = t2.adapters[i];
        CHECK(a.M == M[i]);
        CHECK(out_prod(a.tt) == want[i]);
        CHECK(out_prod(a.tt) == M[i] * (512 + 2));
        CHECK(count_of("table2", i) == core_sum(a.tt));
    }
    const ExperimentConfig t3 = preset("table3");
    for (std::size_t i = 1; i < 4; ++i) CHECK(out_prod(t3.adapters[i].tt) == 8 * (768 + 50257));
}

TEST_CASE("comparison presets have matched budgets") {
    const ExperimentConfig c = preset("qd-compare");
    REQUIRE(c.adapters.size() == 3);
    std::vector<std::size_t> n;
    for (std::size_t i = 0; i < 3; ++i) n.push_back(count_of("qd-compare", i));
    CHECK(n[0] == 4 * (64 + 2));
    CHECK(n[1] == core_sum(c.adapters[1].tt) + core_sum(c.adapters[1].tt2));
    CHECK(n[2] == core_sum(c.adapters[2].tt));
    const auto [lo, hi] = std::minmax_element(n.begin(), n.end());
    CHECK(static_cast<double>(*hi) <= 1.10 * static_cast<double>(*lo));

    const std::size_t w16 = count_of("qd-width", 0), w64 = count_of("qd-width", 1);
    CHECK(w64 > w16);
    CHECK(static_cast<double>(w64) < 1.10 * static_cast<double>(w16));

    const std::size_t lora = count_of("wide-compare", 0), tg = count_of("wide-compare", 1);
    CHECK(lora == 32 + 200);
    CHECK(static_cast<double>(tg) <= 0.60 * static_cast<double>(lora));
}

TEST_CASE("config json: overrides, echo round-trip, strict keys") {
    const ExperimentConfig base = preset("small");
    const json patch = json::parse(R"({"train":{"lr":0.01,"epochs":2},"task":{"noise_level":0.1},"output":{"dir":"x"}})");
    const ExperimentConfig c = config_from_json(patch, base);
    CHECK(c.train.learning_rate == 0.01);
    CHECK(c.train.epochs == 2);
    CHECK(c.task.noise_level == 0.1);
    CHECK(c.out_dir == "x");
    CHECK(c.adapters.size() == base.adapters.size());

    const ExperimentConfig again = config_from_json(to_json(c));
    CHECK(to_json(again).dump() == to_json(c).dump());

    const ExperimentConfig swapped = config_from_json(json::parse(R"({"preset":"qd-lora"})"), base);
    CHECK(swapped.adapters.size() == 1);
    CHECK(swapped.backbone.P == kQdPixels);

    CHECK_THROWS_AS(config_from_json(json::parse(R"({"trian":{}})"), base), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"train":{"learning_rate":1}})"), base), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"train":{"epochs":-1}})"), base), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"adapters":[{"type":"lora","rank":2}]})"), base), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"bounds":{"delta":0}})"), base), ConfigError);
}

TEST_CASE("validation names the broken requirement") {
    ExperimentConfig c = preset("small");
    c.task.noise_level = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);

    c = preset("small");
    c.adapters[2].tt.out_dims = {6, 5};  // 30 != M(D+Q) = 36
    try {
        c.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("D*M + M*Q") != std::string::npos);
    }

    c = preset("small");
    c.adapters[0].type = "mlp";
    CHECK_THROWS_AS(c.validate(), ConfigError);

    c = preset("small");
    c.adapters.push_back(c.adapters[0]);
    CHECK_THROWS_AS(c.validate(), ConfigError);

    c = preset("qd-lora");
    c.backbone.Q = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("bounds report") {
    BoundInputs b = bounds_from_json(json::parse(R"({"N":100,"delta":0.1})"));
    const json r = bounds_report(b, 1.0);
    CHECK(std::abs(r.at("generalization").get<double>() - 0.307298) <= 1e-6);
    CHECK(r.at("optimization").get<double>() == 1.0);  // t = 0 gives C0

    b = bounds_from_json(json::parse(R"({"C0":1,"lambda_min":1,"t":1})"));
    CHECK(std::abs(bounds_report(b, 1.0).at("optimization").get<double>() - std::exp(-1.0)) <= 1e-9);

    b = bounds_from_json(json::parse(R"({"L_ce":2,"C1":1,"C2":1,"L_sigma":1,"eps_tt":0.1})"));
    CHECK(std::abs(bounds_report(b, 16).at("approximation").get<double>() - 0.9) <= 1e-12);

    CHECK_THROWS_AS(bounds_from_json(json::parse(R"({"N":"many"})")), ConfigError);
    CHECK_THROWS_AS(bounds_from_json(json::parse(R"([1,2])")), ConfigError);
    CHECK_THROWS_AS(bounds_from_json(json::parse(R"({"kappa":-1})")), ConfigError);
}

TEST_CASE("small preset end to end") {
    ExperimentConfig c = preset("small");
    const PreparedData d = prepare(c);
    CHECK(d.train.size() + d.test.size() == c.task.n);

    const RunOutput a = run_one(c, c.adapters[2], d, 3);
    const RunOutput b = run_one(c, c.adapters[2], d, 3);
    CHECK(a.report.epochs.size() == c.train.epochs);
    CHECK(adapter_to_json(a.adapter).dump() == adapter_to_json(b.adapter).dump());
    CHECK(metrics_csv(a.report) == metrics_csv(b.report));
    const RunOutput other = run_one(c, c.adapters[2], d, 4);
    CHECK(metrics_csv(a.report) != metrics_csv(other.report));

    const auto rows = run_compare(c, {1, 2});
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
        CHECK(r.seeds == std::vector<std::uint64_t>{1, 2});
        CHECK(r.test_acc.size() == 2);
        CHECK(r.mean_exp_loss() > 0);
    }
    CHECK(compare_json(rows).at(0).at("model") == "lora");

    const json ntk = ntk_report(c);
    CHECK(ntk.at("psd") == true);
    CHECK(ntk.at("adapters").size() == 3);
    CHECK(ntk.at("adapters").at(2).at("factorized_lower_bound").at("holds") == true);
    CHECK(ntk.dump() == ntk_report(c).dump());

    c.ntk.samples = 1000;
    CHECK_THROWS_AS(ntk_report(c), ConfigError);  // more samples than training rows

    c.task.n = 4000;
    c.ntk.samples = 3000;
    c.adapters = {c.adapters[0]};
    c.adapters[0].r = 4000;  // 3000 x 36000 Jacobian
    CHECK_THROWS_AS(ntk_report(c), CapError);
}
