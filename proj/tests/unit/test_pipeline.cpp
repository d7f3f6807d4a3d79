// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "snrq/errors.hpp"
#include "snrq/linalg.hpp"
#include "snrq/matrix_io.hpp"
#include "snrq/pipeline.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using Catch::Matchers::WithinAbs;
using snrq::Matrix;
using snrq::RunConfig;

namespace {

RunConfig small_config(std::size_t depth = 3, std::size_t width = 12) {
    RunConfig cfg;
    cfg.network.depth = depth;
    cfg.network.width = width;
    cfg.network.input_dim = width;
    cfg.calibration.n_sequences = 64;
    cfg.calibration.heldout_sequences = 32;
    cfg.solver.threads = 1;
    cfg.seed = 5;
    return cfg;
}

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "snrq_test_pipeline" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("synthesized networks are deterministic and chained", "[pipeline]") {
    snrq::NetworkSpec spec;
    spec.depth = 4;
    spec.width = 32;
    spec.input_dim = 32;
    const auto a = snrq::synth_network(spec, 9);
    const auto b = snrq::synth_network(spec, 9);
    REQUIRE(a.depth() == 4);
    for (std::size_t l = 0; l < 4; ++l) {
        CHECK(a.layers[l] == b.layers[l]);
        CHECK(a.layers[l].rows() == 32);
        CHECK(a.layers[l].cols() == 32);
    }
    CHECK_FALSE(snrq::synth_network(spec, 10).layers[0] == a.layers[0]);

    snrq::ToyNetwork broken = a;
    broken.layers[2] = Matrix(32, 31);
    CHECK_THROWS_AS(broken.validate(), snrq::ShapeMismatch);
}

TEST_CASE("networks survive a save and load", "[pipeline]") {
    snrq::NetworkSpec spec;
    spec.depth = 2;
    spec.width = 8;
    spec.input_dim = 6;
    spec.nonlinearity = snrq::Nonlinearity::None;
    const auto net = snrq::synth_network(spec, 3);
    const fs::path dir = scratch("saved");
    snrq::save_network(net, dir);
    const auto back = snrq::load_network(dir);
    CHECK(back.nonlinearity == snrq::Nonlinearity::None);
    REQUIRE(back.depth() == 2);
    CHECK(back.layers[0] == net.layers[0]);
    CHECK(back.layers[1] == net.layers[1]);
    CHECK(back.input_dim() == 6);
}

TEST_CASE("forward_collect teacher and student inputs", "[pipeline]") {
    const RunConfig cfg = small_config(3, 8);
    const auto net = snrq::synth_network(cfg.network, cfg.seed);
    const Matrix inputs = snrq::calibration_inputs(cfg, 8);

    const auto first = snrq::forward_collect(net, inputs, {});
    CHECK(first.xf == first.xq);
    CHECK(first.xq == inputs);

    const std::vector<Matrix> lossless{net.layers[0]};
    const auto exact = snrq::forward_collect(net, inputs, lossless);
    CHECK(exact.xf == exact.xq);

    std::vector<Matrix> lossy{net.layers[0] + Matrix(8, 8, 0.05)};
    const auto shifted = snrq::forward_collect(net, inputs, lossy);
    CHECK(snrq::frobenius_norm(shifted.xf - shifted.xq) > 0.0);
}

TEST_CASE("config parsing", "[pipeline]") {
    const RunConfig d = snrq::parse_run_config("{}");
    CHECK(d.grid.bits == 3);
    CHECK(d.damping == 0.01);
    CHECK(d.alpha.alpha_value == 0.5);
    CHECK(d.alpha.beta_lambda == 5.0);
    CHECK(d.network.depth == 4);
    CHECK(d.network.width == 64);
    CHECK(d.calibration.n_sequences == 256);

    const RunConfig c = snrq::parse_run_config(R"({"bits": 2, "alpha_mode": "sample", "solver": "ksnrq",
        "beam_width": 4, "act_order": true, "seed": 77, "network": {"depth": 2, "width": 16},
        "calibration": {"n_sequences": 32}})");
    CHECK(c.grid.bits == 2);
    CHECK(c.alpha.mode == snrq::AlphaMode::Sampled);
    CHECK(c.solver.solver == snrq::SolverKind::KSnrq);
    CHECK(c.solver.beam_width == 4);
    CHECK(c.solver.act_order);
    CHECK(c.seed == 77);
    CHECK(c.network.input_dim == 16);
    CHECK(c.calibration.n_sequences == 32);

    const RunConfig again = snrq::parse_run_config(snrq::run_config_to_json(c));
    CHECK(snrq::run_config_to_json(again) == snrq::run_config_to_json(c));

    CHECK_THROWS_AS(snrq::parse_run_config(R"({"bitz": 3})"), snrq::InvalidSpec);
    CHECK_THROWS_AS(snrq::parse_run_config(R"({"network": {"height": 3}})"), snrq::InvalidSpec);
    CHECK_THROWS_AS(snrq::parse_run_config(R"({"bits": 12})"), snrq::InvalidSpec);
    CHECK_THROWS_AS(snrq::parse_run_config(R"({"alpha_value": 2})"), snrq::InvalidSpec);
    CHECK_THROWS_AS(snrq::parse_run_config(R"({"bits": "three"})"), snrq::InvalidSpec);
    CHECK_THROWS_AS(snrq::parse_run_config(R"({"group_size": 5})"), snrq::InvalidSpec);
    CHECK_THROWS_AS(snrq::parse_run_config("{"), snrq::InvalidSpec);
}

TEST_CASE("report records and proxy consistency", "[pipeline]") {
    RunConfig cfg = small_config();
    cfg.alpha.alpha_value = 0.4;
    const auto net = snrq::synth_network(cfg.network, cfg.seed);
    const auto report = snrq::quantize_network(net, cfg);
    REQUIRE(report.layers.size() == 3);

    const Matrix inputs = snrq::calibration_inputs(cfg, 12);
    std::vector<Matrix> prefix;
    double total = 0.0;
    for (const auto& lr : report.layers) {
        CHECK(lr.proxy_loss >= 0.0);
        CHECK(lr.alpha_used == 0.4);
        const auto batch = snrq::forward_collect(net, inputs, prefix);
        const auto stats = snrq::accumulate_stats(batch, cfg.alpha, cfg.damping);
        const double exact = snrq::proxy_loss(lr.dequant, snrq::shifted_target(net.layers[lr.index], stats),
                                              snrq::cholesky(stats.h));
        CHECK(std::abs(exact - lr.proxy_loss) <= 1e-9 * std::max(1.0, exact));
        prefix.push_back(lr.dequant);
        total += lr.proxy_loss;
    }
    CHECK_THAT(report.total_proxy_loss, WithinAbs(total, 1e-12));
    CHECK(report.layers[0].activation_mae == 0.0);
    CHECK(report.layers[1].activation_mae > 0.0);
    CHECK(report.heldout_output_mse > 0.0);
    CHECK_FALSE(snrq::heldout_inputs(cfg, 12) == snrq::calibration_inputs(cfg, 12));
}

TEST_CASE("lossless grid gives zero output error", "[pipeline]") {
    RunConfig cfg = small_config(3, 8);
    cfg.damping = 0.0;
    cfg.alpha.alpha_value = 0.7;
    cfg.network.nonlinearity = snrq::Nonlinearity::None;
    auto net = snrq::synth_network(cfg.network, cfg.seed);
    // Integer codes times a power-of-two scale, with ±3 in every row so the
    // refitted 3-bit symmetric grid reproduces the same scale.
    snrq::SeededRng rng(cfg.seed, 99);
    for (auto& w : net.layers) {
        for (std::size_t r = 0; r < w.rows(); ++r) {
            for (std::size_t c = 0; c < w.cols(); ++c) {
                w(r, c) = 0.125 * (static_cast<double>(rng.next_u64() % 7) - 3.0);
            }
            w(r, r % w.cols()) = 0.375;
        }
    }
    for (auto kind : {snrq::SolverKind::Snrq, snrq::SolverKind::KSnrq, snrq::SolverKind::Gptq}) {
        cfg.solver.solver = kind;
        const auto report = snrq::quantize_network(net, cfg);
        CHECK(report.calibration_output_mse == 0.0);
        CHECK(report.heldout_output_mse == 0.0);
    }
}

TEST_CASE("GPTQ and greedy agree at alpha zero without damping", "[pipeline]") {
    RunConfig cfg = small_config(3, 10);
    cfg.damping = 0.0;
    cfg.alpha.alpha_value = 0.0;
    cfg.network.nonlinearity = snrq::Nonlinearity::None;
    cfg.solver.act_order = true;
    const auto net = snrq::synth_network(cfg.network, cfg.seed);
    const auto greedy = snrq::quantize_network(net, cfg);
    cfg.solver.solver = snrq::SolverKind::Gptq;
    const auto gptq = snrq::quantize_network(net, cfg);
    for (std::size_t l = 0; l < 3; ++l) CHECK(greedy.layers[l].result.codes == gptq.layers[l].result.codes);
}

TEST_CASE("first layer ignores the alpha strategy", "[pipeline][property]") {
    RunConfig cfg = small_config(2, 10);
    const auto net = snrq::synth_network(cfg.network, cfg.seed);
    const auto ref = snrq::quantize_network(net, cfg).layers[0].result.codes;
    for (auto mode : {snrq::AlphaMode::Fixed, snrq::AlphaMode::ClosedForm, snrq::AlphaMode::Sampled}) {
        for (double a : {0.0, 0.9}) {
            RunConfig c = cfg;
            c.alpha.mode = mode;
            c.alpha.alpha_value = a;
            CHECK(snrq::quantize_network(net, c).layers[0].result.codes == ref);
        }
    }
}

TEST_CASE("closed-form schedule feeds the next layer", "[pipeline]") {
    RunConfig cfg = small_config(3, 10);
    cfg.alpha.mode = snrq::AlphaMode::ClosedForm;
    const auto net = snrq::synth_network(cfg.network, cfg.seed);
    const auto report = snrq::quantize_network(net, cfg);
    CHECK(report.layers[0].alpha_used == 0.5);
    CHECK(report.layers[0].alpha_star_degenerate);
    const Matrix inputs = snrq::calibration_inputs(cfg, 10);
    std::vector<Matrix> prefix;
    for (std::size_t l = 0; l < 3; ++l) {
        const auto& lr = report.layers[l];
        CHECK(lr.alpha_used >= 0.0);
        CHECK(lr.alpha_used <= 1.0);
        if (l > 0) CHECK(lr.alpha_used == report.layers[l - 1].alpha_star);
        const auto batch = snrq::forward_collect(net, inputs, prefix);
        CHECK(snrq::closed_form_alpha(net.layers[l], lr.dequant, batch, lr.alpha_used).alpha == lr.alpha_star);
        prefix.push_back(lr.dequant);
    }
}

TEST_CASE("sampled alpha traces", "[pipeline]") {
    RunConfig cfg = small_config(2, 8);
    cfg.alpha.mode = snrq::AlphaMode::Sampled;
    const auto report = snrq::quantize_network(snrq::synth_network(cfg.network, cfg.seed), cfg);
    for (const auto& lr : report.layers) {
        CHECK(lr.alpha_trace.size() == 64);
        for (double a : lr.alpha_trace) {
            CHECK(a >= 0.0);
            CHECK(a <= 0.5);
        }
    }
}

TEST_CASE("reports are deterministic modulo timing", "[pipeline][property]") {
    RunConfig cfg = small_config();
    cfg.alpha.mode = snrq::AlphaMode::Sampled;
    cfg.solver.solver = snrq::SolverKind::KSnrq;
    cfg.solver.beam_width = 3;
    cfg.solver.cd_passes = 1;
    const auto net = snrq::synth_network(cfg.network, cfg.seed);
    const auto a = snrq::quantize_network(net, cfg);
    const auto b = snrq::quantize_network(net, cfg);
    CHECK(snrq::report_to_json(a, false) == snrq::report_to_json(b, false));
    CHECK(snrq::strip_timing_fields(snrq::report_to_json(a)) == snrq::strip_timing_fields(snrq::report_to_json(b)));
    cfg.solver.threads = 3;
    const auto c = snrq::quantize_network(net, cfg);
    for (std::size_t l = 0; l < a.layers.size(); ++l) CHECK(c.layers[l].result.codes == a.layers[l].result.codes);
    CHECK(snrq::report_to_json(c, false).find("\"threads\"") == std::string::npos);
}

TEST_CASE("report json and artifacts", "[pipeline]") {
    const RunConfig cfg = small_config(2, 8);
    const auto report = snrq::quantize_network(snrq::synth_network(cfg.network, cfg.seed), cfg);
    const fs::path dir = scratch("report");
    const fs::path path = snrq::write_report(report, dir);
    std::ifstream in(path);
    const auto j = nlohmann::json::parse(in);
    CHECK(j.at("schema_version") == snrq::kReportSchemaVersion);
    CHECK(j.at("tool") == "snrq");
    CHECK(j.at("config").at("bits") == 3);
    REQUIRE(j.at("layers").size() == 2);
    const auto& l0 = j.at("layers")[0];
    for (const char* key : {"index", "alpha_used", "alpha_trace", "proxy_loss", "weight_mse", "codes_path",
                            "dequant_path", "timing"}) {
        CHECK(l0.contains(key));
    }
    CHECK(j.at("end_to_end").contains("heldout_output_mse"));
    CHECK(j.at("end_to_end").contains("calibration_output_mse"));
    const auto codes = snrq::read_int_matrix(dir / l0.at("codes_path").get<std::string>());
    CHECK(codes == report.layers[0].result.codes);
    CHECK(snrq::read_matrix(dir / l0.at("dequant_path").get<std::string>()) == report.layers[0].dequant);

    const auto stripped = nlohmann::json::parse(snrq::strip_timing_fields(snrq::report_to_json(report)));
    CHECK_FALSE(stripped.contains("timing"));
    CHECK_FALSE(stripped.at("layers")[0].contains("timing"));
}

TEST_CASE("sweeps", "[pipeline]") {
    const RunConfig cfg = small_config(2, 8);
    const auto net = snrq::synth_network(cfg.network, cfg.seed);
    const auto one = snrq::sweep(net, cfg, snrq::SweepAxis::BeamWidth, {2});
    REQUIRE(one.size() == 1);
    CHECK_FALSE(one[0].marginal_per_second.has_value());

    const auto ks = snrq::sweep(net, cfg, snrq::SweepAxis::BeamWidth, {1, 2, 4});
    REQUIRE(ks.size() == 3);
    CHECK(ks[1].marginal_per_second.has_value());
    const auto alphas = snrq::sweep(net, cfg, snrq::SweepAxis::Alpha, {0, 0.5, 1});
    CHECK_FALSE(alphas[2].marginal_per_second.has_value());
    const auto j = nlohmann::json::parse(snrq::sweep_to_json(snrq::SweepAxis::Alpha, alphas));
    CHECK(j.at("rows").size() == 3);
    CHECK(snrq::parse_sweep_axis("K") == snrq::SweepAxis::BeamWidth);
    CHECK_THROWS_AS(snrq::parse_sweep_axis("depth"), snrq::InvalidSpec);
    CHECK_THROWS_AS(snrq::sweep(net, cfg, snrq::SweepAxis::BeamWidth, {0.5}), snrq::InvalidSpec);
}

TEST_CASE("folded beta mean", "[pipeline]") {
    CHECK_THAT(snrq::folded_beta_mean(1.0), WithinAbs(0.25, 1e-9));
    double prev = 0.0;
    for (double lambda : {1.0, 2.0, 5.0, 20.0}) {
        const double m = snrq::folded_beta_mean(lambda);
        CHECK(m > prev);
        CHECK(m < 0.5);
        prev = m;
    }
}

TEST_CASE("variance sweep degenerate cases", "[pipeline]") {
    RunConfig cfg = small_config(2, 8);
    const auto net = snrq::synth_network(cfg.network, cfg.seed);
    const auto single = snrq::sampling_variance_sweep(net, cfg, 1);
    CHECK(single.fixed.stddev == 0.0);
    CHECK(single.sampled.stddev == 0.0);
    CHECK_FALSE(single.warnings.empty());

    const auto same = snrq::sampling_variance_sweep(net, cfg, 3, true);
    CHECK(same.fixed.stddev == 0.0);
    CHECK(same.sampled.stddev == 0.0);

    const auto spread = snrq::sampling_variance_sweep(net, cfg, 4, false);
    CHECK(spread.fixed.stddev > 0.0);
    const auto j = nlohmann::json::parse(snrq::variance_sweep_to_json(spread));
    CHECK(j.at("fixed").at("losses").size() == 4);
}

TEST_CASE("numerical errors name the layer", "[pipeline]") {
    RunConfig cfg = small_config(2, 8);
    cfg.damping = 0.0;
    cfg.calibration.n_sequences = 4;  // rank-deficient H
    const auto net = snrq::synth_network(cfg.network, cfg.seed);
    try {
        snrq::quantize_network(net, cfg);
        FAIL("expected NotPositiveDefinite");
    } catch (const snrq::NotPositiveDefinite& e) {
        CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
    }
}
