// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "snrq/calibration.hpp"
#include "snrq/errors.hpp"
#include "snrq/grid.hpp"
#include "snrq/linalg.hpp"
#include "snrq/oracle.hpp"
#include "snrq/pipeline.hpp"
#include "snrq/rounding.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<std::int32_t>;

snrq::Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw snrq::ShapeMismatch("expected a 2-D array");
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    return snrq::Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const snrq::Matrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

IntArray to_array(const snrq::IntMatrix& m) {
    IntArray out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

snrq::GridSpec grid_spec(int bits, bool symmetric, std::size_t group_size, bool mse_clip) {
    snrq::GridSpec spec;
    spec.bits = bits;
    spec.symmetric = symmetric;
    spec.group_size = group_size;
    spec.mse_clip = mse_clip;
    return spec;
}

py::dict result_dict(const snrq::RoundResult& r) {
    py::dict d;
    d["codes"] = to_array(r.codes);
    d["q_dequant"] = to_array(r.q_dequant);
    d["proxy_loss"] = r.proxy_loss;
    d["per_row_scores"] = r.per_row_scores;
    d["permutation"] = r.permutation_used;
    d["elapsed_ms"] = r.elapsed_ms;
    return d;
}

py::dict quantize_layer(const Array& w, const Array& xf, const Array& xq, const std::string& solver, double alpha,
                        double damping, int bits, bool symmetric, std::size_t group_size, std::size_t beam_width,
                        std::size_t block_size, bool act_order, std::size_t cd_passes) {
    const snrq::Matrix wm = to_matrix(w);
    const snrq::CalibBatch batch{to_matrix(xf), to_matrix(xq)};
    snrq::AlphaStrategy strategy;
    strategy.alpha_value = alpha;
    const snrq::CalibStats stats = snrq::accumulate_stats(batch, strategy, damping);
    const snrq::GridParams params = snrq::fit_grid(wm, grid_spec(bits, symmetric, group_size, false));

    snrq::SolverConfig cfg;
    cfg.solver = snrq::parse_solver_kind(solver);
    cfg.beam_width = beam_width;
    cfg.block_size = block_size;
    cfg.act_order = act_order;
    cfg.cd_passes = cd_passes;

    const snrq::TriangularProxy proxy = snrq::prepare_proxy(snrq::shifted_target(wm, stats), stats.h, act_order);
    snrq::RoundResult r;
    switch (cfg.solver) {
        case snrq::SolverKind::Rtn: r = snrq::rtn_round(wm, params, proxy); break;
        case snrq::SolverKind::Snrq: r = snrq::snrq_greedy(proxy, params, cfg); break;
        case snrq::SolverKind::SnrqLazy: r = snrq::snrq_lazy(proxy, params, cfg); break;
        case snrq::SolverKind::KSnrq: r = snrq::ksnrq_beam(proxy, params, cfg); break;
        case snrq::SolverKind::Gptq:
            r = snrq::gptq_round(wm, stats.h, params, cfg);
            snrq::rescore(r, proxy);
            break;
        case snrq::SolverKind::Gptaq:
            r = snrq::gptaq_round(wm, batch, damping, params, cfg).result;
            snrq::rescore(r, proxy);
            break;
    }
    if (cd_passes > 0) r = snrq::cd_refine(std::move(r), proxy, params, cd_passes);
    return result_dict(r);
}

}  // namespace

PYBIND11_MODULE(_snrq, m) {
    m.doc() = "Post-training quantization solver lab";

    static py::exception<snrq::Error> error(m, "SnrqError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const snrq::Error& e) {
            py::set_error(error, e.what());
        }
    });

    m.def("version", &snrq::version);

    m.def("cholesky", [](const Array& h) { return to_array(snrq::cholesky(to_matrix(h)).matrix()); }, py::arg("h"));
    m.def("solve_spd", [](const Array& h, const Array& b) {
        return to_array(snrq::solve_spd(to_matrix(h), to_matrix(b)));
    }, py::arg("h"), py::arg("b"), "Y = B H^-1");

    py::class_<snrq::GridParams>(m, "GridParams")
        .def_property_readonly("scales", [](const snrq::GridParams& g) { return to_array(g.scales()); })
        .def_property_readonly("zero_points", [](const snrq::GridParams& g) { return to_array(g.zero_points()); })
        .def("levels", &snrq::GridParams::levels, py::arg("row"), py::arg("col"))
        .def("nearest_level", [](const snrq::GridParams& g, double x, std::size_t row, std::size_t col) {
            const snrq::LevelPick p = g.nearest_level(x, row, col);
            return py::make_tuple(p.code, p.value);
        }, py::arg("x"), py::arg("row"), py::arg("col"));

    m.def("fit_grid", [](const Array& w, int bits, bool symmetric, std::size_t group_size, bool mse_clip) {
        return snrq::fit_grid(to_matrix(w), grid_spec(bits, symmetric, group_size, mse_clip));
    }, py::arg("w"), py::arg("bits") = 3, py::arg("symmetric") = true, py::arg("group_size") = 0,
          py::arg("mse_clip") = false);

    m.def("shifted_target", [](const Array& w, const Array& xf, const Array& xq, double alpha, double damping) {
        snrq::AlphaStrategy s;
        s.alpha_value = alpha;
        const auto stats = snrq::accumulate_stats({to_matrix(xf), to_matrix(xq)}, s, damping);
        return to_array(snrq::shifted_target(to_matrix(w), stats));
    }, py::arg("w"), py::arg("xf"), py::arg("xq"), py::arg("alpha") = 0.5, py::arg("damping") = 0.01);

    m.def("objective", [](const Array& w, const Array& w_hat, const Array& xf, const Array& xq, double alpha) {
        return snrq::objective_direct(to_matrix(w), to_matrix(w_hat), {to_matrix(xf), to_matrix(xq)}, alpha);
    }, py::arg("w"), py::arg("w_hat"), py::arg("xf"), py::arg("xq"), py::arg("alpha"));

    m.def("decomposition_check", [](const Array& w, const Array& w_hat, const Array& xf, const Array& xq, double alpha) {
        const auto d = snrq::decomposition_check(to_matrix(w), to_matrix(w_hat), {to_matrix(xf), to_matrix(xq)}, alpha);
        return py::make_tuple(d.lhs, d.rhs, d.const_term);
    }, py::arg("w"), py::arg("w_hat"), py::arg("xf"), py::arg("xq"), py::arg("alpha"));

    m.def("closed_form_alpha", [](const Array& w, const Array& w_hat, const Array& xf, const Array& xq, double dflt) {
        const auto e = snrq::closed_form_alpha(to_matrix(w), to_matrix(w_hat), {to_matrix(xf), to_matrix(xq)}, dflt);
        return py::make_tuple(e.alpha, e.degenerate);
    }, py::arg("w"), py::arg("w_hat"), py::arg("xf"), py::arg("xq"), py::arg("default_alpha") = 0.5);

    m.def("quantize_layer", &quantize_layer, py::arg("w"), py::arg("xf"), py::arg("xq"), py::arg("solver") = "snrq",
          py::arg("alpha") = 0.5, py::arg("damping") = 0.01, py::arg("bits") = 3, py::arg("symmetric") = true,
          py::arg("group_size") = 0, py::arg("beam_width") = 1, py::arg("block_size") = 32,
          py::arg("act_order") = false, py::arg("cd_passes") = 0,
          "Quantize one layer and return codes, dequantized weights and proxy loss");

    m.def("solve_row", [](const Array& r, const std::vector<double>& y, snrq::LevelLists levels,
                          std::size_t beam_width) {
        for (auto& l : levels) std::sort(l.begin(), l.end());
        const snrq::Matrix rm = to_matrix(r);
        const snrq::RowInstance inst = snrq::row_instance_from_ils(rm, y);
        const snrq::RowSolution s = beam_width <= 1 ? snrq::greedy_row(inst.factor, inst.target, levels)
                                                    : snrq::beam_row(inst.factor, inst.target, levels, beam_width,
                                                                     rm.rows());
        return py::make_tuple(s.values, snrq::ils_cost(rm, y, s.values));
    }, py::arg("r"), py::arg("y"), py::arg("levels"), py::arg("beam_width") = 1,
          "Greedy (width 1) or beam solution of min ||R q - y||^2");

    m.def("exhaustive_row", [](const Array& r, const std::vector<double>& y, const snrq::LevelLists& levels) {
        const auto o = snrq::exhaustive_row(to_matrix(r), y, levels);
        return py::make_tuple(o.best_values, o.best_cost);
    }, py::arg("r"), py::arg("y"), py::arg("levels"));

    m.def("dither_experiment", [](double w, double x, double tau_s, double tau_z, std::size_t n, std::size_t trials,
                                  std::uint64_t seed) {
        snrq::DitherSetup s{w, x, tau_s, tau_z, n, trials};
        const auto o = snrq::dither_experiment(s, snrq::SeededRng(seed, 21));
        py::dict d;
        d["var_fixed"] = o.var_fixed_hat;
        d["var_fixed_se"] = o.var_fixed_se;
        d["var_fixed_closed"] = o.var_fixed_closed;
        d["var_smoothed"] = o.var_smoothed_hat;
        d["var_bound"] = o.var_bound;
        return d;
    }, py::arg("w"), py::arg("x"), py::arg("tau_s") = 1.0, py::arg("tau_z") = 0.2, py::arg("n") = 10,
          py::arg("trials") = 100000, py::arg("seed") = 0);

    m.def("quantize_network", [](const std::string& config_json, bool with_timing) {
        const snrq::RunConfig cfg = snrq::parse_run_config(config_json);
        const snrq::QuantReport rep = snrq::quantize_network(snrq::synth_network(cfg.network, cfg.seed), cfg);
        return snrq::report_to_json(rep, with_timing);
    }, py::arg("config_json") = "{}", py::arg("with_timing") = true,
          "Synthesize the configured toy network, quantize it and return the JSON report");
}
