// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "snrq/calibration.hpp"
#include "snrq/linalg.hpp"
#include "snrq/oracle.hpp"
#include "snrq/pipeline.hpp"
#include "snrq/rounding.hpp"
#include "support.hpp"

namespace {

using snrq::CalibBatch;
using snrq::Matrix;
using snrq::SeededRng;

struct Outcome {
    bool pass = true;
    std::string detail;
};

/// Records the first failure message and keeps a running verdict.
class Verdict {
public:
    void require(bool ok, const std::string& what) {
        if (!ok && pass_) {
            pass_ = false;
            first_failure_ = what;
        }
    }
    Outcome finish(const std::string& summary) const { return {pass_, pass_ ? summary : first_failure_}; }

private:
    bool pass_ = true;
    std::string first_failure_;
};

template <typename... Args>
std::string fmt(const char* pattern, Args... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

snrq::AlphaStrategy fixed_alpha(double alpha) {
    snrq::AlphaStrategy s;
    s.alpha_value = alpha;
    return s;
}

std::size_t draw_size(SeededRng& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng.next_u64() % (hi - lo + 1));
}

Outcome decomposition_identity() {
    SeededRng rng(1001);
    Verdict v;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t m = draw_size(rng, 1, 32);
        const std::size_t n = draw_size(rng, 1, 32);
        const std::size_t samples = draw_size(rng, 1, 32);
        const CalibBatch b = snrq::testing::random_batch(rng, n, samples);
        const Matrix w = rng.normal_matrix(m, n);
        const Matrix w_hat = w + rng.normal_matrix(m, n, 0.2);
        const double alpha = rng.uniform();
        const auto d = snrq::decomposition_check(w, w_hat, b, alpha);
        const double err = std::abs(d.lhs - d.rhs) / std::max(1.0, d.lhs);
        worst = std::max(worst, err);
        v.require(err <= 1e-8, fmt("instance %d: relative error %.3g", i, err));
    }
    return v.finish(fmt("100 instances, worst relative error %.3g", worst));
}

Outcome proxy_constant() {
    SeededRng rng(1002);
    Verdict v;
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const std::size_t n = draw_size(rng, 2, 16);
        const std::size_t m = draw_size(rng, 1, 8);
        const CalibBatch b = snrq::testing::random_batch(rng, n, 2 * n + 8);
        const Matrix w = rng.normal_matrix(m, n);
        const double alpha = rng.uniform();
        const auto stats = snrq::accumulate_stats(b, fixed_alpha(alpha), 0.0);
        const Matrix target = snrq::shifted_target(w, stats);
        const auto l = snrq::cholesky(stats.h);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        double scale = 1.0;
        for (int k = 0; k < 10; ++k) {
            const Matrix w_hat = w + rng.normal_matrix(m, n, 0.3);
            const double obj = snrq::objective_direct(w, w_hat, b, alpha);
            const double diff = obj - snrq::proxy_loss(w_hat, target, l);
            lo = std::min(lo, diff);
            hi = std::max(hi, diff);
            scale = std::max(scale, obj);
        }
        worst = std::max(worst, (hi - lo) / scale);
        v.require(hi - lo <= 1e-7 * scale, fmt("instance %d: spread %.3g at scale %.3g", i, hi - lo, scale));
    }
    return v.finish(fmt("20 instances x 10 candidates, worst relative spread %.3g", worst));
}

Outcome closed_form_alpha() {
    SeededRng rng(1003);
    Verdict v;
    for (int i = 0; i < 50; ++i) {
        const std::size_t n = draw_size(rng, 2, 16);
        const std::size_t m = draw_size(rng, 1, 8);
        const CalibBatch b = snrq::testing::random_batch(rng, n, draw_size(rng, 4, 40), 0.5);
        const Matrix w = rng.normal_matrix(m, n);
        const Matrix w_hat = w + rng.normal_matrix(m, n, 0.3);
        const auto scan = snrq::alpha_grid_scan(w, w_hat, b, 101);
        const auto est = snrq::closed_form_alpha(w, w_hat, b);
        const double grid_min = *std::min_element(scan.curve.begin(), scan.curve.end());
        const double scale = std::max(1.0, *std::max_element(scan.curve.begin(), scan.curve.end()));
        const double at_star = snrq::objective_direct(w, w_hat, b, est.alpha);
        v.require(at_star <= grid_min + 1e-9 * scale,
                  fmt("instance %d: L(alpha*) %.12g above grid minimum %.12g", i, at_star, grid_min));
        for (std::size_t k = 1; k + 1 < scan.curve.size(); ++k) {
            const double second = scan.curve[k - 1] - 2 * scan.curve[k] + scan.curve[k + 1];
            v.require(second >= -1e-9 * scale, fmt("instance %d: second difference %.3g", i, second));
        }
    }
    return v.finish("50 instances, alpha* within grid minimum, curve convex");
}

Outcome sampling_range() {
    Verdict v;
    const std::size_t draws = 100000;
    CalibBatch b;
    b.xq = Matrix(1, draws, 1.0);
    b.xf = Matrix(1, draws, 2.0);
    std::uint64_t stream = 0;
    double lo = 1.0;
    double hi = 0.0;
    for (double lambda : {1.0, 2.0, 5.0, 10.0, 20.0}) {
        snrq::AlphaStrategy s;
        s.mode = snrq::AlphaMode::Sampled;
        s.beta_lambda = lambda;
        SeededRng rng(1004, stream++);
        const auto stats = snrq::accumulate_stats(b, s, 0.01, &rng);
        v.require(stats.alpha_trace.size() == draws, "trace length mismatch");
        for (double a : stats.alpha_trace) {
            lo = std::min(lo, a);
            hi = std::max(hi, a);
            v.require(a >= 0.0 && a <= 0.5, fmt("lambda %g: alpha %.17g out of range", lambda, a));
        }
    }
    return v.finish(fmt("5 x 1e5 draws in [%.3g, %.6g]", lo, hi));
}

Outcome sandwich() {
    SeededRng rng(1005);
    Verdict v;
    std::size_t strict = 0;
    for (int i = 0; i < 200; ++i) {
        const std::size_t n = draw_size(rng, 1, 6);
        const Matrix r = snrq::testing::random_upper(rng, n);
        std::vector<double> y(n);
        for (double& x : y) x = 4.0 * rng.uniform() - 0.5;
        const auto levels = snrq::testing::uniform_levels(n, 4);
        const auto inst = snrq::row_instance_from_ils(r, y);
        const auto oracle = snrq::exhaustive_row(r, y, levels);
        const auto greedy = snrq::greedy_row(inst.factor, inst.target, levels);
        const double greedy_cost = snrq::ils_cost(r, y, greedy.values);
        const double tol = 1e-12 * std::max(1.0, greedy_cost);

        const auto k1 = snrq::beam_row(inst.factor, inst.target, levels, 1, n);
        v.require(k1.index == greedy.index, fmt("instance %d: K=1 codes differ from greedy", i));

        for (std::size_t k : {std::size_t{2}, std::size_t{4}, std::size_t{16}}) {
            const auto b = snrq::beam_row(inst.factor, inst.target, levels, k, n);
            const double cost = snrq::ils_cost(r, y, b.values);
            v.require(oracle.best_cost <= cost + tol, fmt("instance %d: K=%zu beats the oracle", i, k));
            v.require(cost <= greedy_cost + tol,
                      fmt("instance %d: K=%zu cost %.12g above greedy %.12g", i, k, cost, greedy_cost));
        }

        std::size_t saturated = 1;
        for (std::size_t j = 0; j < n; ++j) saturated *= 4;
        const auto full = snrq::beam_row(inst.factor, inst.target, levels, saturated, n);
        const double full_cost = snrq::ils_cost(r, y, full.values);
        v.require(full.values == oracle.best_values,
                  fmt("instance %d: saturated beam cost %.17g, oracle %.17g", i, full_cost, oracle.best_cost));
        if (greedy_cost > oracle.best_cost + tol) ++strict;
    }
    return v.finish(fmt("200 instances, greedy strictly suboptimal on %zu", strict));
}

Outcome known_instance() {
    Verdict v;
    const Matrix r{{1, 0.6}, {0, 1}};
    const std::vector<double> y{1.0, 0.5};
    const snrq::LevelLists levels{{0, 1}, {0, 1}};
    const auto inst = snrq::row_instance_from_ils(r, y);
    const double greedy = snrq::ils_cost(r, y, snrq::greedy_row(inst.factor, inst.target, levels).values);
    const double beam = snrq::ils_cost(r, y, snrq::beam_row(inst.factor, inst.target, levels, 2, 2).values);
    v.require(std::abs(greedy - 0.41) <= 1e-12, fmt("greedy cost %.17g", greedy));
    v.require(std::abs(beam - 0.25) <= 1e-12, fmt("K=2 cost %.17g", beam));
    return v.finish(fmt("greedy %.4g, K=2 %.4g", greedy, beam));
}

struct Layer {
    Matrix w;
    CalibBatch batch;
    snrq::CalibStats stats;
    snrq::GridParams params;
    snrq::TriangularProxy proxy;
};

Layer make_layer(SeededRng& rng, std::size_t m, std::size_t n, double alpha, double damping, bool act_order) {
    Matrix w = rng.normal_matrix(m, n);
    CalibBatch batch = snrq::testing::random_batch(rng, n, 2 * n + 8);
    snrq::CalibStats stats = snrq::accumulate_stats(batch, fixed_alpha(alpha), damping);
    snrq::GridSpec spec;
    spec.bits = 3;
    snrq::GridParams params = snrq::fit_grid(w, spec);
    snrq::TriangularProxy proxy = snrq::prepare_proxy(snrq::shifted_target(w, stats), stats.h, act_order);
    return {std::move(w), std::move(batch), std::move(stats), std::move(params), std::move(proxy)};
}

snrq::SolverConfig solver_config(snrq::SolverKind kind, std::size_t threads = 1) {
    snrq::SolverConfig c;
    c.solver = kind;
    c.threads = threads;
    return c;
}

Outcome lazy_exactness() {
    SeededRng rng(1007);
    Verdict v;
    for (int i = 0; i < 20; ++i) {
        const Layer layer = make_layer(rng, 16, 32, 0.5, 0.01, i % 2 == 0);
        const auto greedy = snrq::snrq_greedy(layer.proxy, layer.params, solver_config(snrq::SolverKind::Snrq));
        for (std::size_t block : {std::size_t{1}, std::size_t{2}, std::size_t{16}, std::size_t{32}}) {
            auto c = solver_config(snrq::SolverKind::SnrqLazy);
            c.block_size = block;
            const auto lazy = snrq::snrq_lazy(layer.proxy, layer.params, c);
            v.require(lazy.codes == greedy.codes, fmt("layer %d: B=%zu codes differ", i, block));
        }
    }
    return v.finish("20 layers, B in {1, 2, 16, 32}");
}

Outcome gptq_equivalence() {
    SeededRng rng(1008);
    Verdict v;
    for (int i = 0; i < 20; ++i) {
        const std::size_t n = draw_size(rng, 4, 24);
        const Layer layer = make_layer(rng, 8, n, 0.0, 0.0, true);
        auto c = solver_config(snrq::SolverKind::Gptq);
        c.act_order = true;
        const auto gptq = snrq::gptq_round(layer.w, layer.stats.h, layer.params, c);
        const auto greedy = snrq::snrq_greedy(layer.proxy, layer.params, c);
        v.require(gptq.codes == greedy.codes, fmt("instance %d (n=%zu): codes differ", i, n));
    }
    return v.finish("20 instances, identical codes");
}

Outcome gptaq_tail() {
    SeededRng rng(1009);
    Verdict v;
    double worst_match = 0.0;
    double min_gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 10; ++i) {
        const std::size_t n = draw_size(rng, 3, 10);
        const Matrix w = rng.normal_matrix(4, n);
        const Matrix head = snrq::block(w, 0, 0, 4, 1) + rng.normal_matrix(4, 1, 0.1);

        const auto ortho = snrq::testing::orthogonal_tail_batch(rng, n, 4 * n);
        const auto match = snrq::gptaq_tail_problem(w, ortho, head, 0);
        const double diff = snrq::max_abs(match.exact_tail - match.surrogate_tail);
        worst_match = std::max(worst_match, diff);
        v.require(match.omitted_correlation <= 1e-9, fmt("instance %d: omitted correlation %.3g", i,
                                                         match.omitted_correlation));
        v.require(diff <= 1e-8 * std::max(1.0, snrq::max_abs(match.exact_tail)),
                  fmt("instance %d: orthogonal tails differ by %.3g", i, diff));

        const auto generic = snrq::testing::random_batch(rng, n, 4 * n, 0.5);
        const auto gap = snrq::gptaq_tail_problem(w, generic, head, 0);
        const double excess = gap.exact_at_surrogate - gap.exact_at_exact;
        min_gap = std::min(min_gap, excess);
        v.require(snrq::max_abs(gap.exact_tail - gap.surrogate_tail) > 1e-9,
                  fmt("instance %d: generic tails coincide", i));
        v.require(excess > 1e-12 * std::max(1.0, gap.exact_at_exact), fmt("instance %d: gap %.3g", i, excess));
    }
    return v.finish(fmt("matching tails within %.3g, smallest generic gap %.3g", worst_match, min_gap));
}

Outcome cd_monotone() {
    SeededRng rng(1010);
    Verdict v;
    std::size_t updates = 0;
    for (int i = 0; i < 50; ++i) {
        const std::size_t n = draw_size(rng, 2, 12);
        const Matrix r = snrq::testing::random_upper(rng, n);
        const auto y = snrq::testing::random_vector(rng, n, 2.0);
        const auto levels = snrq::testing::uniform_levels(n, 8, 0.5, -1.75);
        const auto inst = snrq::row_instance_from_ils(r, y);

        auto sol = snrq::greedy_row(inst.factor, inst.target, levels);
        double last = snrq::row_cost(inst.factor, inst.target, sol.values);
        snrq::cd_row(inst.factor, inst.target, levels, sol, 3, [&](std::span<const double> q) {
            const double cost = snrq::row_cost(inst.factor, inst.target, q);
            ++updates;
            v.require(cost <= last + 1e-12 * std::max(1.0, last),
                      fmt("instance %d: cost rose from %.17g to %.17g", i, last, cost));
            last = cost;
        });

        if (n <= 7) {
            const auto oracle = snrq::exhaustive_row(r, y, levels);
            snrq::RowSolution at_opt{oracle.best_index, oracle.best_values, 0.0};
            snrq::cd_row(inst.factor, inst.target, levels, at_opt, 3);
            v.require(at_opt.values == oracle.best_values, fmt("instance %d: CD moved the optimum", i));
        }
    }
    return v.finish(fmt("50 instances, %zu coordinate updates non-increasing", updates));
}

Outcome dither() {
    Verdict v;
    std::ostringstream summary;
    for (std::size_t n : {std::size_t{10}, std::size_t{10000}}) {
        snrq::DitherSetup s;
        s.n_sequences = n;
        s.n_trials = 1000000;
        const auto out = snrq::dither_experiment(s, SeededRng(1011, n));
        const double z = std::abs(out.var_fixed_hat - 0.04) / out.var_fixed_se;
        v.require(z <= 5.0, fmt("N=%zu: var_fixed %.6g is %.2f SE from 0.04", n, out.var_fixed_hat, z));
        const double cap = out.var_bound * (1.0 + 5.0 / std::sqrt(static_cast<double>(s.n_trials)));
        v.require(out.var_smoothed_hat <= cap,
                  fmt("N=%zu: var_smoothed %.6g above %.6g", n, out.var_smoothed_hat, cap));
        summary << "N=" << n << " var_fixed " << fmt("%.5f", out.var_fixed_hat) << " smoothed "
                << fmt("%.3g", out.var_smoothed_hat) << "; ";
    }
    for (std::size_t n : {std::size_t{10}, std::size_t{10000}}) {
        snrq::DitherSetup s;
        s.n_trials = 1;
        s.n_sequences = n;
        const double b1 = snrq::dither_experiment(s, SeededRng(1)).var_bound;
        s.n_sequences = 2 * n;
        const double b2 = snrq::dither_experiment(s, SeededRng(1)).var_bound;
        v.require(std::abs(b2 - b1 / 2) <= 1e-15 * b1, fmt("N=%zu: bound %.17g, doubled %.17g", n, b1, b2));
    }
    summary << "bound halves with N";
    return v.finish(summary.str());
}

Outcome columnwise_identity() {
    SeededRng rng(1012);
    Verdict v;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = draw_size(rng, 1, 24);
        const Matrix e = rng.normal_matrix(draw_size(rng, 1, 8), n);
        const auto l = snrq::cholesky(snrq::testing::random_spd(rng, n));
        const double direct = snrq::frobenius_norm_sq(snrq::matmul(e, l.matrix()));
        const double err = std::abs(snrq::columnwise_objective(e, l) - direct) / std::max(1.0, direct);
        worst = std::max(worst, err);
        v.require(err <= 1e-9, fmt("trial %d: relative error %.3g", i, err));
    }
    return v.finish(fmt("100 trials, worst relative error %.3g", worst));
}

snrq::RunConfig desk_config(std::uint64_t seed, snrq::SolverKind solver, std::size_t beam_width) {
    snrq::RunConfig cfg;
    cfg.seed = seed;
    cfg.alpha.mode = snrq::AlphaMode::Sampled;
    cfg.alpha.beta_lambda = 5.0;
    cfg.solver.solver = solver;
    cfg.solver.beam_width = beam_width;
    cfg.solver.threads = 1;
    return cfg;
}

Outcome end_to_end() {
    Verdict v;
    const int runs = 40;
    int wins = 0;
    double greedy_sum = 0.0;
    double beam_sum = 0.0;
    for (int i = 0; i < runs; ++i) {
        const std::uint64_t seed = 2000 + static_cast<std::uint64_t>(i);
        const snrq::RunConfig base = desk_config(seed, snrq::SolverKind::Snrq, 1);
        const snrq::ToyNetwork net = snrq::synth_network(base.network, seed);
        const double greedy = snrq::quantize_network(net, base).total_proxy_loss;
        const double rtn = snrq::quantize_network(net, desk_config(seed, snrq::SolverKind::Rtn, 1)).total_proxy_loss;
        const double beam =
            snrq::quantize_network(net, desk_config(seed, snrq::SolverKind::KSnrq, 4)).total_proxy_loss;
        if (greedy <= rtn) ++wins;
        greedy_sum += greedy;
        beam_sum += beam;
    }
    const double win_rate = static_cast<double>(wins) / runs;
    v.require(win_rate >= 0.95, fmt("SNRQ at or below RTN in %d of %d runs", wins, runs));
    v.require(beam_sum <= greedy_sum, fmt("K=4 mean %.6g above greedy mean %.6g", beam_sum / runs, greedy_sum / runs));
    return v.finish(fmt("SNRQ <= RTN in %d/%d runs; mean proxy greedy %.5g, K=4 %.5g", wins, runs, greedy_sum / runs,
                        beam_sum / runs));
}

Outcome determinism() {
    Verdict v;
    const snrq::RunConfig cfg = desk_config(77, snrq::SolverKind::KSnrq, 2);
    const snrq::ToyNetwork net = snrq::synth_network(cfg.network, cfg.seed);
    const std::string a = snrq::report_to_json(snrq::quantize_network(net, cfg), false);
    const std::string b = snrq::report_to_json(snrq::quantize_network(net, cfg), false);
    v.require(a == b, "repeated runs produced different reports");
    v.require(snrq::strip_timing_fields(snrq::report_to_json(snrq::quantize_network(net, cfg), true)) ==
                  snrq::strip_timing_fields(snrq::report_to_json(snrq::quantize_network(net, cfg), true)),
              "reports differ outside timing fields");

    using K = snrq::SolverKind;
    std::size_t checked = 0;
    for (K kind : {K::Rtn, K::Snrq, K::SnrqLazy, K::KSnrq, K::Gptq, K::Gptaq}) {
        snrq::RunConfig c = cfg;
        c.solver.solver = kind;
        c.solver.cd_passes = kind == K::Snrq ? 2 : 0;
        c.solver.threads = 1;
        const auto one = snrq::quantize_network(net, c);
        c.solver.threads = 4;
        const auto four = snrq::quantize_network(net, c);
        for (std::size_t l = 0; l < one.layers.size(); ++l) {
            ++checked;
            v.require(one.layers[l].result.codes == four.layers[l].result.codes,
                      fmt("solver %s layer %zu: codes depend on thread count", snrq::to_string(kind), l));
        }
    }
    return v.finish(fmt("reports identical; %zu layer code sets thread-invariant", checked));
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "decomposition identity", decomposition_identity},
        {2, "proxy-constant identity", proxy_constant},
        {3, "closed-form alpha optimality", closed_form_alpha},
        {4, "sampled alpha range", sampling_range},
        {5, "greedy/beam/oracle sandwich", sandwich},
        {6, "beam fixes the known greedy miss", known_instance},
        {7, "lazy-batch exactness", lazy_exactness},
        {8, "GPTQ equivalence", gptq_equivalence},
        {9, "GPTAQ tail surrogate", gptaq_tail},
        {10, "CD monotonicity", cd_monotone},
        {11, "dithering variance", dither},
        {12, "columnwise identity", columnwise_identity},
        {13, "end-to-end desk analog", end_to_end},
        {14, "determinism", determinism},
    };
    int failures = 0;
    for (const Criterion& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!out.pass) ++failures;
        std::printf("criterion %2d %s: %s (%s) [%.2fs]\n", c.id, out.pass ? "PASS" : "FAIL", c.name,
                    out.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
