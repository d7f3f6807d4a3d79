// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "snrq/rounding.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "snrq/errors.hpp"
#include "snrq/parallel.hpp"

namespace snrq {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::vector<std::size_t> identity_perm(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    return p;
}

void require_grid(const Matrix& target, const GridParams& params) {
    if (target.rows() != params.rows() || target.cols() != params.cols()) {
        throw ShapeMismatch("matrix is " + std::to_string(target.rows()) + "x" + std::to_string(target.cols()) +
                            " but grid was fitted for " + std::to_string(params.rows()) + "x" +
                            std::to_string(params.cols()));
    }
}

/// Writes solver-order row solutions back into original column order and
/// computes the independent proxy loss.
RoundResult assemble(const TriangularProxy& proxy, const GridParams& params, std::vector<RowSolution>& rows) {
    const std::size_t m = proxy.target.rows();
    const std::size_t n = proxy.target.cols();
    const std::int32_t code_min = params.spec().code_min();
    RoundResult out;
    out.codes = IntMatrix(m, n);
    out.q_dequant = Matrix(m, n);
    out.per_row_scores.resize(m);
    out.permutation_used = proxy.perm;
    Matrix q_perm(m, n);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t col = proxy.perm[j];
            out.codes(r, col) = code_min + static_cast<std::int32_t>(rows[r].index[j]);
            out.q_dequant(r, col) = rows[r].values[j];
            q_perm(r, j) = rows[r].values[j];
        }
        out.per_row_scores[r] = rows[r].score;
    }
    out.proxy_loss = proxy_loss(q_perm, proxy.target, proxy.factor.l);
    return out;
}

template <typename RowFn>
RoundResult solve_rows(const TriangularProxy& proxy, const GridParams& params, std::size_t threads, RowFn&& fn) {
    const auto start = Clock::now();
    require_grid(proxy.target, params);
    std::vector<RowSolution> rows(proxy.target.rows());
    parallel_chunks(rows.size(), resolve_threads(threads), [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            const LevelLists levels = row_levels(params, r, proxy.perm);
            rows[r] = fn(proxy.target.row_span(r), levels);
        }
    });
    RoundResult out = assemble(proxy, params, rows);
    out.elapsed_ms = ms_since(start);
    return out;
}

Matrix permuted_values(const Matrix& q, std::span<const std::size_t> perm) { return permute_columns(q, perm); }

struct BeamCandidate {
    double cost;
    std::uint32_t parent;
    std::uint32_t level;
};

bool beam_less(const BeamCandidate& a, const BeamCandidate& b) noexcept {
    if (a.cost != b.cost) return a.cost < b.cost;
    if (a.parent != b.parent) return a.parent < b.parent;
    return a.level > b.level;
}

/// Visiting order and inverse-Hessian factor shared by the error-feedback
/// baselines.
struct Feedback {
    std::vector<std::size_t> order;
    Matrix upper;  ///< U with (P H Pᵀ)⁻¹ = Uᵀ U
    Matrix h_perm;
};

Feedback make_feedback(const Matrix& h, bool act_order) {
    Feedback fb;
    if (act_order) {
        fb.order = permutation_from_diag(h);
        std::reverse(fb.order.begin(), fb.order.end());
    } else {
        fb.order = identity_perm(h.rows());
    }
    fb.h_perm = permute_symmetric(h, fb.order);
    fb.upper = cholesky(inverse_spd(fb.h_perm)).upper();
    return fb;
}

/// One row of left-to-right error feedback. `pre_step(j, v)` may adjust the
/// remaining entries before column j is rounded.
template <typename PreStep>
RowSolution feedback_row(std::span<double> v, const LevelLists& levels, const Matrix& u, PreStep&& pre_step) {
    const std::size_t n = v.size();
    RowSolution sol;
    sol.index.resize(n);
    sol.values.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        pre_step(j, v);
        const std::size_t idx = nearest_index(levels[j], v[j]);
        const double qv = levels[j][idx];
        const double err = (v[j] - qv) / u(j, j);
        for (std::size_t k = j + 1; k < n; ++k) v[k] -= err * u(j, k);
        sol.index[j] = idx;
        sol.values[j] = qv;
    }
    return sol;
}

RoundResult assemble_feedback(const Feedback& fb, const GridParams& params, std::vector<RowSolution>& rows) {
    const std::size_t m = rows.size();
    const std::size_t n = fb.order.size();
    const std::int32_t code_min = params.spec().code_min();
    RoundResult out;
    out.codes = IntMatrix(m, n);
    out.q_dequant = Matrix(m, n);
    out.permutation_used = fb.order;
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
            out.codes(r, fb.order[j]) = code_min + static_cast<std::int32_t>(rows[r].index[j]);
            out.q_dequant(r, fb.order[j]) = rows[r].values[j];
        }
    }
    return out;
}

}  // namespace

SolverKind parse_solver_kind(const std::string& s) {
    if (s == "rtn") return SolverKind::Rtn;
    if (s == "snrq") return SolverKind::Snrq;
    if (s == "snrq_lazy") return SolverKind::SnrqLazy;
    if (s == "ksnrq") return SolverKind::KSnrq;
    if (s == "gptq") return SolverKind::Gptq;
    if (s == "gptaq") return SolverKind::Gptaq;
    throw InvalidSpec("unknown solver '" + s + "' (expected rtn|snrq|snrq_lazy|ksnrq|gptq|gptaq)");
}

const char* to_string(SolverKind kind) {
    switch (kind) {
        case SolverKind::Rtn: return "rtn";
        case SolverKind::Snrq: return "snrq";
        case SolverKind::SnrqLazy: return "snrq_lazy";
        case SolverKind::KSnrq: return "ksnrq";
        case SolverKind::Gptq: return "gptq";
        case SolverKind::Gptaq: return "gptaq";
    }
    return "snrq";
}

void SolverConfig::validate() const {
    if (beam_width < 1) throw InvalidSpec("beam_width must be >= 1");
    if (block_size < 1) throw InvalidSpec("block_size must be >= 1");
    if (memory_budget_mb < 1) throw InvalidSpec("memory_budget_mb must be >= 1");
}

TriangularFactor make_factor(LowerTriangular l) {
    const std::size_t n = l.dim();
    Matrix unit(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = j + 1; k < n; ++k) unit(k, j) = l(k, j) / l(j, j);
    }
    Matrix gram = l.reconstruct();
    return {std::move(l), std::move(unit), std::move(gram)};
}

std::vector<std::size_t> permutation_from_diag(const Matrix& h) {
    if (!h.is_square()) throw ShapeMismatch("permutation_from_diag: matrix is not square");
    std::vector<std::size_t> perm = identity_perm(h.rows());
    std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return h(a, a) < h(b, b); });
    return perm;
}

TriangularProxy prepare_proxy(const Matrix& target, const Matrix& h, bool act_order) {
    if (!h.is_square() || target.cols() != h.rows()) {
        throw ShapeMismatch("prepare_proxy: target has " + std::to_string(target.cols()) +
                            " columns but H is " + std::to_string(h.rows()) + "x" + std::to_string(h.cols()));
    }
    if (!target.all_finite()) throw NonFinite("prepare_proxy: target contains NaN/Inf");
    std::vector<std::size_t> perm = act_order ? permutation_from_diag(h) : identity_perm(h.rows());
    return {permute_columns(target, perm), make_factor(cholesky(permute_symmetric(h, perm))), std::move(perm)};
}

LevelLists row_levels(const GridParams& params, std::size_t row, std::span<const std::size_t> perm) {
    LevelLists out(perm.size());
    if (params.spec().group_size == 0 && !perm.empty()) {
        const std::vector<double> shared = params.levels(row, 0);
        for (auto& l : out) l = shared;
        return out;
    }
    for (std::size_t j = 0; j < perm.size(); ++j) out[j] = params.levels(row, perm[j]);
    return out;
}

double row_cost(const TriangularFactor& f, std::span<const double> target, std::span<const double> q) {
    const std::size_t n = f.dim();
    if (target.size() != n || q.size() != n) throw ShapeMismatch("row_cost: length mismatch");
    double cost = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = j; k < n; ++k) s += (q[k] - target[k]) * f.l(k, j);
        cost += s * s;
    }
    return cost;
}

RowSolution greedy_row(const TriangularFactor& f, std::span<const double> target, const LevelLists& levels) {
    const std::size_t n = f.dim();
    RowSolution sol;
    sol.index.assign(n, 0);
    sol.values.assign(n, 0.0);
    for (std::size_t j = n; j-- > 0;) {
        double acc = 0.0;
        for (std::size_t k = j + 1; k < n; ++k) acc += (target[k] - sol.values[k]) * f.unit(k, j);
        const double center = target[j] + acc;
        const std::size_t idx = nearest_index(levels[j], center);
        sol.index[j] = idx;
        sol.values[j] = levels[j][idx];
        const double d = (sol.values[j] - center) * f.l(j, j);
        sol.score += d * d;
    }
    return sol;
}

RowSolution lazy_row(const TriangularFactor& f, std::span<const double> target, const LevelLists& levels,
                     std::size_t block) {
    const std::size_t n = f.dim();
    RowSolution sol;
    sol.index.assign(n, 0);
    sol.values.assign(n, 0.0);
    std::vector<double> correction(std::min(block, n));
    for (std::size_t i = n; i > 0;) {
        const std::size_t lo = i > block ? i - block : 0;
        // Interference of every column decided in earlier blocks, once per block.
        for (std::size_t j = lo; j < i; ++j) {
            double t = 0.0;
            for (std::size_t c = i; c < n; ++c) t += (target[c] - sol.values[c]) * f.unit(c, j);
            correction[j - lo] = t;
        }
        for (std::size_t j = i; j-- > lo;) {
            double acc = 0.0;
            for (std::size_t c = j + 1; c < i; ++c) acc += (target[c] - sol.values[c]) * f.unit(c, j);
            const double center = target[j] + (acc + correction[j - lo]);
            const std::size_t idx = nearest_index(levels[j], center);
            sol.index[j] = idx;
            sol.values[j] = levels[j][idx];
            const double d = (sol.values[j] - center) * f.l(j, j);
            sol.score += d * d;
        }
        i = lo;
    }
    return sol;
}

RowSolution beam_row(const TriangularFactor& f, std::span<const double> target, const LevelLists& levels,
                     std::size_t width, std::size_t block) {
    const std::size_t n = f.dim();
    if (width < 1 || block < 1) throw InvalidArgument("beam_row: width and block must be >= 1");
    const std::size_t span_len = std::min(block, n);

    // Beam k occupies rows k of these K×n / K×B buffers.
    std::vector<double> values(width * n, 0.0), next_values(width * n, 0.0);
    std::vector<std::size_t> index(width * n, 0), next_index(width * n, 0);
    std::vector<double> corr(width * span_len, 0.0), next_corr(width * span_len, 0.0);
    std::vector<double> score(width, 0.0), next_score(width, 0.0);
    std::size_t live = 1;
    std::vector<BeamCandidate> cands;

    for (std::size_t i = n; i > 0;) {
        const std::size_t lo = i > block ? i - block : 0;
        for (std::size_t k = 0; k < live; ++k) {
            const double* q = &values[k * n];
            for (std::size_t j = lo; j < i; ++j) {
                double t = 0.0;
                for (std::size_t c = i; c < n; ++c) t += (target[c] - q[c]) * f.unit(c, j);
                corr[k * span_len + (j - lo)] = t;
            }
        }
        for (std::size_t j = i; j-- > lo;) {
            const std::vector<double>& lv = levels[j];
            const double ljj2 = f.l(j, j) * f.l(j, j);
            cands.clear();
            for (std::size_t k = 0; k < live; ++k) {
                const double* q = &values[k * n];
                double acc = 0.0;
                for (std::size_t c = j + 1; c < i; ++c) acc += (target[c] - q[c]) * f.unit(c, j);
                const double center = target[j] + (acc + corr[k * span_len + (j - lo)]);
                for (std::size_t a = 0; a < lv.size(); ++a) {
                    const double d = lv[a] - center;
                    cands.push_back({score[k] + ljj2 * d * d, static_cast<std::uint32_t>(k),
                                     static_cast<std::uint32_t>(a)});
                }
            }
            const std::size_t keep = std::min(width, cands.size());
            std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                              beam_less);
            for (std::size_t k = 0; k < keep; ++k) {
                const BeamCandidate& c = cands[k];
                std::copy_n(&values[c.parent * n], n, &next_values[k * n]);
                std::copy_n(&index[c.parent * n], n, &next_index[k * n]);
                std::copy_n(&corr[c.parent * span_len], span_len, &next_corr[k * span_len]);
                next_values[k * n + j] = lv[c.level];
                next_index[k * n + j] = c.level;
                next_score[k] = c.cost;
            }
            values.swap(next_values);
            index.swap(next_index);
            corr.swap(next_corr);
            score.swap(next_score);
            live = keep;
        }
        i = lo;
    }

    std::size_t best = 0;
    for (std::size_t k = 1; k < live; ++k) {
        if (score[k] < score[best]) best = k;
    }
    RowSolution sol;
    sol.values.assign(values.begin() + static_cast<std::ptrdiff_t>(best * n),
                      values.begin() + static_cast<std::ptrdiff_t>((best + 1) * n));
    sol.index.assign(index.begin() + static_cast<std::ptrdiff_t>(best * n),
                     index.begin() + static_cast<std::ptrdiff_t>((best + 1) * n));
    sol.score = score[best];
    return sol;
}

void cd_row(const TriangularFactor& f, std::span<const double> target, const LevelLists& levels,
            RowSolution& sol, std::size_t passes, const RowObserver& observer) {
    const std::size_t n = f.dim();
    if (sol.values.size() != n || sol.index.size() != n) throw ShapeMismatch("cd_row: solution length mismatch");
    if (passes == 0) return;
    const Matrix& h = f.gram;
    // g = H (q − m), kept current across updates.
    std::vector<double> g(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < n; ++b) s += h(a, b) * (sol.values[b] - target[b]);
        g[a] = s;
    }
    for (std::size_t pass = 0; pass < passes; ++pass) {
        for (std::size_t j = n; j-- > 0;) {
            const double center = sol.values[j] - g[j] / h(j, j);
            const std::size_t idx = nearest_index(levels[j], center);
            const double cand = levels[j][idx];
            if (idx != sol.index[j] && std::abs(cand - center) < std::abs(sol.values[j] - center)) {
                const double delta = cand - sol.values[j];
                sol.values[j] = cand;
                sol.index[j] = idx;
                for (std::size_t a = 0; a < n; ++a) g[a] += h(a, j) * delta;
            }
            if (observer) observer(sol.values);
        }
    }
    sol.score = row_cost(f, target, sol.values);
}

RowInstance row_instance_from_ils(const Matrix& r_upper, std::span<const double> y) {
    if (!r_upper.is_square() || y.size() != r_upper.rows()) {
        throw ShapeMismatch("row_instance_from_ils: R must be square with len(y) rows");
    }
    LowerTriangular l = LowerTriangular::from_matrix(r_upper.transposed());
    std::vector<double> target(y.begin(), y.end());
    l.solve_upper_inplace(target);
    return {make_factor(std::move(l)), std::move(target)};
}

double proxy_loss(const Matrix& q, const Matrix& m, const LowerTriangular& l) {
    if (q.rows() != m.rows() || q.cols() != m.cols() || q.cols() != l.dim()) {
        throw ShapeMismatch("proxy_loss: shape mismatch");
    }
    return frobenius_norm_sq(matmul(q - m, l.matrix()));
}

double columnwise_objective(const Matrix& e, const LowerTriangular& l) {
    const std::size_t n = l.dim();
    if (e.cols() != n) throw ShapeMismatch("columnwise_objective: shape mismatch");
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double ljj = l(j, j);
        double col = 0.0;
        for (std::size_t r = 0; r < e.rows(); ++r) {
            double s = e(r, j);
            for (std::size_t k = j + 1; k < n; ++k) s += e(r, k) * l(k, j) / ljj;
            col += s * s;
        }
        total += ljj * ljj * col;
    }
    return total;
}

RoundResult snrq_greedy(const TriangularProxy& proxy, const GridParams& params, const SolverConfig& cfg) {
    cfg.validate();
    return solve_rows(proxy, params, cfg.threads, [&](std::span<const double> t, const LevelLists& lv) {
        return greedy_row(proxy.factor, t, lv);
    });
}

RoundResult snrq_lazy(const TriangularProxy& proxy, const GridParams& params, const SolverConfig& cfg) {
    cfg.validate();
    return solve_rows(proxy, params, cfg.threads, [&](std::span<const double> t, const LevelLists& lv) {
        return lazy_row(proxy.factor, t, lv, cfg.block_size);
    });
}

RoundResult ksnrq_beam(const TriangularProxy& proxy, const GridParams& params, const SolverConfig& cfg) {
    cfg.validate();
    const double state_bytes = static_cast<double>(proxy.target.rows()) * static_cast<double>(cfg.beam_width) *
                               static_cast<double>(proxy.target.cols()) * (sizeof(double) + sizeof(std::int32_t));
    const double budget = static_cast<double>(cfg.memory_budget_mb) * 1024.0 * 1024.0;
    if (state_bytes > budget) {
        throw MemoryBudget("beam state needs " + std::to_string(static_cast<long long>(state_bytes / 1048576.0)) +
                           " MiB, budget is " + std::to_string(cfg.memory_budget_mb) + " MiB");
    }
    return solve_rows(proxy, params, cfg.threads, [&](std::span<const double> t, const LevelLists& lv) {
        return beam_row(proxy.factor, t, lv, cfg.beam_width, cfg.block_size);
    });
}

RoundResult cd_refine(RoundResult result, const TriangularProxy& proxy, const GridParams& params,
                      std::size_t passes, std::size_t threads, const CdObserver& observer) {
    if (passes == 0) return result;
    const auto start = Clock::now();
    require_grid(result.q_dequant, params);
    const std::size_t m = result.q_dequant.rows();
    const std::size_t n = result.q_dequant.cols();
    const Matrix q_perm = permuted_values(result.q_dequant, proxy.perm);
    std::vector<RowSolution> rows(m);
    parallel_chunks(m, resolve_threads(threads), [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            const LevelLists levels = row_levels(params, r, proxy.perm);
            RowSolution sol;
            sol.values.assign(q_perm.row_span(r).begin(), q_perm.row_span(r).end());
            sol.index.resize(n);
            for (std::size_t j = 0; j < n; ++j) sol.index[j] = nearest_index(levels[j], sol.values[j]);
            RowObserver row_obs;
            if (observer) row_obs = [&, r](std::span<const double> q) { observer(r, q); };
            cd_row(proxy.factor, proxy.target.row_span(r), levels, sol, passes, row_obs);
            rows[r] = std::move(sol);
        }
    });
    RoundResult out = assemble(proxy, params, rows);
    out.elapsed_ms = result.elapsed_ms + ms_since(start);
    return out;
}

RoundResult gptq_round(const Matrix& w, const Matrix& h, const GridParams& params, const SolverConfig& cfg) {
    cfg.validate();
    require_grid(w, params);
    const auto start = Clock::now();
    const Feedback fb = make_feedback(h, cfg.act_order);
    Matrix v = permute_columns(w, fb.order);
    std::vector<RowSolution> rows(w.rows());
    parallel_chunks(rows.size(), resolve_threads(cfg.threads), [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            const LevelLists levels = row_levels(params, r, fb.order);
            rows[r] = feedback_row(v.row_span(r), levels, fb.upper, [](std::size_t, std::span<double>) {});
        }
    });
    RoundResult out = assemble_feedback(fb, params, rows);
    out.elapsed_ms = ms_since(start);
    rescore(out, prepare_proxy(w, h, false));
    return out;
}

GptaqResult gptaq_round(const Matrix& w, const CalibBatch& batch, double damping, const GridParams& params,
                        const SolverConfig& cfg) {
    cfg.validate();
    require_grid(w, params);
    batch.validate();
    if (w.cols() != batch.features()) throw ShapeMismatch("gptaq_round: weight/activation mismatch");
    const auto start = Clock::now();
    const std::size_t n = w.cols();
    const std::size_t samples = batch.samples();

    AlphaStrategy asym;
    asym.alpha_value = 1.0;
    const CalibStats stats = accumulate_stats(batch, asym, damping);
    const Feedback fb = make_feedback(stats.h, cfg.act_order);
    const Matrix xp = permute_rows(batch.xq, fb.order);
    const Matrix dxp = permute_rows(batch.delta(), fb.order);

    // shift(q, k): least-squares coefficient of column k ≥ q in the fit of
    // ΔX_q by X_{q:}. Independent of the row and of earlier decisions.
    Matrix shift(n, n);
    std::vector<bool> active(n, false);
    for (std::size_t q = 0; q < n; ++q) {
        const auto dq = dxp.row_span(q);
        active[q] = std::any_of(dq.begin(), dq.end(), [](double d) { return d != 0.0; });
        if (!active[q]) continue;
        std::vector<double> rhs(n - q, 0.0);
        for (std::size_t k = q; k < n; ++k) {
            const auto xk = xp.row_span(k);
            double s = 0.0;
            for (std::size_t t = 0; t < samples; ++t) s += xk[t] * dq[t];
            rhs[k - q] = s;
        }
        const LowerTriangular tail = cholesky(block(fb.h_perm, q, q, n - q, n - q));
        const std::vector<double> coef = solve_spd_vec(tail, rhs);
        for (std::size_t k = q; k < n; ++k) shift(q, k) = coef[k - q];
    }

    const Matrix w_perm = permute_columns(w, fb.order);
    Matrix v = w_perm;
    std::vector<RowSolution> rows(w.rows());
    parallel_chunks(rows.size(), resolve_threads(cfg.threads), [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            const LevelLists levels = row_levels(params, r, fb.order);
            const auto wr = w_perm.row_span(r);
            rows[r] = feedback_row(v.row_span(r), levels, fb.upper, [&](std::size_t q, std::span<double> vr) {
                if (!active[q]) return;
                for (std::size_t k = q; k < n; ++k) vr[k] += wr[q] * shift(q, k);
            });
        }
    });
    GptaqResult out{assemble_feedback(fb, params, rows), 0.0};
    out.result.elapsed_ms = ms_since(start);
    rescore(out.result, prepare_proxy(shifted_target(w, stats), stats.h, false));
    out.asymmetric_objective = asymmetric_loss(w, out.result.q_dequant, batch);
    return out;
}

TailComparison gptaq_tail_problem(const Matrix& w, const CalibBatch& batch, const Matrix& w_hat_head,
                                  std::size_t q) {
    batch.validate();
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    const std::size_t samples = batch.samples();
    if (n != batch.features()) throw ShapeMismatch("gptaq_tail_problem: weight/activation mismatch");
    if (q >= n || w_hat_head.rows() != m || w_hat_head.cols() != q + 1) {
        throw ShapeMismatch("gptaq_tail_problem: w_hat_head must hold columns 0..q");
    }
    const Matrix& x = batch.xq;
    const Matrix dx = batch.delta();
    const Matrix dw_head = w_hat_head - block(w, 0, 0, m, q + 1);

    Matrix target = matmul(w, dx);  // T_q = W ΔX − ΔW_{<q} X_{<q}
    if (q > 0) target -= matmul(block(dw_head, 0, 0, m, q), block(x, 0, 0, q, samples));
    Matrix single(m, samples);  // r_q = W_{:,q} ΔX_{q,:}
    Matrix fixed(m, samples);   // ΔW_{:,q} X_{q,:}
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t t = 0; t < samples; ++t) {
            single(r, t) = w(r, q) * dx(q, t);
            fixed(r, t) = dw_head(r, q) * x(q, t);
        }
    }
    const Matrix omitted = target - single;

    TailComparison out;
    out.omitted_correlation = frobenius_norm(matmul_nt(omitted, block(x, q, 0, n - q, samples)));
    const std::size_t tail = n - q - 1;
    if (tail == 0) {
        out.exact_tail = Matrix(m, 0);
        out.surrogate_tail = Matrix(m, 0);
        out.exact_at_exact = out.exact_at_surrogate = frobenius_norm_sq(fixed - target);
        return out;
    }
    const Matrix x_tail = block(x, q + 1, 0, tail, samples);
    const LowerTriangular h_tail = cholesky(matmul_nt(x_tail, x_tail));
    out.exact_tail = solve_spd(h_tail, matmul_nt(target - fixed, x_tail));
    out.surrogate_tail = solve_spd(h_tail, matmul_nt(single - fixed, x_tail));
    out.exact_at_exact = frobenius_norm_sq(fixed + matmul(out.exact_tail, x_tail) - target);
    out.exact_at_surrogate = frobenius_norm_sq(fixed + matmul(out.surrogate_tail, x_tail) - target);
    return out;
}

RoundResult rtn_round(const Matrix& w, const GridParams& params, const TriangularProxy& proxy) {
    require_grid(w, params);
    const auto start = Clock::now();
    QuantizedMatrix qm = quantize_nearest(w, params);
    RoundResult out;
    out.codes = std::move(qm.codes);
    out.q_dequant = std::move(qm.dequant);
    out.permutation_used = identity_perm(w.cols());
    out.elapsed_ms = ms_since(start);
    rescore(out, proxy);
    return out;
}

void rescore(RoundResult& result, const TriangularProxy& proxy) {
    if (result.q_dequant.rows() != proxy.target.rows() || result.q_dequant.cols() != proxy.target.cols()) {
        throw ShapeMismatch("rescore: result and proxy shapes differ");
    }
    const Matrix q_perm = permuted_values(result.q_dequant, proxy.perm);
    result.per_row_scores.resize(q_perm.rows());
    for (std::size_t r = 0; r < q_perm.rows(); ++r) {
        result.per_row_scores[r] = row_cost(proxy.factor, proxy.target.row_span(r), q_perm.row_span(r));
    }
    result.proxy_loss = proxy_loss(q_perm, proxy.target, proxy.factor.l);
}

}  // namespace snrq
