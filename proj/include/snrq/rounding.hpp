// Copyright (c) 2026, The snrq-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Discrete rounding under the triangular proxy ‖(Q − M) L‖²_F, H = L Lᵀ.
//
// Each output row is an independent integer least-squares problem
// min ‖R q − y‖² with R = Lᵀ and y = R m. Solvers decode columns from the
// last to the first: the center of column j cancels the interference of the
// already decided columns k > j,
//
//     c_j = m_j + Σ_{k>j} (m_k − q_k) L_kj / L_jj,
//
// and deciding q_j costs L_jj² (q_j − c_j)².

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "snrq/calibration.hpp"
#include "snrq/grid.hpp"
#include "snrq/linalg.hpp"
#include "snrq/matrix.hpp"

namespace snrq {

enum class SolverKind { Rtn, Snrq, SnrqLazy, KSnrq, Gptq, Gptaq };

SolverKind parse_solver_kind(const std::string& s);
const char* to_string(SolverKind kind);

struct SolverConfig {
    SolverKind solver = SolverKind::Snrq;
    std::size_t beam_width = 1;
    std::size_t block_size = 32;
    bool act_order = false;
    std::size_t cd_passes = 0;
    std::size_t memory_budget_mb = 2048;
    /// Row workers; 0 defers to SNRQ_THREADS, then hardware concurrency.
    std::size_t threads = 0;

    void validate() const;
};

struct RoundResult {
    IntMatrix codes;   ///< original column order
    Matrix q_dequant;  ///< dequantized codes, original column order
    double proxy_loss = 0.0;
    std::vector<double> per_row_scores;
    std::vector<std::size_t> permutation_used;
    double elapsed_ms = 0.0;
};

/// Cholesky factor plus the unit-normalized couplings unit(k, j) = L_kj / L_jj
/// (k > j, zero elsewhere) and the Gram matrix L Lᵀ.
struct TriangularFactor {
    LowerTriangular l;
    Matrix unit;
    Matrix gram;

    std::size_t dim() const noexcept { return l.dim(); }
};

TriangularFactor make_factor(LowerTriangular l);

/// Target and factor in solver (permuted) column order.
struct TriangularProxy {
    Matrix target;
    TriangularFactor factor;
    /// perm[j] is the original column at solver position j.
    std::vector<std::size_t> perm;
};

/// Stable ascending sort of diag(h). Decoding positions n−1 … 0 therefore
/// visits the columns with the largest curvature first.
std::vector<std::size_t> permutation_from_diag(const Matrix& h);

TriangularProxy prepare_proxy(const Matrix& target, const Matrix& h, bool act_order);

/// Ascending candidate values per solver position.
using LevelLists = std::vector<std::vector<double>>;

/// Candidate values of one output row in solver order.
LevelLists row_levels(const GridParams& params, std::size_t row, std::span<const std::size_t> perm);

struct RowSolution {
    std::vector<std::size_t> index;  ///< level index per position
    std::vector<double> values;
    /// Accumulated branch metrics (or the recomputed cost after refinement).
    double score = 0.0;
};

/// ‖(q − m) L‖² for one row, by direct multiplication.
double row_cost(const TriangularFactor& f, std::span<const double> target, std::span<const double> q);

RowSolution greedy_row(const TriangularFactor& f, std::span<const double> target, const LevelLists& levels);
RowSolution lazy_row(const TriangularFactor& f, std::span<const double> target, const LevelLists& levels,
                     std::size_t block);
/// Keeps the `width` best partial assignments. Ties prefer the lower parent
/// beam and then the higher level, so width 1 reproduces greedy_row.
RowSolution beam_row(const TriangularFactor& f, std::span<const double> target, const LevelLists& levels,
                     std::size_t width, std::size_t block);

using RowObserver = std::function<void(std::span<const double>)>;

/// Cyclic exact coordinate descent; `observer` sees q after every coordinate.
void cd_row(const TriangularFactor& f, std::span<const double> target, const LevelLists& levels,
            RowSolution& sol, std::size_t passes, const RowObserver& observer = {});

/// A single-row problem given as min ‖R q − y‖² with upper-triangular R.
struct RowInstance {
    TriangularFactor factor;
    std::vector<double> target;  ///< R⁻¹ y
};

RowInstance row_instance_from_ils(const Matrix& r_upper, std::span<const double> y);

/// ‖(Q − M) L‖²_F
double proxy_loss(const Matrix& q, const Matrix& m, const LowerTriangular& l);

/// Σ_j L_jj² ‖E_{:,j} + Σ_{k>j} E_{:,k} L_kj / L_jj‖², the columnwise form of
/// ‖E L‖²_F.
double columnwise_objective(const Matrix& e, const LowerTriangular& l);

RoundResult snrq_greedy(const TriangularProxy& proxy, const GridParams& params, const SolverConfig& cfg);
RoundResult snrq_lazy(const TriangularProxy& proxy, const GridParams& params, const SolverConfig& cfg);
RoundResult ksnrq_beam(const TriangularProxy& proxy, const GridParams& params, const SolverConfig& cfg);

using CdObserver = std::function<void(std::size_t row, std::span<const double> q)>;

/// `passes` coordinate-descent sweeps over every row of `result`.
RoundResult cd_refine(RoundResult result, const TriangularProxy& proxy, const GridParams& params,
                      std::size_t passes, std::size_t threads = 0, const CdObserver& observer = {});

/// Left-to-right error feedback through the upper Cholesky factor of H⁻¹.
/// With act_order columns are visited by descending diagonal, the same
/// sequence snrq_greedy decodes. Scored against target w.
RoundResult gptq_round(const Matrix& w, const Matrix& h, const GridParams& params, const SolverConfig& cfg);

struct GptaqResult {
    RoundResult result;  ///< scored against the α = 1 shifted target
    double asymmetric_objective = 0.0;
};

/// Error feedback plus, before each column is rounded, the least-squares
/// correction of the remaining columns toward r_q = W_{:,q} ΔX_{q,:}.
GptaqResult gptaq_round(const Matrix& w, const CalibBatch& batch, double damping, const GridParams& params,
                        const SolverConfig& cfg);

/// Exact versus single-component tail problems at step q (identity order),
/// given quantized columns 0 … q in `w_hat_head`.
struct TailComparison {
    Matrix exact_tail;      ///< ΔW_{:,q+1:} minimizing the exact objective
    Matrix surrogate_tail;  ///< ΔW_{:,q+1:} minimizing the surrogate
    double exact_at_exact = 0.0;
    double exact_at_surrogate = 0.0;
    double omitted_correlation = 0.0;  ///< ‖C_q X_{q:,:}ᵀ‖_F
};

TailComparison gptaq_tail_problem(const Matrix& w, const CalibBatch& batch, const Matrix& w_hat_head,
                                  std::size_t q);

/// Entry-wise nearest level of w, with scores against `proxy`.
RoundResult rtn_round(const Matrix& w, const GridParams& params, const TriangularProxy& proxy);

/// Replaces proxy_loss and per_row_scores with exact values against `proxy`.
void rescore(RoundResult& result, const TriangularProxy& proxy);

}  // namespace snrq
