#pragma once

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "evdag/covest.hpp"
#include "evdag/graph.hpp"

namespace evdag {

/// Parameters of the minimax sample-size thresholds.
struct BoundsQuery {
    int d = 2;
    int q = 1;
    double beta_min = 0.5;
    double m = 2.0;       // spectral norm bound M > 1
    double delta = 0.25;  // failure probability, in (0, 1/2)

    void validate() const {
        if (d < 2) throw std::invalid_argument("BoundsQuery: d must be >= 2");
        if (q < 1 || 2 * q > d) throw std::invalid_argument("BoundsQuery: need 1 <= q <= d/2");
        if (!(beta_min > 0.0)) throw std::invalid_argument("BoundsQuery: beta_min must be positive");
        if (!(m > 1.0)) throw std::invalid_argument("BoundsQuery: M must exceed 1");
        if (!(delta > 0.0 && delta < 0.5)) {
            throw std::invalid_argument("BoundsQuery: delta must lie in (0, 1/2)");
        }
    }
};

namespace detail {

/// LLT factorization that refuses non-positive-definite input.
inline Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
        throw SingularBlockError(std::string(what) + ": matrix is not positive definite");
    }
    return llt;
}

inline double logdet_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace detail

/// KL(N(0, S0) || N(0, S1)) in the full form
/// (tr(S1^{-1} S0) - d + logdet S1 - logdet S0) / 2.
/// The log-determinant ratio is kept even though it cancels within
/// equal-determinant ensembles, so the function is correct for arbitrary
/// positive definite pairs.
inline double gaussian_kl(const CovEstimate& s0, const CovEstimate& s1) {
    const int d = s0.dim();
    if (s1.dim() != d) throw std::invalid_argument("gaussian_kl: dimension mismatch");
    const auto llt0 = detail::checked_llt(s0.matrix(), "gaussian_kl: first argument");
    const auto llt1 = detail::checked_llt(s1.matrix(), "gaussian_kl: second argument");
    const double trace = llt1.solve(s0.matrix()).trace();
    const double logdet0 = detail::logdet_from_llt(llt0);
    const double logdet1 = detail::logdet_from_llt(llt1);
    return 0.5 * (trace - d + logdet1 - logdet0);
}

/// Covariance of the d-dimensional model with the single edge u -> v and
/// coefficient beta: sigma2 * identity except the (u, v) block
/// sigma2 * [[1, beta], [beta, 1 + beta^2]].
inline CovEstimate one_edge_covariance(int d, int u, int v, double beta, double sigma2 = 1.0) {
    if (d < 2) throw std::invalid_argument("one_edge_covariance: d must be >= 2");
    detail::check_index(u, d, "one_edge_covariance");
    detail::check_index(v, d, "one_edge_covariance");
    if (u == v) throw std::invalid_argument("one_edge_covariance: u and v must differ");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("one_edge_covariance: sigma2 must be positive");
    Eigen::MatrixXd m = sigma2 * Eigen::MatrixXd::Identity(d, d);
    m(u, v) = sigma2 * beta;
    m(v, u) = sigma2 * beta;
    m(v, v) = sigma2 * (1.0 + beta * beta);
    return CovEstimate(std::move(m), CovOrigin::population());
}

/// Structural relation between a fixed edge u -> v and a second edge j -> k.
enum class OneEdgeRelation {
    disjoint,      // {j, k} disjoint from {u, v}
    shared_tail,   // j = u, k != v
    shared_head,   // j != u (and != v), k = v
    reversal,      // j = v, k = u
    head_to_tail,  // j = v, k not in {u, v}
    tail_to_head,  // j not in {u, v}, k = u
};

inline const char* to_string(OneEdgeRelation r) {
    switch (r) {
        case OneEdgeRelation::disjoint: return "disjoint";
        case OneEdgeRelation::shared_tail: return "shared-tail";
        case OneEdgeRelation::shared_head: return "shared-head";
        case OneEdgeRelation::reversal: return "reversal";
        case OneEdgeRelation::head_to_tail: return "head-to-tail";
        case OneEdgeRelation::tail_to_head: return "tail-to-head";
    }
    return "?";
}

/// One row of the single-edge ensemble table: the closed-form constant for
/// the relation next to the KL computed directly from the covariance pair.
/// The two should agree; `mismatch` marks rows where they do not, and such a
/// row must never be silently dropped (the reversal relation is known to
/// disagree: its formula value beta^2 + beta^4/2 - beta goes negative for
/// small beta, while the direct computation gives beta^4/2).
struct OneEdgeKlCase {
    OneEdgeRelation relation;
    double formula_kl = 0.0;
    double direct_kl = 0.0;
    bool mismatch = false;
};

inline constexpr double kOneEdgeKlTol = 1e-9;

inline std::vector<OneEdgeKlCase> one_edge_kl_table(double beta, double sigma2 = 1.0) {
    if (!(beta > 0.0)) throw std::invalid_argument("one_edge_kl_table: beta must be positive");
    const double b2 = beta * beta;
    const double b4 = b2 * b2;
    // Four nodes are enough to realize every relation with u=0, v=1.
    const int d = 4;
    const CovEstimate base = one_edge_covariance(d, 0, 1, beta, sigma2);
    struct CaseDef {
        OneEdgeRelation rel;
        int j, k;
        double formula;
    };
    const std::array<CaseDef, 6> cases = {{
        {OneEdgeRelation::disjoint, 2, 3, b2},
        {OneEdgeRelation::shared_tail, 0, 2, b2},
        {OneEdgeRelation::shared_head, 2, 1, b2},
        {OneEdgeRelation::reversal, 1, 0, b2 + b4 / 2.0 - beta},
        {OneEdgeRelation::head_to_tail, 1, 2, b2 + b4 / 2.0},
        {OneEdgeRelation::tail_to_head, 2, 0, b2},
    }};
    std::vector<OneEdgeKlCase> table;
    table.reserve(cases.size());
    for (const auto& s : cases) {
        const CovEstimate other = one_edge_covariance(d, s.j, s.k, beta, sigma2);
        OneEdgeKlCase row;
        row.relation = s.rel;
        row.formula_kl = s.formula;
        row.direct_kl = gaussian_kl(base, other);
        row.mismatch = std::abs(row.formula_kl - row.direct_kl) > kOneEdgeKlTol;
        table.push_back(row);
    }
    return table;
}

/// Sample sizes below this make any DAG estimator delta-unreliable:
/// (1 - 2 delta) * max(log d / beta_min^2, q log(d/q) / (M^2 - 1)).
inline double fano_threshold_dag(const BoundsQuery& bq) {
    bq.validate();
    const double first = std::log(static_cast<double>(bq.d)) / (bq.beta_min * bq.beta_min);
    const double second =
        bq.q * std::log(static_cast<double>(bq.d) / bq.q) / (bq.m * bq.m - 1.0);
    return (1.0 - 2.0 * bq.delta) * std::max(first, second);
}

/// Undirected-graph analogue:
/// max(2 (1 - delta) log d / beta_min^2, (1 - 2 delta) q log(d/q) / (M^2 - 1)).
inline double fano_threshold_ug(const BoundsQuery& bq) {
    bq.validate();
    const double first =
        2.0 * (1.0 - bq.delta) * std::log(static_cast<double>(bq.d)) / (bq.beta_min * bq.beta_min);
    const double second = (1.0 - 2.0 * bq.delta) * bq.q *
                          std::log(static_cast<double>(bq.d) / bq.q) / (bq.m * bq.m - 1.0);
    return std::max(first, second);
}

namespace detail {

/// Visit every directed graph on d nodes (as child bitmasks per node) whose
/// in-degrees are all <= q and which is acyclic. Exponential by design; the
/// callers keep d <= 5.
template <typename Fn>
void for_each_dag(int d, int q, Fn&& fn) {
    const int npairs = d * (d - 1);
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<std::size_t>(npairs));
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (i != j) pairs.emplace_back(i, j);
        }
    }
    std::vector<std::uint32_t> children(static_cast<std::size_t>(d));
    std::vector<int> in_degree(static_cast<std::size_t>(d));
    const std::uint64_t total = 1ull << npairs;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        std::fill(children.begin(), children.end(), 0u);
        std::fill(in_degree.begin(), in_degree.end(), 0);
        bool ok = true;
        for (int b = 0; b < npairs && ok; ++b) {
            if (mask & (1ull << b)) {
                const auto [i, j] = pairs[static_cast<std::size_t>(b)];
                children[static_cast<std::size_t>(i)] |= 1u << j;
                if (++in_degree[static_cast<std::size_t>(j)] > q) ok = false;
            }
        }
        if (!ok) continue;
        // Kahn on bitmasks.
        std::uint32_t removed = 0;
        for (int round = 0; round < d; ++round) {
            int next = -1;
            for (int k = 0; k < d; ++k) {
                if (!(removed & (1u << k)) && in_degree[static_cast<std::size_t>(k)] == 0) {
                    next = k;
                    break;
                }
            }
            if (next < 0) {
                ok = false;
                break;
            }
            removed |= 1u << next;
            std::uint32_t ch = children[static_cast<std::size_t>(next)];
            while (ch) {
                const int j = std::countr_zero(ch);
                ch &= ch - 1;
                --in_degree[static_cast<std::size_t>(j)];
            }
        }
        if (ok) fn(mask, pairs);
    }
}

}  // namespace detail

/// Exact count of labeled DAGs on d nodes with every in-degree <= q, by
/// enumeration over all 2^(d(d-1)) directed graphs. Restricted to d <= 5;
/// the exponential cost is the point, since this is the reference counter.
inline std::uint64_t count_dags_exact(int d, int q) {
    if (d < 1) throw std::invalid_argument("count_dags_exact: d must be >= 1");
    if (d > 5) throw std::invalid_argument("count_dags_exact: enumeration limited to d <= 5");
    if (q < 0) throw std::invalid_argument("count_dags_exact: q must be >= 0");
    std::uint64_t count = 0;
    detail::for_each_dag(d, q, [&](std::uint64_t, const auto&) { ++count; });
    return count;
}

/// Log of the layered-construction lower bound on the same count:
/// partition the nodes into q+1 groups of size floor(d/(q+1)) and wire each
/// later group to each earlier one through a free permutation, giving
/// (floor(d/(q+1))!)^(q(q+1)/2) distinct DAGs. Natural log.
inline double count_dags_construction_lower(int d, int q) {
    if (q < 1 || q + 1 > d) throw std::invalid_argument("count_dags_construction_lower: need 1 <= q <= d-1");
    const int group = d / (q + 1);
    const double log_factorial = std::lgamma(static_cast<double>(group) + 1.0);
    return 0.5 * q * (q + 1) * log_factorial;
}

struct StructuredLogDet {
    double exact = 0.0;          // (p-1) log(1+a-b) + log(1+a+(p-1)b)
    double approximation = 0.0;  // p * a
};

/// Log-determinant of the p x p matrix with 1+a on the diagonal and b off
/// the diagonal, via the rank-one update identity
/// det = (1+a-b)^(p-1) (1+a+(p-1)b), together with the small-parameter
/// approximation p*a.
inline StructuredLogDet structured_logdet(int p, double a, double b) {
    if (p < 1) throw std::invalid_argument("structured_logdet: p must be >= 1");
    const double base = 1.0 + a - b;
    const double spike = 1.0 + a + (p - 1) * b;
    if (!(base > 0.0) || !(spike > 0.0)) {
        throw std::domain_error("structured_logdet: parameters outside the positive definite range");
    }
    StructuredLogDet r;
    r.exact = (p - 1) * std::log1p(a - b) + std::log1p(a + (p - 1) * b);
    r.approximation = static_cast<double>(p) * a;
    return r;
}

/// Average covariance of the ensemble of all d(d-1) single-edge models with
/// coefficient beta: diagonal sigma2 (1 + beta^2/d), off-diagonal
/// sigma2 * 2 beta / (d(d-1)). Its log-determinant is structured_logdet with
/// p = d, a = beta^2/d, b = 2 beta/(d(d-1)) (up to the sigma2 scaling).
inline CovEstimate ggm_one_edge_ensemble_avg(int d, double beta, double sigma2 = 1.0) {
    if (d < 2) throw std::invalid_argument("ggm_one_edge_ensemble_avg: d must be >= 2");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("ggm_one_edge_ensemble_avg: sigma2 must be positive");
    const double diag = 1.0 + beta * beta / d;
    const double off = 2.0 * beta / (static_cast<double>(d) * (d - 1));
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(d, d, sigma2 * off);
    m.diagonal().setConstant(sigma2 * diag);
    return CovEstimate(std::move(m), CovOrigin::population());
}

}  // namespace evdag
