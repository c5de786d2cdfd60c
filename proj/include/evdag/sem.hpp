#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "evdag/covest.hpp"
#include "evdag/graph.hpp"
#include "evdag/rng.hpp"

namespace evdag {

struct WeightedEdge {
    int parent = 0;
    int child = 0;
    double weight = 0.0;
};

/// Coefficient matrix B with acyclic support: B(j, k) is the weight of edge
/// j -> k. Weights are stored exactly (off-support entries are exact zeros).
class WeightedDag {
  public:
    WeightedDag() : b_(Eigen::MatrixXd::Zero(0, 0)) {}

    WeightedDag(int d, const std::vector<WeightedEdge>& edges)
        : b_(Eigen::MatrixXd::Zero(d, d)) {
        EdgeList support;
        support.reserve(edges.size());
        for (const auto& e : edges) {
            if (!(std::isfinite(e.weight)) || e.weight == 0.0) {
                throw std::invalid_argument("WeightedDag: edge weights must be finite and nonzero");
            }
            support.emplace_back(e.parent, e.child);
        }
        dag_ = Dag(d, std::move(support));  // validates ranges, duplicates, acyclicity
        for (const auto& e : edges) b_(e.parent, e.child) = e.weight;
    }

    int node_count() const { return dag_.node_count(); }
    const Dag& graph() const { return dag_; }
    const Eigen::MatrixXd& coefficients() const { return b_; }
    double weight(int parent, int child) const { return b_(parent, child); }
    int max_in_degree() const { return evdag::max_in_degree(dag_); }

    /// Smallest nonzero |coefficient|. Undefined for an empty graph.
    double beta_min() const {
        if (dag_.edge_count() == 0) {
            throw std::domain_error("beta_min: undefined for a model with no edges");
        }
        double m = std::numeric_limits<double>::infinity();
        for (const auto& [u, v] : dag_.edges()) m = std::min(m, std::abs(b_(u, v)));
        return m;
    }

  private:
    Dag dag_;
    Eigen::MatrixXd b_;
};

/// Linear Gaussian structural equation model X = B^T X + eps with a common
/// noise variance sigma2 across all nodes.
class SemModel {
  public:
    SemModel() : sigma2_(1.0) {}

    SemModel(WeightedDag wdag, double sigma2) : wdag_(std::move(wdag)), sigma2_(sigma2) {
        if (!(sigma2_ > 0.0) || !std::isfinite(sigma2_)) {
            throw std::invalid_argument("SemModel: sigma2 must be positive and finite");
        }
    }

    const WeightedDag& weighted_dag() const { return wdag_; }
    const Dag& graph() const { return wdag_.graph(); }
    int node_count() const { return wdag_.node_count(); }
    double sigma2() const { return sigma2_; }

    /// Exact population covariance sigma2 * (I-B)^{-T} (I-B)^{-1}, built by
    /// propagating rows of (I-B^T)^{-1} along a topological order (the system
    /// is unit triangular under that permutation, so no pivoting is needed).
    CovEstimate covariance() const {
        const int d = node_count();
        const Eigen::MatrixXd& b = wdag_.coefficients();
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(d, d);  // t = (I - B^T)^{-1}
        for (int k : topological_sort(graph())) {
            t(k, k) = 1.0;
            for (int p : graph().parents(k)) t.row(k) += b(p, k) * t.row(p);
        }
        Eigen::MatrixXd cov = sigma2_ * (t * t.transpose());
        return CovEstimate(std::move(cov), CovOrigin::population());
    }

    /// Identifiability gap Delta = beta_min^2 * sigma2: the minimal excess
    /// conditional variance when a true parent is left out of the
    /// conditioning set. Undefined when the graph has no edges.
    double variance_gap() const {
        if (graph().edge_count() == 0) {
            throw std::domain_error("variance_gap: undefined for a model with no edges");
        }
        const double bmin = wdag_.beta_min();
        return bmin * bmin * sigma2_;
    }

  private:
    WeightedDag wdag_;
    double sigma2_;
};

/// Smallest leave-one-out increase of the conditional variance over all
/// (node, parent) pairs: min over k and i in pa(k) of
/// var(X_k | pa(k) \ {i}) - var(X_k | pa(k)), computed from the exact
/// covariance. The backward pruning phase keeps every true parent exactly
/// when gamma is strictly below this value. Note this can be smaller than
/// variance_gap(): dropping a parent i while still conditioning on a
/// descendant of i (a co-parent downstream of i) shrinks the residual
/// information about i below the sigma2 floor that variance_gap() assumes,
/// so the gap is beta_ik^2 * var(X_i | pa(k) \ {i}), not beta_ik^2 * sigma2.
inline double leave_one_out_gap(const SemModel& m) {
    if (m.graph().edge_count() == 0) {
        throw std::domain_error("leave_one_out_gap: undefined for a model with no edges");
    }
    const CovEstimate cov = m.covariance();
    double gap = std::numeric_limits<double>::infinity();
    for (int k = 0; k < m.node_count(); ++k) {
        const auto& pa = m.graph().parents(k);
        if (pa.empty()) continue;
        const double v_full = cond_var(cov, k, pa);
        std::vector<int> rest;
        for (std::size_t drop = 0; drop < pa.size(); ++drop) {
            rest.clear();
            for (std::size_t t = 0; t < pa.size(); ++t) {
                if (t != drop) rest.push_back(pa[t]);
            }
            gap = std::min(gap, cond_var(cov, k, rest) - v_full);
        }
    }
    return gap;
}

/// Random model: draw a uniform permutation tau, give node tau_j exactly
/// min(q, j-1) parents drawn uniformly without replacement from its
/// predecessors, and set each coefficient to an independent sign times
/// Unif(beta_low, beta_high]. Requires 2q <= d (d = 1 yields the empty model).
inline SemModel random_model(int d, int q, std::uint64_t seed, double sigma, double beta_low,
                             double beta_high) {
    if (d < 1) throw std::invalid_argument("random_model: d must be >= 1");
    if (!(sigma > 0.0)) throw std::invalid_argument("random_model: sigma must be positive");
    if (!(beta_low > 0.0) || beta_low > beta_high) {
        throw std::invalid_argument("random_model: need 0 < beta_low <= beta_high");
    }
    if (d == 1) return SemModel(WeightedDag(1, {}), sigma * sigma);
    if (q < 1 || 2 * q > d) {
        throw std::invalid_argument("random_model: in-degree bound must satisfy 1 <= q <= d/2");
    }
    Rng rng(derive_key(seed, {0x6d6f64656cull}));  // "model"
    const std::vector<int> tau = rng.permutation(d);
    std::vector<WeightedEdge> edges;
    std::vector<int> pred;
    for (int j = 1; j < d; ++j) {
        const int m = std::min(q, j);
        pred.assign(tau.begin(), tau.begin() + j);
        // partial Fisher-Yates: the first m entries become the parent draw
        for (int t = 0; t < m; ++t) {
            const auto r = t + static_cast<int>(rng.below(static_cast<std::uint64_t>(j - t)));
            std::swap(pred[static_cast<std::size_t>(t)], pred[static_cast<std::size_t>(r)]);
        }
        for (int t = 0; t < m; ++t) {
            const double beta = rng.rademacher() * rng.uniform(beta_low, beta_high);
            edges.push_back({pred[static_cast<std::size_t>(t)], tau[static_cast<std::size_t>(j)], beta});
        }
    }
    return SemModel(WeightedDag(d, edges), sigma * sigma);
}

/// n i.i.d. draws by ancestral sampling along a topological order.
/// Bit-identical for a fixed (model, n, seed).
inline Eigen::MatrixXd sample(const SemModel& m, long n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    const int d = m.node_count();
    const Ordering order = topological_sort(m.graph());
    const Eigen::MatrixXd& b = m.weighted_dag().coefficients();
    const double sd = std::sqrt(m.sigma2());
    Rng rng(derive_key(seed, {0x73616d706c65ull}));  // "sample"
    Eigen::MatrixXd x(n, d);
    for (long i = 0; i < n; ++i) {
        for (int k : order) {
            double v = sd * rng.normal();
            for (int p : m.graph().parents(k)) v += b(p, k) * x(i, p);
            x(i, k) = v;
        }
    }
    return x;
}

/// True iff the support of the precision matrix equals the moral graph of
/// the coefficient support: for every pair i < j, Gamma_ij vanishes exactly
/// when there is no edge between i and j and no common child.
/// Gamma entries below 1e-8 * max|Gamma| count as zero.
inline bool check_condition_moral(const SemModel& m) {
    const int d = m.node_count();
    const CovEstimate cov = m.covariance();
    Eigen::LLT<Eigen::MatrixXd> llt(cov.matrix());
    if (llt.info() != Eigen::Success) {
        throw SingularBlockError("check_condition_moral: covariance is numerically singular");
    }
    const Eigen::MatrixXd gamma = llt.solve(Eigen::MatrixXd::Identity(d, d));
    const double tol = 1e-8 * gamma.cwiseAbs().maxCoeff();
    const Eigen::MatrixXd& b = m.weighted_dag().coefficients();
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            bool structural_zero = b(i, j) == 0.0 && b(j, i) == 0.0;
            if (structural_zero) {
                for (int k = 0; k < d && structural_zero; ++k) {
                    if (b(i, k) * b(j, k) != 0.0) structural_zero = false;
                }
            }
            const bool gamma_zero = std::abs(gamma(i, j)) <= tol;
            if (gamma_zero != structural_zero) return false;
        }
    }
    return true;
}

inline void to_json(nlohmann::json& j, const SemModel& m) {
    auto edges = nlohmann::json::array();
    for (const auto& [u, v] : m.graph().edges()) {
        edges.push_back({u, v, m.weighted_dag().weight(u, v)});
    }
    j = nlohmann::json{{"d", m.node_count()}, {"sigma2", m.sigma2()}, {"edges", std::move(edges)}};
}

inline void from_json(const nlohmann::json& j, SemModel& m) {
    std::vector<WeightedEdge> edges;
    for (const auto& e : j.at("edges")) {
        edges.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>()});
    }
    m = SemModel(WeightedDag(j.at("d").get<int>(), edges), j.at("sigma2").get<double>());
}

}  // namespace evdag
