#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace evdag {

/// Thrown when a conditioning block (or a full matrix that must be positive
/// definite) has a Cholesky pivot below tolerance.
class SingularBlockError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Relative pivot tolerance: a Cholesky pivot below tol * max(diag) is
/// treated as singular. With n >= |C|+1 generic samples this never fires.
inline constexpr double kSingularPivotRel = 1e-12;

struct CovOrigin {
    enum class Kind { population, sample };
    Kind kind = Kind::population;
    long sample_size = 0;  // meaningful only when kind == sample

    static CovOrigin population() { return {Kind::population, 0}; }
    static CovOrigin sample(long n) { return {Kind::sample, n}; }
    bool is_sample() const { return kind == Kind::sample; }
};

/// A d x d symmetric covariance matrix (population or sample) with its
/// provenance tag. Immutable after construction; symmetrized on input and
/// rejected if the asymmetry exceeds 1e-8 relative to the largest entry.
class CovEstimate {
  public:
    CovEstimate(Eigen::MatrixXd m, CovOrigin origin = CovOrigin::population())
        : m_(std::move(m)), origin_(origin) {
        if (m_.rows() != m_.cols()) throw std::invalid_argument("CovEstimate: matrix not square");
        const double scale = std::max(m_.cwiseAbs().maxCoeff(), 1.0);
        const double asym = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-8 * scale) {
            throw std::invalid_argument("CovEstimate: matrix is not symmetric (max asymmetry " +
                                        std::to_string(asym) + ")");
        }
        m_ = ((m_ + m_.transpose()) / 2.0).eval();
    }

    int dim() const { return static_cast<int>(m_.rows()); }
    const Eigen::MatrixXd& matrix() const { return m_; }
    const CovOrigin& origin() const { return origin_; }
    double operator()(int i, int j) const { return m_(i, j); }

  private:
    Eigen::MatrixXd m_;
    CovOrigin origin_;
};

/// Sample covariance. Default is the uncentered Gram form (1/n) X^T X for
/// zero-mean models; center=true subtracts column means first (still 1/n).
inline CovEstimate sample_cov(const Eigen::MatrixXd& data, bool center = false) {
    const auto n = data.rows();
    const auto d = data.cols();
    if (n < 1 || d < 1) throw std::invalid_argument("sample_cov: empty data matrix");
    Eigen::MatrixXd m;
    if (center) {
        const Eigen::RowVectorXd mean = data.colwise().mean();
        const Eigen::MatrixXd centered = data.rowwise() - mean;
        m = (centered.transpose() * centered) / static_cast<double>(n);
    } else {
        m = (data.transpose() * data) / static_cast<double>(n);
    }
    return CovEstimate(std::move(m), CovOrigin::sample(static_cast<long>(n)));
}

namespace detail {

inline void check_index(int k, int d, const char* what) {
    if (k < 0 || k >= d) {
        throw std::invalid_argument(std::string(what) + ": node " + std::to_string(k) +
                                    " out of range [0, " + std::to_string(d) + ")");
    }
}

/// In-place lower Cholesky of the s x s row-major block `a`. Returns false
/// when a pivot falls below kSingularPivotRel * max(diag).
inline bool cholesky_in_place(double* a, int s) {
    double max_diag = 0.0;
    for (int j = 0; j < s; ++j) max_diag = std::max(max_diag, a[j * s + j]);
    const double tol = kSingularPivotRel * max_diag;
    for (int j = 0; j < s; ++j) {
        double piv = a[j * s + j];
        for (int t = 0; t < j; ++t) piv -= a[j * s + t] * a[j * s + t];
        if (!(piv > tol)) return false;
        const double ljj = std::sqrt(piv);
        a[j * s + j] = ljj;
        for (int i = j + 1; i < s; ++i) {
            double v = a[i * s + j];
            for (int t = 0; t < j; ++t) v -= a[i * s + t] * a[j * s + t];
            a[i * s + j] = v / ljj;
        }
    }
    return true;
}

/// Reusable buffers for repeated Schur-complement evaluations.
struct SchurWorkspace {
    std::vector<double> block;  // conditioning block, row-major
    std::vector<double> rhs;    // cross-covariance column, then the solve

    /// v_{kC} = S_kk - S_kC S_CC^{-1} S_Ck via one Cholesky solve.
    /// Returns NaN when the conditioning block is singular.
    double cond_var(const Eigen::MatrixXd& m, int k, const int* cond, int s) {
        if (s == 0) return m(k, k);
        block.resize(static_cast<std::size_t>(s) * static_cast<std::size_t>(s));
        rhs.resize(static_cast<std::size_t>(s));
        for (int i = 0; i < s; ++i) {
            for (int j = 0; j < s; ++j) block[static_cast<std::size_t>(i * s + j)] = m(cond[i], cond[j]);
            rhs[static_cast<std::size_t>(i)] = m(cond[i], k);
        }
        if (!cholesky_in_place(block.data(), s)) return std::numeric_limits<double>::quiet_NaN();
        // Forward solve L y = rhs; residual variance is S_kk - |y|^2.
        double yy = 0.0;
        for (int i = 0; i < s; ++i) {
            double v = rhs[static_cast<std::size_t>(i)];
            for (int t = 0; t < i; ++t) v -= block[static_cast<std::size_t>(i * s + t)] * rhs[static_cast<std::size_t>(t)];
            v /= block[static_cast<std::size_t>(i * s + i)];
            rhs[static_cast<std::size_t>(i)] = v;
            yy += v * v;
        }
        return m(k, k) - yy;
    }
};

inline std::vector<int> checked_sorted_nodes(std::span<const int> nodes, int d, int k, const char* what) {
    std::vector<int> c(nodes.begin(), nodes.end());
    std::sort(c.begin(), c.end());
    if (std::adjacent_find(c.begin(), c.end()) != c.end()) {
        throw std::invalid_argument(std::string(what) + ": duplicate node in set");
    }
    for (int u : c) {
        if (u < 0 || u >= d) {
            throw std::invalid_argument(std::string(what) + ": node " + std::to_string(u) +
                                        " out of range [0, " + std::to_string(d) + ")");
        }
        if (u == k) {
            throw std::invalid_argument(std::string(what) + ": target node " + std::to_string(k) +
                                        " may not appear in the conditioning set");
        }
    }
    return c;
}

}  // namespace detail

/// Conditional variance of node k given the set C: the Schur complement
/// S_kk - S_kC S_CC^{-1} S_Ck. For C = {} this is the marginal S_kk.
/// Throws SingularBlockError when Chol(S_CC) breaks down.
inline double cond_var(const CovEstimate& c, int k, std::span<const int> cond) {
    const int d = c.dim();
    detail::check_index(k, d, "cond_var");
    const auto cs = detail::checked_sorted_nodes(cond, d, k, "cond_var");
    detail::SchurWorkspace ws;
    const double v = ws.cond_var(c.matrix(), k, cs.data(), static_cast<int>(cs.size()));
    if (std::isnan(v)) {
        throw SingularBlockError("cond_var: singular conditioning block for node " + std::to_string(k));
    }
    return v;
}

enum class SingularPolicy {
    error,  // throw SingularBlockError
    skip,   // treat the subset as +infinity and count it
};

struct MinCondVar {
    double value = 0.0;
    std::vector<int> subset;  // one minimizing set, sorted ascending
    long singular_skips = 0;
};

/// Improvements below this fraction of the marginal variance count as ties,
/// so the subset tie-break does not hinge on last-bit rounding. Candidate
/// values with a real difference sit far above this on any sane input.
inline constexpr double kMinCondVarTieRel = 1e-12;

/// Minimum of cond_var(c, k, C) over all C subset of `pool` with |C| <= q,
/// including the empty set. Subsets are enumerated by increasing cardinality
/// and lexicographically within a cardinality (pool sorted ascending), and
/// only improvements beyond the tie tolerance replace the incumbent, so ties
/// resolve to the smallest set first and the lexicographically least set
/// within a size.
inline MinCondVar min_cond_var(const CovEstimate& c, int k, std::span<const int> pool, int q,
                               SingularPolicy policy = SingularPolicy::error) {
    const int d = c.dim();
    detail::check_index(k, d, "min_cond_var");
    if (q < 0) throw std::invalid_argument("min_cond_var: negative subset cap");
    const auto p = detail::checked_sorted_nodes(pool, d, k, "min_cond_var");
    const int np = static_cast<int>(p.size());
    const int cap = std::min(q, np);

    MinCondVar best;
    best.value = c(k, k);  // C = {}
    const double tie_tol = kMinCondVarTieRel * std::abs(best.value);
    detail::SchurWorkspace ws;
    std::vector<int> idx, subset;
    for (int s = 1; s <= cap; ++s) {
        idx.resize(static_cast<std::size_t>(s));
        for (int i = 0; i < s; ++i) idx[static_cast<std::size_t>(i)] = i;
        subset.resize(static_cast<std::size_t>(s));
        while (true) {
            for (int i = 0; i < s; ++i) subset[static_cast<std::size_t>(i)] = p[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
            const double v = ws.cond_var(c.matrix(), k, subset.data(), s);
            if (std::isnan(v)) {
                if (policy == SingularPolicy::error) {
                    throw SingularBlockError("min_cond_var: singular conditioning block for node " +
                                             std::to_string(k));
                }
                ++best.singular_skips;
            } else if (v < best.value - tie_tol) {
                best.value = v;
                best.subset = subset;
            }
            // next combination in lexicographic order
            int i = s - 1;
            while (i >= 0 && idx[static_cast<std::size_t>(i)] == np - s + i) --i;
            if (i < 0) break;
            ++idx[static_cast<std::size_t>(i)];
            for (int t = i + 1; t < s; ++t) idx[static_cast<std::size_t>(t)] = idx[static_cast<std::size_t>(t - 1)] + 1;
        }
    }
    return best;
}

struct SpectralBounds {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    /// Single norm bound M with 1/M <= lambda_min <= lambda_max <= M.
    double m_hat = 0.0;
};

inline SpectralBounds spectral_bounds(const CovEstimate& c) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.matrix(), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("spectral_bounds: eigensolver failed");
    SpectralBounds b;
    b.lambda_min = es.eigenvalues().minCoeff();
    b.lambda_max = es.eigenvalues().maxCoeff();
    b.m_hat = std::max(b.lambda_max, 1.0 / std::max(b.lambda_min, 1e-12));
    return b;
}

}  // namespace evdag
