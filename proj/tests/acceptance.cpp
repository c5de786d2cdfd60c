// Acceptance suite: one self-contained check per shipped guarantee, each
// printing a single [PASS]/[FAIL] line (plus indented details) and the
// binary exiting nonzero if anything failed. Run all criteria with no
// arguments or a single one with --criterion N.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "evdag/bounds.hpp"
#include "evdag/harness.hpp"
#include "evdag/learner.hpp"
#include "evdag/oracle.hpp"
#include "evdag/sem.hpp"

using namespace evdag;

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Exact recovery from the exact covariance with gamma = Delta/2, across
//    500 random models spanning d in 4..12 and q in 1..3 (with 2q <= d).
bool criterion_population_exactness(std::ostream& log) {
    const auto t0 = std::chrono::steady_clock::now();
    int total = 0, exact = 0, predicted_failures = 0, unexplained = 0;
    for (int d = 4; d <= 12; ++d) {
        for (int q = 1; q <= 3 && 2 * q <= d; ++q) {
            for (int rep = 0; rep < 20; ++rep) {
                const SemModel m =
                    random_model(d, q, derive_key(1001, {static_cast<std::uint64_t>(d),
                                                         static_cast<std::uint64_t>(q),
                                                         static_cast<std::uint64_t>(rep)}),
                                 0.3, 0.5, 1.0);
                LearnerConfig cfg;
                cfg.q = q;
                cfg.gamma = m.variance_gap() / 2.0;
                const bool ok = learn_dag(m.covariance(), cfg).dag == m.graph();
                if (ok) {
                    ++exact;
                } else if (leave_one_out_gap(m) <= *cfg.gamma) {
                    // A parent set containing an ancestor-descendant pair: the
                    // leave-one-out change for the weak parent sits below
                    // Delta/2, so the backward phase prunes a true edge.
                    ++predicted_failures;
                } else {
                    ++unexplained;
                }
                ++total;
            }
        }
    }
    const double elapsed = seconds_since(t0);
    log << "  " << exact << "/" << total << " exact recoveries in " << elapsed << " s\n";
    if (exact != total) {
        log << "  " << predicted_failures
            << " failure(s) are models whose leave-one-out gap falls below Delta/2 "
               "(parent sets with internal ancestor-descendant pairs); "
            << unexplained << " unexplained\n";
    }
    return total >= 500 && exact == total && elapsed < 30.0;
}

// 2. Scaled simulation-study reproduction at d=20, q=2: recovery at n=560 is
//    at least 0.80 and the curve is nondecreasing within a 2-SE band.
bool criterion_recovery_curve(std::ostream& log) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentSpec spec;
    spec.d_grid = {20};
    spec.q_grid = {2};
    spec.n_grid = {80, 160, 240, 320, 400, 480, 560};
    spec.reps = 100;
    spec.sigma = 0.3;
    spec.beta_low = 0.5;
    spec.beta_high = 1.0;
    spec.gamma_mode = GammaMode::population_gap_half();
    spec.master_seed = 2024;
    spec.threads = 1;
    const ExperimentResult r = run_experiment(spec);
    const double elapsed = seconds_since(t0);

    bool monotone = true;
    log << "  n:rate";
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
        log << ' ' << r.cells[i].n << ':' << r.cells[i].recovery_rate;
        if (i > 0) {
            const double p0 = r.cells[i - 1].recovery_rate;
            const double p1 = r.cells[i].recovery_rate;
            const double se = std::sqrt(p0 * (1 - p0) / spec.reps + p1 * (1 - p1) / spec.reps);
            if (p1 < p0 - 2.0 * se) monotone = false;
        }
    }
    const double final_rate = r.cells.back().recovery_rate;
    log << "\n  final rate " << final_rate << ", monotone(2SE)=" << (monotone ? "yes" : "no")
        << ", " << elapsed << " s single-threaded\n";
    return final_rate >= 0.80 && monotone && elapsed < 600.0;
}

// 3. Harder in-degree costs samples: at d=40, n=320, recovery for q=2 beats
//    q=4 by more than two standard errors.
bool criterion_q_dependence(std::ostream& log) {
    ExperimentSpec spec;
    spec.d_grid = {40};
    spec.q_grid = {2, 4};
    spec.n_grid = {320};
    spec.reps = 100;
    spec.gamma_mode = GammaMode::population_gap_half();
    spec.master_seed = 3030;
    const ExperimentResult r = run_experiment(spec);
    const double p2 = r.cells[0].recovery_rate;
    const double p4 = r.cells[1].recovery_rate;
    const double se = std::sqrt(p2 * (1 - p2) / spec.reps + p4 * (1 - p4) / spec.reps);
    log << "  q=2 rate " << p2 << ", q=4 rate " << p4 << ", gap " << p2 - p4 << ", 2SE "
        << 2 * se << '\n';
    return p2 - p4 > 2.0 * se;
}

// 4. Single-edge ensemble KL table: five relations match their closed-form
//    constants to 1e-9; the reversal relation matches the direct value
//    beta^4/2 and its formula disagreement is flagged, never silent.
bool criterion_kl_table(std::ostream& log) {
    bool ok = true;
    for (double beta : {0.3, 0.5, 1.0}) {
        const double b2 = beta * beta, b4 = b2 * b2;
        for (const auto& row : one_edge_kl_table(beta)) {
            if (row.relation == OneEdgeRelation::reversal) {
                if (std::abs(row.direct_kl - b4 / 2) > 1e-9) ok = false;
                const bool expect_flag = std::abs(row.formula_kl - row.direct_kl) > 1e-9;
                if (row.mismatch != expect_flag) ok = false;
                if (row.mismatch) {
                    log << "  beta=" << beta << " reversal: formula " << row.formula_kl
                        << " vs direct " << row.direct_kl << "  [flagged discrepancy]\n";
                }
            } else {
                const double want = row.relation == OneEdgeRelation::head_to_tail ? b2 + b4 / 2 : b2;
                if (std::abs(row.formula_kl - want) > 1e-12) ok = false;
                if (std::abs(row.direct_kl - row.formula_kl) > 1e-9) ok = false;
                if (row.mismatch) ok = false;
            }
        }
    }
    // Monte Carlo agreement at m = 1e6 on a matching and a mismatching relation.
    const CovEstimate base = one_edge_covariance(4, 0, 1, 0.5);
    const struct {
        int j, k;
        const char* name;
    } pairs[] = {{2, 3, "disjoint"}, {1, 2, "head-to-tail"}, {1, 0, "reversal"}};
    for (const auto& p : pairs) {
        const CovEstimate other = one_edge_covariance(4, p.j, p.k, 0.5);
        const double exact = gaussian_kl(base, other);
        const auto mc = oracle::monte_carlo_kl(base, other, 1000000, 404);
        log << "  MC " << p.name << ": " << mc.estimate << " +- " << mc.std_error << " vs exact "
            << exact << '\n';
        if (std::abs(mc.estimate - exact) > 3.0 * mc.std_error) ok = false;
    }
    return ok;
}

// 5. DAG counting: the enumerator reproduces the known small counts and the
//    layered construction never exceeds it.
bool criterion_dag_counts(std::ostream& log) {
    bool ok = count_dags_exact(2, 1) == 3 && count_dags_exact(3, 1) == 16 &&
              count_dags_exact(3, 2) == 25 && count_dags_exact(4, 3) == 543;
    log << "  counts (2,1)=" << count_dags_exact(2, 1) << " (3,1)=" << count_dags_exact(3, 1)
        << " (3,2)=" << count_dags_exact(3, 2) << " (4,3)=" << count_dags_exact(4, 3) << '\n';
    for (int d = 2; d <= 5; ++d) {
        for (int q = 1; q < d; ++q) {
            const double lower = std::exp(count_dags_construction_lower(d, q));
            const auto exact = count_dags_exact(d, q);
            if (lower > static_cast<double>(exact) + 1e-9) {
                log << "  construction bound exceeds exact count at d=" << d << " q=" << q << '\n';
                ok = false;
            }
        }
    }
    return ok;
}

// 6. Structured determinant: closed form matches a dense factorization to
//    1e-10 through p=50 and the p*a approximation is within 1% at
//    p=100, a=1e-3, b=1e-6.
bool criterion_structured_logdet(std::ostream& log) {
    bool ok = true;
    double worst = 0.0;
    Rng rng(606);
    for (int p = 1; p <= 50; ++p) {
        const double a = rng.uniform(0.0, 0.5);
        const double b = p > 1 ? rng.uniform(0.0, 0.9 / p) : 0.0;
        const auto r = structured_logdet(p, a, b);
        Eigen::MatrixXd m = Eigen::MatrixXd::Constant(p, p, b);
        m.diagonal().setConstant(1.0 + a);
        const Eigen::LLT<Eigen::MatrixXd> llt(m);
        if (llt.info() != Eigen::Success) {
            ok = false;
            continue;
        }
        const double dense = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        worst = std::max(worst, std::abs(r.exact - dense));
    }
    if (worst > 1e-10) ok = false;
    const auto r100 = structured_logdet(100, 1e-3, 1e-6);
    const double rel = std::abs(r100.exact - r100.approximation) / std::abs(r100.approximation);
    log << "  worst |exact - dense| over p<=50: " << worst << "; p=100 relative gap " << rel << '\n';
    return ok && rel < 0.01;
}

// 7. Moralization pipeline: on 200 random models the precision-support
//    condition holds and the learned undirected graph equals the moral graph
//    of the truth.
bool criterion_moralization(std::ostream& log) {
    int total = 0, good = 0, cond_ok = 0, predicted_failures = 0;
    for (int i = 0; i < 200; ++i) {
        const int d = 4 + (i % 7);  // 4..10
        const int max_q = std::min(3, d / 2);
        const int q = 1 + (i % max_q);
        const SemModel m = random_model(d, q, derive_key(707, {static_cast<std::uint64_t>(i)}),
                                        0.3, 0.5, 1.0);
        LearnerConfig cfg;
        cfg.q = q;
        cfg.gamma = m.variance_gap() / 2.0;
        const bool cond = check_condition_moral(m);
        const bool match = learn_ug(m.covariance(), cfg) == moralize(m.graph());
        cond_ok += cond ? 1 : 0;
        if (cond && match) {
            ++good;
        } else if (!match && leave_one_out_gap(m) <= *cfg.gamma) {
            ++predicted_failures;
        }
        ++total;
    }
    log << "  " << good << "/" << total << " models: condition holds and learned UG = moral graph"
        << " (precision-support condition alone: " << cond_ok << "/" << total << ")\n";
    if (good != total) {
        log << "  " << predicted_failures
            << " failure(s) trace to the backward phase pruning a weak parent whose "
               "leave-one-out gap sits below Delta/2\n";
    }
    return good == total;
}

// 8. Identifiability oracle: the exact covariance of every small random model
//    admits exactly one equal-variance parameterization, the truth.
bool criterion_identifiability(std::ostream& log) {
    int total = 0, good = 0;
    for (int i = 0; i < 200; ++i) {
        const int d = 2 + (i % 3);  // 2..4
        const int q = std::max(1, d / 2);
        const SemModel m = random_model(d, q, derive_key(808, {static_cast<std::uint64_t>(i)}),
                                        0.3, 0.5, 1.0);
        const auto survivors = oracle::exhaustive_identifiability(m.covariance(), q);
        if (survivors.size() == 1 && survivors.front() == m.graph()) ++good;
        ++total;
    }
    log << "  " << good << "/" << total << " models identified uniquely\n";
    return good == total;
}

// 9. Concentration direction: for a fixed 5-node model the frequency of
//    |v_hat - v| > 0.1 drops at least tenfold from n=50 to n=400.
bool criterion_concentration(std::ostream& log) {
    const SemModel m(WeightedDag(5, {{0, 1, 0.9}, {1, 2, 0.9}, {2, 3, 0.9}, {3, 4, 0.9}}), 0.5);
    const int k = 4;
    const std::vector<int> cond{3};
    const double truth = oracle::population_cond_var(m, k, cond);  // sigma2 = 0.5
    const int reps = 2000;
    auto exceedances = [&](long n, std::uint64_t salt) {
        int count = 0;
        for (int r = 0; r < reps; ++r) {
            const CovEstimate cov = sample_cov(
                sample(m, n, derive_key(909, {salt, static_cast<std::uint64_t>(r)})));
            if (std::abs(cond_var(cov, k, cond) - truth) > 0.1) ++count;
        }
        return count;
    };
    const int c50 = exceedances(50, 1);
    const int c400 = exceedances(400, 2);
    log << "  exceedances: " << c50 << "/" << reps << " at n=50, " << c400 << "/" << reps
        << " at n=400 (need a 10x drop and a nontrivial base count)\n";
    return c50 >= 10 * c400 && c50 >= 10;
}

struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::ostream&)> run;
};

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> all = {
        {1, "population exactness of the learner at gamma = Delta/2", criterion_population_exactness},
        {2, "recovery curve at d=20, q=2 reaches 0.80 and is monotone", criterion_recovery_curve},
        {3, "recovery at d=40, n=320 degrades from q=2 to q=4", criterion_q_dependence},
        {4, "single-edge KL table matches, reversal discrepancy flagged", criterion_kl_table},
        {5, "DAG counting oracle and construction lower bound", criterion_dag_counts},
        {6, "structured log-determinant closed form", criterion_structured_logdet},
        {7, "moralization pipeline recovers the undirected structure", criterion_moralization},
        {8, "identifiability oracle finds a unique model", criterion_identifiability},
        {9, "conditional-variance concentration improves 10x with n", criterion_concentration},
    };
    return all;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else {
            std::cerr << "usage: acceptance [--criterion N]\n";
            return 2;
        }
    }
    bool all_passed = true;
    for (const auto& c : criteria()) {
        if (only != 0 && c.id != only) continue;
        std::ostringstream details;
        bool ok = false;
        try {
            ok = c.run(details);
        } catch (const std::exception& e) {
            details << "  exception: " << e.what() << '\n';
        }
        std::cout << (ok ? "[PASS] " : "[FAIL] ") << "criterion " << c.id << ": " << c.name << '\n'
                  << details.str();
        all_passed = all_passed && ok;
    }
    return all_passed ? 0 : 1;
}
