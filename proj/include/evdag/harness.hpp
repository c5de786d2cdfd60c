#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "evdag/covest.hpp"
#include "evdag/io.hpp"
#include "evdag/learner.hpp"
#include "evdag/sem.hpp"

namespace evdag {

/// How the backward-phase threshold is chosen for each replicate.
struct GammaMode {
    enum class Kind {
        fixed,                // a user-supplied value
        tuned,                // tune_gamma on the sample covariance (the honest end-to-end mode)
        population_gap_half,  // the generating model's Delta/2; simulation-only, isolates
                              // algorithm error from tuning error
    };
    Kind kind = Kind::tuned;
    double value = 0.0;

    static GammaMode fixed(double v) { return {Kind::fixed, v}; }
    static GammaMode tuned() { return {Kind::tuned, 0.0}; }
    static GammaMode population_gap_half() { return {Kind::population_gap_half, 0.0}; }

    /// Accepts "auto", "pop", or a positive number.
    static GammaMode parse(const std::string& text) {
        if (text == "auto") return tuned();
        if (text == "pop") return population_gap_half();
        try {
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used == text.size() && v > 0.0) return fixed(v);
        } catch (const std::exception&) {
        }
        throw std::invalid_argument("gamma mode must be 'auto', 'pop', or a positive number, got '" +
                                    text + "'");
    }
};

struct ExperimentSpec {
    std::vector<int> d_grid;
    std::vector<int> q_grid;
    std::vector<long> n_grid;
    int reps = 100;
    double sigma = 0.3;
    double beta_low = 0.5;
    double beta_high = 1.0;
    GammaMode gamma_mode = GammaMode::tuned();
    std::uint64_t master_seed = 1;
    bool center = false;
    int threads = 0;  // 0 = hardware concurrency

    void validate() const {
        if (d_grid.empty() || q_grid.empty() || n_grid.empty()) {
            throw std::invalid_argument("ExperimentSpec: all grids must be nonempty");
        }
        if (reps < 1) throw std::invalid_argument("ExperimentSpec: reps must be >= 1");
        if (!(beta_low > 0.0) || beta_low > beta_high) {
            throw std::invalid_argument("ExperimentSpec: need 0 < beta_low <= beta_high");
        }
        if (!(sigma > 0.0)) throw std::invalid_argument("ExperimentSpec: sigma must be positive");
    }
};

struct CellResult {
    int d = 0;
    int q = 0;
    long n = 0;
    int reps = 0;
    int successes = 0;
    int errors = 0;             // replicates that threw; counted as non-recovery
    double recovery_rate = 0.0;
    double mean_ms = 0.0;       // wall time per replicate (the one nondeterministic column)
    std::uint64_t seed = 0;     // derived stream key of the cell
};

struct ExperimentResult {
    std::vector<CellResult> cells;
    std::vector<std::string> error_notes;  // first failure reason per cell, "" when clean
};

inline constexpr char kResultsCsvHeader[] = "d,q,n,reps,successes,errors,recovery_rate,mean_ms,seed";

/// Sweep the (d, q, n) grid. Replicate r of a cell draws its model and data
/// from streams keyed by (master_seed, d, q, n, r), so every statistical
/// column is reproducible for any worker count; only mean_ms is wall-clock.
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
    spec.validate();

    struct Cell {
        int d, q;
        long n;
    };
    std::vector<Cell> cells;
    for (int d : spec.d_grid) {
        for (int q : spec.q_grid) {
            for (long n : spec.n_grid) cells.push_back({d, q, n});
        }
    }
    struct Task {
        int cell;
        int rep;
    };
    std::vector<Task> tasks;
    tasks.reserve(cells.size() * static_cast<std::size_t>(spec.reps));
    for (int c = 0; c < static_cast<int>(cells.size()); ++c) {
        for (int r = 0; r < spec.reps; ++r) tasks.push_back({c, r});
    }

    struct TaskOut {
        bool success = false;
        bool error = false;
        double ms = 0.0;
        std::string note;
    };
    std::vector<TaskOut> outs(tasks.size());

    auto run_task = [&](const Task& t, TaskOut& out) {
        const Cell& cell = cells[static_cast<std::size_t>(t.cell)];
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const std::uint64_t rep_key =
                derive_key(spec.master_seed, {static_cast<std::uint64_t>(cell.d),
                                              static_cast<std::uint64_t>(cell.q),
                                              static_cast<std::uint64_t>(cell.n),
                                              static_cast<std::uint64_t>(t.rep)});
            const SemModel model = random_model(cell.d, cell.q, derive_key(rep_key, {1}), spec.sigma,
                                                spec.beta_low, spec.beta_high);
            const Eigen::MatrixXd data = sample(model, cell.n, derive_key(rep_key, {2}));
            const CovEstimate cov = sample_cov(data, spec.center);
            LearnerConfig cfg;
            cfg.q = cell.q;
            switch (spec.gamma_mode.kind) {
                case GammaMode::Kind::fixed: cfg.gamma = spec.gamma_mode.value; break;
                case GammaMode::Kind::tuned: cfg.gamma = std::nullopt; break;
                case GammaMode::Kind::population_gap_half:
                    cfg.gamma = model.variance_gap() / 2.0;
                    break;
            }
            const LearnResult res = learn_dag(cov, cfg);
            out.success = (res.dag == model.graph());
        } catch (const std::exception& e) {
            out.error = true;
            out.note = e.what();
        }
        out.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };

    int nthreads = spec.threads > 0 ? spec.threads
                                    : static_cast<int>(std::thread::hardware_concurrency());
    nthreads = std::max(1, std::min<int>(nthreads, static_cast<int>(tasks.size())));
    if (nthreads == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) run_task(tasks[i], outs[i]);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        workers.reserve(static_cast<std::size_t>(nthreads));
        for (int w = 0; w < nthreads; ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
                    run_task(tasks[i], outs[i]);
                }
            });
        }
        for (auto& th : workers) th.join();
    }

    // Aggregate in task order: counts are order-independent anyway.
    ExperimentResult result;
    result.cells.resize(cells.size());
    result.error_notes.assign(cells.size(), "");
    for (std::size_t c = 0; c < cells.size(); ++c) {
        CellResult& cr = result.cells[c];
        cr.d = cells[c].d;
        cr.q = cells[c].q;
        cr.n = cells[c].n;
        cr.reps = spec.reps;
        cr.seed = derive_key(spec.master_seed,
                             {static_cast<std::uint64_t>(cells[c].d), static_cast<std::uint64_t>(cells[c].q),
                              static_cast<std::uint64_t>(cells[c].n)});
    }
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        CellResult& cr = result.cells[static_cast<std::size_t>(tasks[i].cell)];
        cr.successes += outs[i].success ? 1 : 0;
        cr.errors += outs[i].error ? 1 : 0;
        cr.mean_ms += outs[i].ms;
        if (outs[i].error && result.error_notes[static_cast<std::size_t>(tasks[i].cell)].empty()) {
            result.error_notes[static_cast<std::size_t>(tasks[i].cell)] = outs[i].note;
        }
    }
    for (auto& cr : result.cells) {
        cr.recovery_rate = static_cast<double>(cr.successes) / cr.reps;
        cr.mean_ms /= cr.reps;
    }
    return result;
}

inline void write_results_csv(std::ostream& os, const ExperimentResult& result) {
    os << kResultsCsvHeader << '\n';
    char buf[64];
    for (const auto& c : result.cells) {
        std::snprintf(buf, sizeof(buf), "%.6g", c.recovery_rate);
        os << c.d << ',' << c.q << ',' << c.n << ',' << c.reps << ',' << c.successes << ',' << c.errors
           << ',' << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.3f", c.mean_ms);
        os << buf << ',' << c.seed << '\n';
    }
}

/// Data-ingestion front door: read a CSV data matrix, form the sample
/// covariance, and run the learner. The population gamma mode is not
/// available here (there is no generating model to take Delta from).
inline LearnResult fit_from_file(const std::string& data_path, int q, const GammaMode& gamma_mode,
                                 bool center = false) {
    const CsvMatrix csv = read_csv_matrix_file(data_path);
    const long n = csv.data.rows();
    const long d = csv.data.cols();
    if (q < 1) throw std::invalid_argument("fit_from_file: q must be >= 1");
    if (q >= d) {
        throw std::invalid_argument("fit_from_file: in-degree cap q=" + std::to_string(q) +
                                    " must be smaller than the number of columns " + std::to_string(d));
    }
    if (n < 2) std::cerr << "warning: only " << n << " observation(s); estimates will be degenerate\n";
    LearnerConfig cfg;
    cfg.q = q;
    switch (gamma_mode.kind) {
        case GammaMode::Kind::fixed: cfg.gamma = gamma_mode.value; break;
        case GammaMode::Kind::tuned: cfg.gamma = std::nullopt; break;
        case GammaMode::Kind::population_gap_half:
            throw std::invalid_argument("fit_from_file: the population gamma mode needs a generating model");
    }
    return learn_dag(sample_cov(csv.data, center), cfg);
}

namespace detail {

inline std::string series_color(int q_rank, int n_q, int d_rank, int n_d) {
    static constexpr int hues[] = {211, 27, 135, 275, 45, 0};
    const int hue = hues[q_rank % 6];
    // darker shade for larger d
    const double t = n_d > 1 ? static_cast<double>(d_rank) / (n_d - 1) : 1.0;
    const int light = static_cast<int>(75 - 45 * t);
    (void)n_q;
    char buf[48];
    std::snprintf(buf, sizeof(buf), "hsl(%d,70%%,%d%%)", hue, light);
    return buf;
}

}  // namespace detail

/// Standalone SVG of recovery rate vs sample size, one curve per (d, q):
/// color encodes q, shade encodes d. The raw results CSV is written next to
/// the SVG with the extension swapped to .csv.
inline void emit_plot(const ExperimentResult& result, const std::string& svg_path) {
    if (result.cells.empty()) throw std::invalid_argument("emit_plot: empty result");

    std::map<std::pair<int, int>, std::vector<const CellResult*>> series;  // (q, d) -> cells
    std::vector<long> ns;
    std::vector<int> qs, ds;
    for (const auto& c : result.cells) {
        series[{c.q, c.d}].push_back(&c);
        ns.push_back(c.n);
        qs.push_back(c.q);
        ds.push_back(c.d);
    }
    auto uniq = [](auto& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    uniq(ns);
    uniq(qs);
    uniq(ds);
    for (auto& [key, cells] : series) {
        std::sort(cells.begin(), cells.end(),
                  [](const CellResult* a, const CellResult* b) { return a->n < b->n; });
    }

    const double width = 820, height = 520;
    const double ml = 70, mr = 190, mt = 40, mb = 60;
    const double pw = width - ml - mr, ph = height - mt - mb;
    const double n_lo = static_cast<double>(ns.front());
    const double n_hi = static_cast<double>(ns.back());
    const double span = std::max(1.0, n_hi - n_lo);
    auto xpos = [&](double n) { return ml + (n - n_lo) / span * pw; };
    auto ypos = [&](double rate) { return mt + (1.0 - rate) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << ml + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
           "font-family=\"sans-serif\">Exact recovery rate vs sample size</text>\n";

    for (int i = 0; i <= 5; ++i) {
        const double rate = i / 5.0;
        const double y = ypos(rate);
        svg << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << ml + pw << "\" y2=\"" << y
            << "\" stroke=\"#dddddd\"/>\n"
            << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
            << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << rate
            << "</text>\n";
    }
    for (long n : ns) {
        const double x = xpos(static_cast<double>(n));
        svg << "<line x1=\"" << x << "\" y1=\"" << mt + ph << "\" x2=\"" << x << "\" y2=\""
            << mt + ph + 5 << "\" stroke=\"black\"/>\n"
            << "<text x=\"" << x << "\" y=\"" << mt + ph + 20
            << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << n
            << "</text>\n";
    }
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
        << mt + ph << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 18
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">sample size n</text>\n"
        << "<text x=\"20\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" transform=\"rotate(-90 20 "
        << mt + ph / 2 << ")\">P(recovered graph = truth)</text>\n";

    int legend_row = 0;
    for (const auto& [key, cells] : series) {
        const auto [q, d] = key;
        const int q_rank = static_cast<int>(std::lower_bound(qs.begin(), qs.end(), q) - qs.begin());
        const int d_rank = static_cast<int>(std::lower_bound(ds.begin(), ds.end(), d) - ds.begin());
        const std::string color = detail::series_color(q_rank, static_cast<int>(qs.size()), d_rank,
                                                       static_cast<int>(ds.size()));
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const CellResult* c : cells) {
            svg << xpos(static_cast<double>(c->n)) << ',' << ypos(c->recovery_rate) << ' ';
        }
        svg << "\"/>\n";
        for (const CellResult* c : cells) {
            svg << "<circle cx=\"" << xpos(static_cast<double>(c->n)) << "\" cy=\""
                << ypos(c->recovery_rate) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        const double ly = mt + 14 + 18 * legend_row++;
        svg << "<line x1=\"" << ml + pw + 14 << "\" y1=\"" << ly - 4 << "\" x2=\"" << ml + pw + 38
            << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"3\"/>\n"
            << "<text x=\"" << ml + pw + 44 << "\" y=\"" << ly
            << "\" font-size=\"12\" font-family=\"sans-serif\">d=" << d << ", q=" << q << "</text>\n";
    }
    svg << "</svg>\n";

    std::ofstream os(svg_path);
    if (!os) throw std::runtime_error("emit_plot: cannot open '" + svg_path + "' for writing");
    os << svg.str();
    if (!os) throw std::runtime_error("emit_plot: write failed for '" + svg_path + "'");

    std::string csv_path = svg_path;
    const auto dot = csv_path.find_last_of('.');
    const auto slash = csv_path.find_last_of("/\\");
    if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) {
        csv_path.resize(dot);
    }
    csv_path += ".csv";
    std::ofstream cs(csv_path);
    if (!cs) throw std::runtime_error("emit_plot: cannot open '" + csv_path + "' for writing");
    write_results_csv(cs, result);
}

}  // namespace evdag
