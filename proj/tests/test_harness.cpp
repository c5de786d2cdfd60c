#include "evdag/harness.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "evdag/io.hpp"
#include "evdag/sem.hpp"

using namespace evdag;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("evdag_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
};

ExperimentSpec small_spec() {
    ExperimentSpec spec;
    spec.d_grid = {5};
    spec.q_grid = {2};
    spec.n_grid = {2000};
    spec.reps = 10;
    spec.gamma_mode = GammaMode::population_gap_half();
    spec.master_seed = 42;
    spec.threads = 1;
    return spec;
}

std::string csv_without_mean_ms(const ExperimentResult& r) {
    std::ostringstream os;
    write_results_csv(os, r);
    std::istringstream is(os.str());
    std::ostringstream out;
    std::string line;
    while (std::getline(is, line)) {
        // drop column 8 (mean_ms), the only wall-clock field
        std::vector<std::string> f;
        std::string cur;
        std::istringstream ls(line);
        while (std::getline(ls, cur, ',')) f.push_back(cur);
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (i == 7) continue;
            out << f[i] << ',';
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace

TEST(GammaMode, ParseAcceptsTheThreeForms) {
    EXPECT_EQ(GammaMode::parse("auto").kind, GammaMode::Kind::tuned);
    EXPECT_EQ(GammaMode::parse("pop").kind, GammaMode::Kind::population_gap_half);
    const GammaMode g = GammaMode::parse("0.125");
    EXPECT_EQ(g.kind, GammaMode::Kind::fixed);
    EXPECT_DOUBLE_EQ(g.value, 0.125);
    EXPECT_THROW(GammaMode::parse("half"), std::invalid_argument);
    EXPECT_THROW(GammaMode::parse("-1"), std::invalid_argument);
}

TEST(RunExperiment, LargeSampleRecoversEverything) {
    ExperimentSpec spec = small_spec();
    spec.n_grid = {100000};
    spec.reps = 20;
    const ExperimentResult r = run_experiment(spec);
    ASSERT_EQ(r.cells.size(), 1u);
    EXPECT_EQ(r.cells[0].successes, 20);
    EXPECT_DOUBLE_EQ(r.cells[0].recovery_rate, 1.0);
    EXPECT_EQ(r.cells[0].errors, 0);
}

TEST(RunExperiment, OneSampleRecoversNothing) {
    ExperimentSpec spec;
    spec.d_grid = {20};
    spec.q_grid = {2};
    spec.n_grid = {1};
    spec.reps = 20;
    spec.gamma_mode = GammaMode::population_gap_half();
    spec.master_seed = 7;
    spec.threads = 1;
    const ExperimentResult r = run_experiment(spec);
    EXPECT_LE(r.cells[0].recovery_rate, 0.05);
}

TEST(RunExperiment, InvalidCellsCountAsErrorsWithoutAborting) {
    ExperimentSpec spec = small_spec();
    spec.d_grid = {4};
    spec.q_grid = {4};  // random_model rejects 2q > d in every replicate
    const ExperimentResult r = run_experiment(spec);
    ASSERT_EQ(r.cells.size(), 1u);
    EXPECT_EQ(r.cells[0].errors, spec.reps);
    EXPECT_EQ(r.cells[0].successes, 0);
    EXPECT_FALSE(r.error_notes[0].empty());
}

TEST(RunExperiment, DeterministicAcrossWorkerCounts) {
    ExperimentSpec spec;
    spec.d_grid = {6, 8};
    spec.q_grid = {2};
    spec.n_grid = {100, 400};
    spec.reps = 8;
    spec.gamma_mode = GammaMode::population_gap_half();
    spec.master_seed = 11;
    spec.threads = 1;
    const ExperimentResult serial = run_experiment(spec);
    spec.threads = 4;
    const ExperimentResult parallel = run_experiment(spec);
    EXPECT_EQ(csv_without_mean_ms(serial), csv_without_mean_ms(parallel));
}

TEST(RunExperiment, SeedChangesResults) {
    ExperimentSpec spec = small_spec();
    spec.n_grid = {60};
    spec.reps = 30;
    const ExperimentResult a = run_experiment(spec);
    spec.master_seed = 43;
    const ExperimentResult b = run_experiment(spec);
    EXPECT_NE(a.cells[0].seed, b.cells[0].seed);
}

TEST(RunExperiment, RecoveryNonincreasingInQ) {
    ExperimentSpec spec;
    spec.d_grid = {16};
    spec.q_grid = {2, 3};
    spec.n_grid = {160};
    spec.reps = 200;
    spec.gamma_mode = GammaMode::population_gap_half();
    spec.master_seed = 99;
    const ExperimentResult r = run_experiment(spec);
    ASSERT_EQ(r.cells.size(), 2u);
    const double p2 = r.cells[0].recovery_rate, p3 = r.cells[1].recovery_rate;
    const double se = std::sqrt(p2 * (1 - p2) / spec.reps + p3 * (1 - p3) / spec.reps);
    EXPECT_GE(p2, p3 - 2.0 * se);
}

TEST(ResultsCsv, HeaderAndShape) {
    const ExperimentResult r = run_experiment(small_spec());
    std::ostringstream os;
    write_results_csv(os, r);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    EXPECT_EQ(header, "d,q,n,reps,successes,errors,recovery_rate,mean_ms,seed");
    std::string row;
    std::getline(is, row);
    EXPECT_EQ(std::count(row.begin(), row.end(), ','), 8);
}

TEST(FitFromFile, EndToEndSingleEdge) {
    TempDir tmp;
    const SemModel m(WeightedDag(2, {{0, 1, 1.0}}), 1.0);
    const auto data = sample(m, 100000, 5);
    const auto path = tmp.path / "edge.csv";
    {
        std::ofstream os(path);
        write_csv_matrix(os, data, true);
    }
    const LearnResult res = fit_from_file(path.string(), 1, GammaMode::tuned());
    EXPECT_EQ(res.dag.edges(), (EdgeList{{0, 1}}));
    EXPECT_GT(res.gamma, 0.0);
}

TEST(FitFromFile, ParseErrorNamesRowAndColumn) {
    TempDir tmp;
    const auto path = tmp.path / "bad.csv";
    {
        std::ofstream os(path);
        os << "x0,x1\n1.0,2.0\n3.0,oops\n";
    }
    try {
        fit_from_file(path.string(), 1, GammaMode::tuned());
        FAIL() << "expected parse error";
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("column 2"), std::string::npos) << msg;
    }
}

TEST(FitFromFile, RejectsCapAtLeastColumnCount) {
    TempDir tmp;
    const auto path = tmp.path / "narrow.csv";
    {
        std::ofstream os(path);
        os << "1.0,2.0\n2.0,1.0\n";
    }
    EXPECT_THROW(fit_from_file(path.string(), 2, GammaMode::tuned()), std::invalid_argument);
    EXPECT_THROW(fit_from_file(path.string(), 1, GammaMode::population_gap_half()),
                 std::invalid_argument);
}

TEST(CsvMatrix, RoundTripAndHeaderDetection) {
    const SemModel m = random_model(4, 2, 61, 0.3, 0.5, 1.0);
    const auto data = sample(m, 25, 62);
    std::ostringstream os;
    write_csv_matrix(os, data, true);
    std::istringstream is(os.str());
    const CsvMatrix back = read_csv_matrix(is);
    EXPECT_TRUE(back.had_header);
    ASSERT_EQ(back.header.size(), 4u);
    EXPECT_EQ(back.header[0], "x0");
    EXPECT_EQ((back.data - data).cwiseAbs().maxCoeff(), 0.0);

    std::istringstream headerless("1,2\n3,4\n");
    const CsvMatrix hl = read_csv_matrix(headerless);
    EXPECT_FALSE(hl.had_header);
    EXPECT_EQ(hl.data.rows(), 2);

    std::istringstream ragged("1,2\n3\n");
    EXPECT_THROW(read_csv_matrix(ragged), std::runtime_error);
    std::istringstream empty("");
    EXPECT_THROW(read_csv_matrix(empty), std::runtime_error);
}

TEST(EmitPlot, WritesSvgAndCsvAlongside) {
    TempDir tmp;
    ExperimentSpec spec = small_spec();
    spec.n_grid = {50, 100};
    const ExperimentResult r = run_experiment(spec);
    const auto svg_path = tmp.path / "curve.svg";
    emit_plot(r, svg_path.string());

    std::ifstream svg(svg_path);
    ASSERT_TRUE(svg.good());
    std::stringstream buf;
    buf << svg.rdbuf();
    EXPECT_NE(buf.str().find("<svg"), std::string::npos);
    EXPECT_NE(buf.str().find("d=5, q=2"), std::string::npos);  // legend entry
    EXPECT_NE(buf.str().find("polyline"), std::string::npos);

    std::ifstream csv(tmp.path / "curve.csv");
    ASSERT_TRUE(csv.good());
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, kResultsCsvHeader);
}

TEST(EmitPlot, EmptyResultRejected) {
    EXPECT_THROW(emit_plot(ExperimentResult{}, "/tmp/should_not_exist.svg"), std::invalid_argument);
}
