#include "fixtures.hpp"
#include "lps/metrics.hpp"
#include "lps/solver.hpp"

#include <doctest.h>

using namespace lps;
using namespace lps::test;

TEST_CASE("step sizes satisfy the convergence condition") {
    const auto P = structured_problem(8, 6, 3, 1);
    const StepSizes s = P->steps();
    const double L2 = 4 * P->norm_A() * P->norm_A() + P->norm_T() * P->norm_T();
    CHECK(s.rho == s.tau);
    CHECK(s.rho * s.tau * L2 < 1.0);
    CHECK(s.tau == doctest::Approx(0.99 / std::sqrt(L2)));
}

TEST_CASE("image-space iteration equals the literal k-space iteration") {
    const auto P = structured_problem(8, 6, 3, 2);
    const SolveConfig cfg{0.05, 0.02, 40, std::nullopt};
    const Reconstruction a = cpa_solve(*P, cfg), b = solve_reference(*P, cfg);
    CHECK(rel_err(a.L, b.L) <= 1e-9);
    CHECK(rel_err(a.S, b.S) <= 1e-9);
}

TEST_CASE("objective approaches its long-run value") {
    const PhantomSpec spec = PhantomSpec::desk(8, 8, 12, 0.96, 3);
    AcquisitionConfig acq;
    acq.seed = 3;
    acq.truth_iterations = 1;
    const Simulation sim = simulate_dataset(spec, acq);
    const ReconProblem P(sim.data, sim.sens);
    SolveConfig cfg{0.0234, 1.6e-5, 3000, std::nullopt};
    const Reconstruction ref = cpa_solve(P, cfg);
    const double f_ref = objective(ref.L, ref.S, P, cfg.lambda_L, cfg.lambda_S);
    cfg.max_iter = 300;
    const Reconstruction r = cpa_solve(P, cfg);
    const double f = objective(r.L, r.S, P, cfg.lambda_L, cfg.lambda_S);
    CHECK(f >= f_ref * (1 - 1e-6));
    CHECK(f <= f_ref * 1.005);
}

TEST_CASE("zero data is a fixed point") {
    const KSpaceDataset geo = random_dataset(6, 4, 3, 2, 8);
    const ReconProblem P(geo.with_samples(std::vector<Complex>(geo.samples().size())), synth_sensitivities(2, 6, 6));
    const Reconstruction r = cpa_solve(P, {0.1, 0.1, 25, std::nullopt});
    CHECK(r.L.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.S.cwiseAbs().maxCoeff() == 0.0);
    CHECK(objective(r.L, r.S, P, 0.1, 0.1) == 0.0);
}

TEST_CASE("zero thresholds fit the data") {
    const auto P = structured_problem(6, 4, 12, 4, 0.0);
    const Reconstruction r = cpa_solve(*P, {0.0, 0.0, 2000, std::nullopt});
    const Eigen::VectorXcd res = P->A().forward(r.sum()) - P->data();
    CHECK(res.norm() <= 1e-3 * P->data().norm());
}

TEST_CASE("relative-change stop ends early") {
    const auto P = structured_problem(8, 6, 3, 5);
    const Reconstruction r = cpa_solve(*P, {0.05, 0.02, 5000, 1e-4});
    CHECK(r.iterations < 5000);
    CHECK(r.iterations > 1);
}

TEST_CASE("negative weights are rejected") {
    const auto P = structured_problem(6, 4, 3, 6);
    CHECK_THROWS_AS(cpa_solve(*P, {-1.0, 0.0, 1, std::nullopt}), UsageError);
}

TEST_CASE("grid search picks the minimum and breaks ties low") {
    std::vector<Example> train;
    for (std::uint64_t s = 0; s < 2; ++s) {
        const auto P = structured_problem(6, 6, 4, 10 + s);
        const Casorati truth = cpa_solve(*P, {0.02, 0.01, 50, std::nullopt}).sum();
        train.push_back({P, truth});
    }
    const std::vector<double> gl{0.02, 0.5}, gs{0.01, 0.3};
    const GridSearchResult g = grid_search(train, gl, gs, {0, 0, 50, std::nullopt});
    CHECK(g.lambda_L == 0.02);
    CHECK(g.lambda_S == 0.01);
    CHECK(g.best_mae == doctest::Approx(0.0).epsilon(1e-12));
    REQUIRE(g.mae.size() == 2);
    REQUIRE(g.mae[1].size() == 2);
    // Huge S weights leave the sparse part frozen at zero: identical MAE, lower lambda_S wins.
    const GridSearchResult tie = grid_search(train, {0.02}, {1e6, 1e7}, {0, 0, 50, std::nullopt});
    CHECK(tie.mae[0][0] == tie.mae[0][1]);
    CHECK(tie.lambda_S == 1e6);
}

TEST_CASE("loss frame count") {
    CHECK(loss_frames(0.15, 64) == 10);
    CHECK(loss_frames(0.15, 32) == 5);
    CHECK(loss_frames(0.01, 8) == 1);
    CHECK_THROWS_AS(loss_frames(0.0, 8), UsageError);
    CHECK(loss_frames(1.0, 8) == 8);
}
