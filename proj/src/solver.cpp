#include "lps/solver.hpp"

#include "lps/error.hpp"
#include "lps/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lps {

namespace {

Casorati rank1(const Casorati& X) {
    const SvdFactors f = svd(X);
    if (f.sigma.size() == 0) return Casorati::Zero(X.rows(), X.cols());
    return f.U.col(0) * f.sigma(0) * f.V.col(0).adjoint();
}

void require_finite(const LSState& st) {
    if (!st.L.allFinite() || !st.S.allFinite() || !st.W.allFinite() || !st.N.allFinite())
        throw NumericalError("CPA iterate became non-finite at iteration " + std::to_string(st.iter));
}

} // namespace

ReconProblem::ReconProblem(const KSpaceDataset& data, const CoilSensitivities& sens, const ProblemOptions& opts)
    : A_(sens, data), AhA_(A_), T_(data.nframes()) {
    d_ = Eigen::Map<const Eigen::VectorXcd>(data.samples().data(), static_cast<Eigen::Index>(data.samples().size()));
    Ahd_ = A_.adjoint(d_);
    // A*d carries the ~||A||^2 gain of undensity-compensated radial sampling; rescale the
    // rank-1 start to the least-squares multiple c = Re<A R, d> / ||A R||^2.
    L0_ = rank1(Ahd_);
    const Eigen::VectorXcd AR = A_.forward(L0_);
    if (const double den = AR.squaredNorm(); den > 0) L0_ *= AR.dot(d_).real() / den;
    if (opts.steps) {
        steps_ = *opts.steps;
    } else {
        norm_A_ = op_norm(AhA_, opts.power_iterations, opts.power_seed);
        norm_T_ = op_norm(T_, static_cast<Eigen::Index>(A_.nx() * A_.ny()), opts.power_iterations, opts.power_seed);
        const double step = opts.step_fraction / std::sqrt(4 * norm_A_ * norm_A_ + norm_T_ * norm_T_);
        steps_ = {step, step};
    }
    if (!(steps_.rho > 0) || !(steps_.tau > 0)) throw UsageError("step sizes must be positive");
    if (norm_A_ > 0 && !(steps_.rho * steps_.tau < 1.0 / (4 * norm_A_ * norm_A_ + norm_T_ * norm_T_)))
        throw UsageError("step sizes violate rho*tau < 1/(4||A||^2 + ||T||^2)");
}

LSState initial_state(const ReconProblem& P) {
    const auto npix = static_cast<Eigen::Index>(P.nx() * P.ny());
    const auto nt = static_cast<Eigen::Index>(P.nt());
    LSState st;
    st.L = P.initial_L();
    st.Lbar = st.L;
    st.S = Casorati::Zero(npix, nt);
    st.Sbar = st.S;
    st.W = Casorati::Zero(npix, nt);
    st.N = Casorati::Zero(npix, nt - 1);
    st.steps = P.steps();
    return st;
}

void cpa_step(const ReconProblem& P, LSState& st, const ActivationParams& act, StepTrace* trace) {
    const double rho = st.steps.rho, tau = st.steps.tau;

    Casorati G;
    P.AhA().apply(st.Lbar + st.Sbar, G);
    st.W = (st.W + rho * G - rho * P.Ahd()) / (1.0 + rho);

    Casorati Z = st.N + rho * P.T().forward(st.Sbar);
    st.N = Z - activate_elementwise(act.mode, Z, act.threshold_S, act.slope(Branch::S));

    const Casorati Y = st.L - tau * st.W;
    SvdFactors factors;
    Casorati L_new = activate_spectral(act.mode, Y, tau * act.threshold_L, act.slope(Branch::L), &factors);
    Casorati S_new = st.S - tau * st.W - tau * P.T().adjoint(st.N);

    st.Lbar = 2.0 * L_new - st.L;
    st.Sbar = 2.0 * S_new - st.S;
    st.L = std::move(L_new);
    st.S = std::move(S_new);
    ++st.iter;
    require_finite(st);
    if (trace) {
        trace->Z = std::move(Z);
        trace->factors = std::move(factors);
    }
}

Reconstruction cpa_solve(const ReconProblem& P, const SolveConfig& cfg) {
    if (!(cfg.lambda_L >= 0) || !(cfg.lambda_S >= 0)) throw UsageError("lambdas must be >= 0");
    const ActivationParams act{ActivationMode::Simple, cfg.lambda_L, cfg.lambda_S};
    LSState st = initial_state(P);
    Casorati prev = st.L + st.S;
    for (std::size_t k = 0; k < cfg.max_iter; ++k) {
        cpa_step(P, st, act);
        if (cfg.stop_tol) {
            Casorati x = st.L + st.S;
            const double base = prev.norm();
            const double change = (x - prev).norm();
            prev = std::move(x);
            if (base > 0 && change / base < *cfg.stop_tol) break;
        }
    }
    return {std::move(st.L), std::move(st.S), st.iter};
}

Reconstruction solve_reference(const ReconProblem& P, const SolveConfig& cfg) {
    const double rho = P.steps().rho, tau = P.steps().tau;
    const auto& A = P.A();
    const auto& T = P.T();
    LSState st = initial_state(P);
    Eigen::VectorXcd M = Eigen::VectorXcd::Zero(P.data().size());
    for (std::size_t k = 0; k < cfg.max_iter; ++k) {
        M = (M + rho * A.forward(Casorati(st.Lbar + st.Sbar)) - rho * P.data()) / (1.0 + rho);
        const Casorati Z = st.N + rho * T.forward(st.Sbar);
        const Casorati N_new = Z - activate_elementwise(ActivationMode::Simple, Z, cfg.lambda_S, 1.0);
        const Casorati AhM = A.adjoint(M);
        Casorati L_new = svt(st.L - tau * AhM, tau * cfg.lambda_L);
        Casorati S_new = st.S - tau * AhM - tau * T.adjoint(N_new);
        st.Lbar = 2.0 * L_new - st.L;
        st.Sbar = 2.0 * S_new - st.S;
        st.L = std::move(L_new);
        st.S = std::move(S_new);
        st.N = N_new;
        ++st.iter;
    }
    return {std::move(st.L), std::move(st.S), st.iter};
}

double objective(const Casorati& L, const Casorati& S, const ReconProblem& P, double lambda_L, double lambda_S) {
    const Eigen::VectorXcd r = P.A().forward(Casorati(L + S)) - P.data();
    const double nuclear = svd(L).sigma.sum();
    const double l1 = P.T().forward(S).cwiseAbs().sum();
    return 0.5 * r.squaredNorm() + lambda_L * nuclear + lambda_S * l1;
}

GridSearchResult grid_search(const std::vector<Example>& train, const std::vector<double>& lambda_L_grid,
                             const std::vector<double>& lambda_S_grid, const SolveConfig& cfg) {
    if (train.empty()) throw UsageError("grid_search: empty training set");
    if (lambda_L_grid.empty() || lambda_S_grid.empty()) throw UsageError("grid_search: empty grid");
    const std::size_t nL = lambda_L_grid.size(), nS = lambda_S_grid.size();
    GridSearchResult res;
    res.mae.assign(nL, std::vector<double>(nS, 0.0));

#pragma omp parallel for schedule(dynamic) collapse(2)
    for (std::size_t i = 0; i < nL; ++i)
        for (std::size_t j = 0; j < nS; ++j) {
            SolveConfig c = cfg;
            c.lambda_L = lambda_L_grid[i];
            c.lambda_S = lambda_S_grid[j];
            double sum = 0;
            for (const auto& ex : train) sum += mean_abs_error(cpa_solve(*ex.problem, c).sum(), ex.truth);
            res.mae[i][j] = sum / static_cast<double>(train.size());
        }

    std::vector<std::pair<std::size_t, std::size_t>> order;
    for (std::size_t i = 0; i < nL; ++i)
        for (std::size_t j = 0; j < nS; ++j) order.emplace_back(i, j);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) {
        if (lambda_L_grid[a.first] != lambda_L_grid[b.first]) return lambda_L_grid[a.first] < lambda_L_grid[b.first];
        return lambda_S_grid[a.second] < lambda_S_grid[b.second];
    });
    bool first = true;
    for (auto [i, j] : order) {
        if (first || res.mae[i][j] < res.best_mae) {
            res.best_mae = res.mae[i][j];
            res.lambda_L = lambda_L_grid[i];
            res.lambda_S = lambda_S_grid[j];
            first = false;
        }
    }
    return res;
}

} // namespace lps
