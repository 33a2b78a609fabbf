#include "lps/unfolded.hpp"

#include "lps/error.hpp"
#include "lps/io.hpp"
#include "lps/metrics.hpp"
#include "lps/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

namespace lps {

// --- model ------------------------------------------------------------------------------------

UnfoldedModel UnfoldedModel::make(ActivationMode mode, bool tied, std::size_t layers, double lambda_L,
                                  double lambda_S) {
    if (layers == 0) throw UsageError("unfolded model needs at least one layer");
    UnfoldedModel m;
    m.mode = mode;
    m.tied = tied;
    m.layers = layers;
    m.params.assign(tied ? 1 : layers, ActivationParams{mode, lambda_L, lambda_S, 1.0, 1.0});
    m.validate();
    return m;
}

std::size_t UnfoldedModel::parameter_count() const {
    const std::size_t per = mode == ActivationMode::Soft ? 4 : 2;
    return per * (tied ? 1 : layers);
}

std::vector<double> UnfoldedModel::flatten() const {
    std::vector<double> v;
    v.reserve(parameter_count());
    for (const auto& p : params) {
        v.push_back(p.threshold_L);
        v.push_back(p.threshold_S);
        if (mode == ActivationMode::Soft) {
            v.push_back(p.slope_L);
            v.push_back(p.slope_S);
        }
    }
    return v;
}

void UnfoldedModel::unflatten(std::span<const double> values) {
    if (values.size() != parameter_count()) throw UsageError("unflatten: wrong parameter count");
    std::size_t i = 0;
    for (auto& p : params) {
        p.threshold_L = values[i++];
        p.threshold_S = values[i++];
        if (mode == ActivationMode::Soft) {
            p.slope_L = values[i++];
            p.slope_S = values[i++];
        }
    }
}

void UnfoldedModel::project() {
    for (auto& p : params) {
        p.threshold_L = std::max(p.threshold_L, 0.0);
        p.threshold_S = std::max(p.threshold_S, 0.0);
    }
}

void UnfoldedModel::validate() const {
    if (layers == 0) throw UsageError("unfolded model needs at least one layer");
    if (params.size() != (tied ? 1 : layers)) throw UsageError("unfolded model: parameter record count mismatch");
    for (const auto& p : params) {
        if (p.mode != mode) throw UsageError("unfolded model: mixed activation modes");
        p.validate();
    }
}

// --- forward -------------------------------------------------------------------------------------

ForwardResult forward(const UnfoldedModel& model, const ReconProblem& P, bool record_states) {
    model.validate();
    ForwardResult out;
    LSState st = initial_state(P);
    out.tape.steps.resize(model.layers);
    if (record_states) out.tape.states.reserve(model.layers + 1);
    for (std::size_t k = 0; k < model.layers; ++k) {
        if (record_states) out.tape.states.push_back(st);
        try {
            cpa_step(P, st, model.layer(k), &out.tape.steps[k]);
        } catch (const NumericalError& e) {
            throw NumericalError("unfolded forward failed in layer " + std::to_string(k) + ": " + e.what());
        }
    }
    if (record_states) out.tape.states.push_back(st);
    out.L = std::move(st.L);
    out.S = std::move(st.S);
    return out;
}

// --- loss ----------------------------------------------------------------------------------------

double mae_loss(const Casorati& recon, const Casorati& gt, double fraction) {
    return mean_abs_error(recon, gt, loss_frames(fraction, static_cast<std::size_t>(gt.cols())));
}

double mae_loss(const ImageSequence& recon, const ImageSequence& gt, double fraction) {
    if (!(recon.shape() == gt.shape())) throw UsageError("mae_loss: shape mismatch");
    return mae_loss(Casorati(to_casorati(recon)), Casorati(to_casorati(gt)), fraction);
}

LossValue mae_loss_with_grad(const Casorati& recon, const Casorati& gt, double fraction) {
    if (recon.rows() != gt.rows() || recon.cols() != gt.cols()) throw UsageError("mae_loss: shape mismatch");
    const auto frames = static_cast<Eigen::Index>(loss_frames(fraction, static_cast<std::size_t>(gt.cols())));
    const double count = static_cast<double>(gt.rows() * frames);
    LossValue lv;
    lv.grad = Casorati::Zero(gt.rows(), gt.cols());
    double sum = 0;
    for (Eigen::Index j = 0; j < frames; ++j)
        for (Eigen::Index i = 0; i < gt.rows(); ++i) {
            const Complex r = recon(i, j) - gt(i, j);
            const double a = std::abs(r);
            sum += a;
            if (a > 0) lv.grad(i, j) = r / (a * count);
        }
    lv.value = sum / count;
    return lv;
}

// --- vector-Jacobian products ---------------------------------------------------------------------

void elementwise_vjp(ActivationMode mode, const Casorati& Z, double alpha, double slope, const Casorati& gout,
                     Casorati& gin, double& d_alpha, double& d_slope) {
    gin.resize(Z.rows(), Z.cols());
    double da = 0, ds = 0;
    const Eigen::Index n = Z.size();
    for (Eigen::Index i = 0; i < n; ++i) {
        const Complex z = Z.data()[i];
        const double r = std::abs(z);
        const Shrinkage g = shrink(mode, r, alpha, slope);
        if (g.d_r == 0.0 && g.value == 0.0) {
            gin.data()[i] = 0.0;
            continue;
        }
        const Complex u = z / r;
        const Complex go = gout.data()[i];
        const double radial = (std::conj(u) * go).real();
        gin.data()[i] = (g.value / r) * go + (g.d_r - g.value / r) * radial * u;
        da += g.d_alpha * radial;
        ds += g.d_slope * radial;
    }
    d_alpha += da;
    d_slope += ds;
}

namespace {

// VJP for a tall factorization: U is m x r, V is r x r (square).
bool spectral_vjp_tall(ActivationMode mode, const Eigen::MatrixXcd& U, const Eigen::VectorXd& sigma,
                       const Eigen::MatrixXcd& V, double alpha, double slope, const Casorati& G,
                       SvdBackend backend, Casorati& gin, double& d_alpha, double& d_slope) {
    const Eigen::Index r = sigma.size();
    std::vector<Shrinkage> g(static_cast<std::size_t>(r));
    for (Eigen::Index i = 0; i < r; ++i) g[static_cast<std::size_t>(i)] = shrink(mode, sigma(i), alpha, slope);

    const Eigen::MatrixXcd GV = G * V;
    const Eigen::MatrixXcd P = U.adjoint() * GV;
    for (Eigen::Index i = 0; i < r; ++i) {
        d_alpha += g[static_cast<std::size_t>(i)].d_alpha * P(i, i).real();
        d_slope += g[static_cast<std::size_t>(i)].d_slope * P(i, i).real();
    }

    auto frozen = [&] {
        Eigen::VectorXd diag(r);
        for (Eigen::Index i = 0; i < r; ++i) diag(i) = g[static_cast<std::size_t>(i)].d_r * P(i, i).real();
        gin = U * diag.asDiagonal() * V.adjoint();
    };
    if (backend == SvdBackend::Frozen) {
        frozen();
        return true;
    }

    const double delta = 1e-8 * std::max(r > 0 ? sigma(0) : 0.0, 1e-300);
    Eigen::MatrixXcd Q(r, r);
    Eigen::VectorXd ratio(r); // g(sigma) / sigma
    for (Eigen::Index i = 0; i < r; ++i) {
        const auto& gi = g[static_cast<std::size_t>(i)];
        if (sigma(i) < delta) {
            if (gi.value != 0.0) {
                frozen();
                return false;
            }
            ratio(i) = 0.0;
        } else {
            ratio(i) = gi.value / sigma(i);
        }
        Q(i, i) = Complex(gi.d_r * P(i, i).real(), ratio(i) * P(i, i).imag());
    }
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < r; ++j) {
            if (i == j) continue;
            const double gi = g[static_cast<std::size_t>(i)].value, gj = g[static_cast<std::size_t>(j)].value;
            double a = 0, b = 0;
            const double diff = sigma(i) - sigma(j), sum = sigma(i) + sigma(j);
            if (std::abs(diff) < delta) {
                if (gi != 0.0 || gj != 0.0) {
                    frozen();
                    return false;
                }
            } else {
                a = (gi - gj) / diff;
            }
            if (sum < delta) {
                if (gi + gj != 0.0) {
                    frozen();
                    return false;
                }
            } else {
                b = (gi + gj) / sum;
            }
            const Complex sym = 0.5 * (P(i, j) + std::conj(P(j, i)));
            const Complex skew = 0.5 * (P(i, j) - std::conj(P(j, i)));
            Q(i, j) = a * sym + b * skew;
        }
    gin = U * Q * V.adjoint() + (GV - U * P) * ratio.asDiagonal() * V.adjoint();
    return true;
}

} // namespace

bool spectral_vjp(ActivationMode mode, const SvdFactors& f, double alpha, double slope, const Casorati& gout,
                  SvdBackend backend, Casorati& gin, double& d_alpha, double& d_slope) {
    if (f.U.rows() >= f.V.rows())
        return spectral_vjp_tall(mode, f.U, f.sigma, f.V, alpha, slope, gout, backend, gin, d_alpha, d_slope);
    // Wide input: work on X^H = V diag(sigma) U^H.
    Casorati gin_t;
    const Casorati gout_t = gout.adjoint();
    const bool ok =
        spectral_vjp_tall(mode, f.V, f.sigma, f.U, alpha, slope, gout_t, backend, gin_t, d_alpha, d_slope);
    gin = gin_t.adjoint();
    return ok;
}

// --- backward ------------------------------------------------------------------------------------

BackwardResult backward(const UnfoldedModel& model, const ReconProblem& P, const GradientTape& tape,
                        const Casorati& grad_recon, SvdBackend backend) {
    if (tape.steps.size() != model.layers) throw UsageError("backward: tape does not match the model");
    const double rho = P.steps().rho, tau = P.steps().tau;
    const std::size_t per = model.mode == ActivationMode::Soft ? 4 : 2;
    BackwardResult res;
    res.grad.assign(model.parameter_count(), 0.0);

    const Eigen::Index npix = grad_recon.rows(), nt = grad_recon.cols();
    Casorati gL = grad_recon, gS = grad_recon;
    Casorati gLb = Casorati::Zero(npix, nt), gSb = Casorati::Zero(npix, nt);
    Casorati gW = Casorati::Zero(npix, nt), gN = Casorati::Zero(npix, nt - 1);
    Casorati gY, gphi, xb;

    for (std::size_t k = model.layers; k-- > 0;) {
        const StepTrace& tr = tape.steps[k];
        const ActivationParams& prm = model.layer(k);
        double* gp = &res.grad[(model.tied ? 0 : k) * per];

        // Lbar' = 2 L' - L, Sbar' = 2 S' - S
        Casorati gLn = gL + 2.0 * gLb;
        Casorati gSn = gS + 2.0 * gSb;
        Casorati aL = -gLb;
        Casorati aS = gSn - gSb;

        // S' = S - tau W' - tau T^T N'
        Casorati gWn = gW - tau * gSn;
        Casorati gNn = gN - tau * P.T().forward(gSn);

        // L' = act_L(L - tau W')
        double dA = 0, dSl = 0;
        if (!spectral_vjp(prm.mode, tr.factors, tau * prm.threshold_L, prm.slope(Branch::L), gLn, backend, gY, dA,
                          dSl))
            ++res.fallbacks;
        gp[0] += tau * dA;
        if (per == 4) gp[2] += dSl;
        aL += gY;
        gWn -= tau * gY;

        // N' = Z - act_S(Z), Z = N + rho T Sbar
        double dAs = 0, dSs = 0;
        elementwise_vjp(prm.mode, tr.Z, prm.threshold_S, prm.slope(Branch::S), gNn, gphi, dAs, dSs);
        gp[1] -= dAs;
        if (per == 4) gp[3] -= dSs;
        Casorati gZ = gNn - gphi;

        if (k == 0) break; // the initial state does not depend on the parameters

        Casorati aSb = rho * P.T().adjoint(gZ);
        // W' = (W + rho A*A (Lbar + Sbar) - rho A*d) / (1 + rho)
        P.AhA().apply(gWn, xb);
        xb *= rho / (1.0 + rho);
        gW = gWn / (1.0 + rho);
        gN = std::move(gZ);
        gL = std::move(aL);
        gS = std::move(aS);
        gLb = xb;
        gSb = aSb + xb;
    }
    return res;
}

// --- training ------------------------------------------------------------------------------------

void AdamState::step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
    if (m.empty()) {
        m.assign(params.size(), 0.0);
        v.assign(params.size(), 0.0);
    }
    if (grad.size() != params.size() || m.size() != params.size()) throw UsageError("Adam: size mismatch");
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mh = m[i] / c1, vh = v[i] / c2;
        params[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
}

void TrainConfig::validate() const {
    if (!(loss_fraction > 0 && loss_fraction <= 1)) throw UsageError("loss_fraction must be in (0, 1]");
    if (!(learning_rate >= 0)) throw UsageError("learning_rate must be >= 0");
    if (batch_size == 0) throw UsageError("batch_size must be >= 1");
}

TrainResult train(UnfoldedModel model, const std::vector<Example>& dataset, const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    if (dataset.empty()) throw UsageError("train: empty dataset");

    TrainResult res;
    {
        double sum = 0;
        for (const auto& ex : dataset) sum += mae_loss(forward(model, *ex.problem).sum(), ex.truth, cfg.loss_fraction);
        res.initial_loss = sum / static_cast<double>(dataset.size());
    }

    AdamState adam{cfg.beta1, cfg.beta2, cfg.eps, {}, {}, 0};
    std::vector<double> params = model.flatten();
    std::vector<std::size_t> order(dataset.size());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(substream(cfg.seed, 0x7261696eULL, epoch));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        double epoch_loss = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
            const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
            std::vector<double> grad(params.size(), 0.0);
            for (std::size_t b = b0; b < b1; ++b) {
                const Example& ex = dataset[order[b]];
                ForwardResult fw;
                try {
                    fw = forward(model, *ex.problem);
                } catch (const NumericalError& e) {
                    throw NumericalError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
                }
                const LossValue lv = mae_loss_with_grad(fw.sum(), ex.truth, cfg.loss_fraction);
                if (!std::isfinite(lv.value))
                    throw NumericalError("training loss is not finite in epoch " + std::to_string(epoch));
                const BackwardResult br = backward(model, *ex.problem, fw.tape, lv.grad, cfg.backend);
                res.fallbacks += br.fallbacks;
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += br.grad[i];
                epoch_loss += lv.value;
            }
            const double inv = 1.0 / static_cast<double>(b1 - b0);
            for (auto& g : grad) {
                g *= inv;
                if (!std::isfinite(g))
                    throw NumericalError("gradient is not finite in epoch " + std::to_string(epoch));
            }
            adam.step(params, grad, cfg.learning_rate);
            model.unflatten(params);
            model.project();
            params = model.flatten();
        }
        res.history.push_back(epoch_loss / static_cast<double>(dataset.size()));
    }
    res.model = std::move(model);
    return res;
}

// --- parameter file -----------------------------------------------------------------------------

void write_params(const std::filesystem::path& path, const UnfoldedModel& model) {
    model.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::Io, "cannot open for writing: " + path.string());
    out << "# activation = " << to_string(model.mode) << ", layers = " << model.layers << '\n';
    for (std::size_t k = 0; k < model.params.size(); ++k) {
        const std::string idx = model.tied ? "-1" : std::to_string(k);
        const auto& p = model.params[k];
        out << idx << ",L,threshold," << io::format_double(p.threshold_L) << '\n';
        out << idx << ",S,threshold," << io::format_double(p.threshold_S) << '\n';
        if (model.mode == ActivationMode::Soft) {
            out << idx << ",L,slope," << io::format_double(p.slope_L) << '\n';
            out << idx << ",S,slope," << io::format_double(p.slope_S) << '\n';
        }
    }
}

UnfoldedModel read_params(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(FormatError::Kind::Io, "cannot open: " + path.string());
    std::optional<ActivationMode> mode;
    std::optional<std::size_t> layers;
    struct Entry {
        long layer;
        char branch;
        std::string name;
        double value;
    };
    std::vector<Entry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto a = line.find("activation = ");
            const auto l = line.find("layers = ");
            if (a != std::string::npos) {
                const auto end = line.find(',', a);
                mode = parse_activation(line.substr(a + 13, end == std::string::npos ? std::string::npos : end - a - 13));
            }
            if (l != std::string::npos) layers = std::stoul(line.substr(l + 9));
            continue;
        }
        std::stringstream ss(line);
        std::string f[4];
        for (auto& s : f)
            if (!std::getline(ss, s, ','))
                throw FormatError(FormatError::Kind::Syntax, "bad parameter line: " + line);
        if ((f[1] != "L" && f[1] != "S") || (f[2] != "threshold" && f[2] != "slope"))
            throw FormatError(FormatError::Kind::Syntax, "bad parameter line: " + line);
        try {
            entries.push_back({std::stol(f[0]), f[1][0], f[2], std::stod(f[3])});
        } catch (const std::exception&) {
            throw FormatError(FormatError::Kind::Syntax, "bad number in parameter line: " + line);
        }
    }
    if (entries.empty()) throw FormatError(FormatError::Kind::Syntax, "parameter file is empty");
    const bool tied = entries.front().layer == -1;
    const bool has_slope = std::any_of(entries.begin(), entries.end(), [](const Entry& e) { return e.name == "slope"; });
    UnfoldedModel m;
    m.mode = mode.value_or(has_slope ? ActivationMode::Soft : ActivationMode::Simple);
    m.tied = tied;
    long max_layer = -1;
    for (const auto& e : entries) max_layer = std::max(max_layer, e.layer);
    m.layers = layers.value_or(tied ? 1 : static_cast<std::size_t>(max_layer + 1));
    m.params.assign(tied ? 1 : m.layers, ActivationParams{m.mode, 0, 0, 1, 1});
    for (const auto& e : entries) {
        if ((e.layer == -1) != tied || e.layer >= static_cast<long>(m.params.size()))
            throw FormatError(FormatError::Kind::Syntax, "parameter layer index out of range");
        auto& p = m.params[tied ? 0 : static_cast<std::size_t>(e.layer)];
        double& slot = e.name == "threshold" ? (e.branch == 'L' ? p.threshold_L : p.threshold_S)
                                             : (e.branch == 'L' ? p.slope_L : p.slope_S);
        slot = e.value;
    }
    m.validate();
    return m;
}

} // namespace lps
