#include "lps/kinetics.hpp"

#include "lps/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lps {

bool Perfusion::valid() const {
    return std::isfinite(Fp) && std::isfinite(E) && std::isfinite(Tc) && std::isfinite(ve) && Fp > 0 && E >= 0 &&
           E < 1 && Tc > 0 && ve > 0 && ve <= 1;
}

DerivedParams derive_params(const Perfusion& p) {
    return {p.E * p.Fp, -p.Fp * std::log1p(-p.E)};
}

namespace {

double washout_rate(const Perfusion& p) { return p.E * (p.Fp / 60.0) / p.ve; }

// int_0^h exp(-k v) dv
double int0(double k, double h) {
    const double x = k * h;
    if (std::abs(x) < 1e-8) return h * (1.0 - 0.5 * x);
    return -std::expm1(-x) / k;
}

// int_0^h v exp(-k v) dv
double int1(double k, double h) {
    const double x = k * h;
    if (std::abs(x) < 1e-3) return h * h * (0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0);
    return (1.0 - std::exp(-x) * (1.0 + x)) / (k * k);
}

} // namespace

double ath_residue(double t, const Perfusion& p) {
    if (t < 0) return 0.0;
    if (t < p.Tc) return 1.0;
    return p.E * std::exp(-washout_rate(p) * (t - p.Tc));
}

double GammaVariate::operator()(double t) const {
    if (t <= t0) return 0.0;
    const double s = t - t0;
    const double peak = a * b;
    return std::exp(a * std::log(s / peak) - (s - peak) / b);
}

std::vector<double> GammaVariate::sample(std::span<const double> times) const {
    std::vector<double> v(times.size());
    std::transform(times.begin(), times.end(), v.begin(), [&](double t) { return (*this)(t); });
    return v;
}

std::vector<double> tissue_curve(const Perfusion& p, std::span<const double> aif, double dt) {
    if (!(dt > 0)) throw UsageError("tissue_curve: dt must be positive");
    const std::size_t n = aif.size();
    const double k = washout_rate(p);
    const double Fp = p.Fp / 60.0;
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        double acc = 0;
        // Segment [t_j, t_j+1] maps to lag u in [t - t_j+1, t - t_j]; the AIF there is
        // a0 + m (u - u0) with a0 = aif[j+1].
        for (std::size_t j = 0; j < i; ++j) {
            const double u0 = t - static_cast<double>(j + 1) * dt;
            const double u1 = t - static_cast<double>(j) * dt;
            const double a0 = aif[j + 1];
            const double m = (aif[j] - aif[j + 1]) / dt;
            if (a0 == 0.0 && m == 0.0) continue;
            if (u0 < p.Tc) {
                const double p1 = std::min(u1, p.Tc) - u0;
                acc += a0 * p1 + 0.5 * m * p1 * p1;
            }
            if (u1 > p.Tc && p.E > 0) {
                const double q0 = std::max(u0, p.Tc);
                const double h = u1 - q0;
                const double aq = a0 + m * (q0 - u0);
                acc += p.E * std::exp(-k * (q0 - p.Tc)) * (aq * int0(k, h) + m * int1(k, h));
            }
        }
        out[i] = Fp * acc;
    }
    return out;
}

std::string_view to_string(SignalMode m) { return m == SignalMode::Linear ? "linear" : "spgr"; }

SignalMode parse_signal_mode(std::string_view s) {
    if (s == "linear") return SignalMode::Linear;
    if (s == "spgr") return SignalMode::Spgr;
    throw UsageError("unknown signal mode: " + std::string(s));
}

namespace {

double spgr_unit(double C, const SignalParams& sp) {
    const double fa = sp.flip_deg * std::numbers::pi / 180.0;
    const double e1 = std::exp(-sp.TR * (sp.R10 + sp.r1 * C));
    return std::sin(fa) * (1.0 - e1) / (1.0 - std::cos(fa) * e1);
}

} // namespace

double signal_model(double C, double baseline, const SignalParams& sp) {
    if (sp.mode == SignalMode::Linear) return baseline + sp.gain * C;
    return baseline * spgr_unit(C, sp) / spgr_unit(0.0, sp);
}

ConcentrationSample to_concentration(double S, double baseline, const SignalParams& sp) {
    if (sp.mode == SignalMode::Linear) {
        if (sp.gain == 0) throw UsageError("to_concentration: zero gain");
        return {(S - baseline) / sp.gain, false};
    }
    if (!(baseline > 0)) return {0.0, true};
    if (S <= baseline) return {0.0, S < baseline};
    const double y = S / baseline * spgr_unit(0.0, sp);
    double lo = 0, hi = 1;
    while (spgr_unit(hi, sp) < y) {
        hi *= 2;
        if (hi > 1e12) return {hi, true};
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (spgr_unit(mid, sp) < y ? lo : hi) = mid;
    }
    return {0.5 * (lo + hi), false};
}

PerfusionMaps::PerfusionMaps(std::size_t nx_, std::size_t ny_) : nx(nx_), ny(ny_) {
    const std::size_t n = nx * ny;
    for (auto* v : {&Fp, &E, &Tc, &ve, &Ktrans, &PS, &residual}) v->assign(n, 0.0);
    converged.assign(n, 0);
    fitted.assign(n, 0);
}

void PerfusionMaps::set(std::size_t i, const Perfusion& p, double res, bool conv) {
    const DerivedParams d = derive_params(p);
    Fp[i] = p.Fp;
    E[i] = p.E;
    Tc[i] = p.Tc;
    ve[i] = p.ve;
    Ktrans[i] = d.Ktrans;
    PS[i] = d.PS;
    residual[i] = res;
    converged[i] = conv ? 1 : 0;
    fitted[i] = 1;
}

Perfusion PerfusionMaps::at(std::size_t i) const { return {Fp[i], E[i], Tc[i], ve[i]}; }

std::string_view to_string(MapParam p) {
    switch (p) {
    case MapParam::Fp: return "Fp";
    case MapParam::E: return "E";
    case MapParam::Tc: return "Tc";
    case MapParam::ve: return "ve";
    case MapParam::Ktrans: return "Ktrans";
    case MapParam::PS: return "PS";
    }
    return "?";
}

const std::vector<double>& field(const PerfusionMaps& m, MapParam p) {
    switch (p) {
    case MapParam::Fp: return m.Fp;
    case MapParam::E: return m.E;
    case MapParam::Tc: return m.Tc;
    case MapParam::ve: return m.ve;
    case MapParam::Ktrans: return m.Ktrans;
    case MapParam::PS: return m.PS;
    }
    return m.Fp;
}

} // namespace lps
