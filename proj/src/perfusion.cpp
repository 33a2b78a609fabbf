#include "lps/perfusion.hpp"

#include "lps/error.hpp"
#include "lps/io.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lps {

namespace {

using Vec4 = Eigen::Vector4d;

Vec4 to_theta(const Perfusion& p) {
    const double E = std::clamp(p.E, 1e-9, 1.0 - 1e-9);
    return {std::log(p.Fp), std::log(E / (1.0 - E)), std::log(p.Tc), std::log(p.ve)};
}

// Box in transformed coordinates: F_p in [1e-3, 10] mL/min/mL, E logit in [-15, 15], T_c in
// [0.1, 120] s, v_e in [1e-3, 1]. Without upper bounds a noisy curve lets F_p run off along
// the near-degenerate F_p * T_c = const valley.
const Vec4 kThetaLo{std::log(1e-3), -15.0, std::log(0.1), std::log(1e-3)};
const Vec4 kThetaHi{std::log(10.0), 15.0, std::log(120.0), 0.0};

Vec4 clamp_theta(const Vec4& t) { return t.cwiseMax(kThetaLo).cwiseMin(kThetaHi); }

Perfusion from_theta(const Vec4& t) {
    const double ve = std::exp(t(3));
    return {std::exp(t(0)), 1.0 / (1.0 + std::exp(-t(1))), std::exp(t(2)), std::min(ve, 1.0)};
}

struct Model {
    std::span<const double> conc, aif;
    double dt;

    Eigen::VectorXd residual(const Vec4& th) const {
        const auto c = tissue_curve(from_theta(th), aif, dt);
        Eigen::VectorXd r(static_cast<Eigen::Index>(c.size()));
        for (std::size_t i = 0; i < c.size(); ++i) r(static_cast<Eigen::Index>(i)) = c[i] - conc[i];
        return r;
    }
};

} // namespace

PixelFit fit_pixel(std::span<const double> conc, std::span<const double> aif, double dt, const Perfusion& init,
                   const FitConfig& cfg) {
    if (conc.size() != aif.size()) throw UsageError("fit_pixel: curve and AIF lengths differ");
    if (!init.valid()) throw UsageError("fit_pixel: invalid initial record");
    for (double c : conc)
        if (!std::isfinite(c)) throw UsageError("fit_pixel: non-finite curve");

    PixelFit out;
    out.p = init;
    if (std::all_of(conc.begin(), conc.end(), [](double c) { return c == 0.0; })) {
        out.p.Fp = 0.0;
        return out;
    }

    const Model model{conc, aif, dt};
    Vec4 th = clamp_theta(to_theta(init));
    Eigen::VectorXd r = model.residual(th);
    double ss = r.squaredNorm();
    out.initial_residual = ss;
    double mu = cfg.damping;

    const Eigen::Index n = r.size();
    Eigen::MatrixXd J(n, 4);
    std::size_t it = 0;
    bool converged = false;
    while (it < cfg.max_iter && !converged) {
        ++it;
        for (int j = 0; j < 4; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(th(j)));
            Vec4 tp = th, tm = th;
            tp(j) += h;
            tm(j) -= h;
            J.col(j) = (model.residual(tp) - model.residual(tm)) / (2 * h);
        }
        const Eigen::Matrix4d JtJ = J.transpose() * J;
        const Vec4 g = J.transpose() * r;
        bool accepted = false;
        while (!accepted) {
            Eigen::Matrix4d H = JtJ;
            for (int j = 0; j < 4; ++j) H(j, j) += mu * std::max(JtJ(j, j), 1e-30);
            const Vec4 raw = H.ldlt().solve(-g);
            const Vec4 step = raw.allFinite() ? Vec4(clamp_theta(th + raw) - th) : raw;
            const bool tiny = step.norm() <= cfg.step_tol * (th.norm() + cfg.step_tol);
            if (!step.allFinite()) {
                mu *= 10;
            } else {
                const Vec4 cand = th + step;
                const Eigen::VectorXd rc = model.residual(cand);
                const double sc = rc.squaredNorm();
                if (std::isfinite(sc) && sc < ss) {
                    th = cand;
                    r = rc;
                    ss = sc;
                    mu = std::max(mu / 10, 1e-12);
                    accepted = true;
                    if (tiny) converged = true;
                } else {
                    if (tiny && mu <= 1e6) {
                        converged = true;
                        break;
                    }
                    mu *= 10;
                }
            }
            if (mu > 1e16) break;
        }
        if (!accepted && !converged) break;
    }
    out.p = from_theta(th);
    out.residual = ss;
    out.converged = converged;
    out.iterations = it;
    return out;
}

std::vector<std::vector<double>> concentration_curves(const ImageSequence& seq, std::size_t baseline_frames,
                                                      const SignalParams& sp, std::vector<std::uint8_t>* clamped) {
    const std::size_t npix = seq.nx() * seq.ny(), nt = seq.nt();
    if (baseline_frames == 0 || baseline_frames > nt) throw UsageError("baseline frame count out of range");
    std::vector<std::vector<double>> curves(npix, std::vector<double>(nt));
    if (clamped) clamped->assign(npix, 0);
    const auto v = seq.values();
    for (std::size_t p = 0; p < npix; ++p) {
        double base = 0;
        for (std::size_t f = 0; f < baseline_frames; ++f) base += std::abs(v[f * npix + p]);
        base /= static_cast<double>(baseline_frames);
        for (std::size_t f = 0; f < nt; ++f) {
            const auto c = to_concentration(std::abs(v[f * npix + p]), base, sp);
            curves[p][f] = c.value;
            if (c.clamped && clamped) (*clamped)[p] = 1;
        }
    }
    return curves;
}

PerfusionMaps fit_maps(const ImageSequence& seq, const std::vector<RoiMask>& masks, std::span<const double> aif,
                       double dt, const FitConfig& cfg, double aif_onset) {
    const std::size_t npix = seq.nx() * seq.ny(), nt = seq.nt();
    if (aif.size() != nt) throw UsageError("fit_maps: AIF length does not match the sequence");
    for (const auto& m : masks)
        if (m.inside.size() != npix) throw UsageError("fit_maps: mask '" + m.name + "' has the wrong size");

    std::size_t nbase = cfg.baseline_frames;
    if (nbase == 0) {
        nbase = static_cast<std::size_t>(std::ceil(aif_onset / dt));
        nbase = std::clamp<std::size_t>(nbase, 1, nt);
    }
    const auto curves = concentration_curves(seq, nbase, cfg.signal);

    std::vector<int> owner(npix, -1);
    for (std::size_t i = 0; i < masks.size(); ++i)
        for (std::size_t p = 0; p < npix; ++p)
            if (masks[i].inside[p] && owner[p] < 0) owner[p] = static_cast<int>(i);

    std::vector<std::size_t> pixels;
    for (std::size_t p = 0; p < npix; ++p)
        if (owner[p] >= 0) pixels.push_back(p);

    std::vector<PixelFit> fits(pixels.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(pixels.size()); ++i)
        fits[static_cast<std::size_t>(i)] = fit_pixel(curves[pixels[static_cast<std::size_t>(i)]], aif, dt, cfg.init, cfg);

    if (cfg.retry) {
        // Per-ROI mean-curve fits seed the retries.
        std::vector<Perfusion> roi_init(masks.size(), cfg.init);
        for (std::size_t r = 0; r < masks.size(); ++r) {
            std::vector<double> mean(nt, 0.0);
            std::size_t count = 0;
            for (std::size_t p = 0; p < npix; ++p)
                if (owner[p] == static_cast<int>(r)) {
                    for (std::size_t f = 0; f < nt; ++f) mean[f] += curves[p][f];
                    ++count;
                }
            if (count == 0) continue;
            for (auto& m : mean) m /= static_cast<double>(count);
            const PixelFit mf = fit_pixel(mean, aif, dt, cfg.init, cfg);
            if (mf.p.valid()) roi_init[r] = mf.p;
        }
#pragma omp parallel for schedule(dynamic)
        for (long i = 0; i < static_cast<long>(pixels.size()); ++i) {
            auto& f = fits[static_cast<std::size_t>(i)];
            if (f.converged || f.p.Fp == 0.0) continue;
            const std::size_t p = pixels[static_cast<std::size_t>(i)];
            PixelFit again = fit_pixel(curves[p], aif, dt, roi_init[static_cast<std::size_t>(owner[p])], cfg);
            if (again.residual < f.residual || (again.converged && again.residual <= f.residual)) {
                again.initial_residual = f.initial_residual;
                f = again;
            }
        }
    }

    PerfusionMaps maps(seq.nx(), seq.ny());
    for (std::size_t i = 0; i < pixels.size(); ++i) maps.set(pixels[i], fits[i].p, fits[i].residual, fits[i].converged);
    return maps;
}

const std::vector<MapParam>& report_params() {
    static const std::vector<MapParam> p{MapParam::Fp, MapParam::E, MapParam::Tc, MapParam::Ktrans, MapParam::PS};
    return p;
}

const RoiError& RoiReport::at(const std::string& roi, MapParam p) const {
    for (const auto& r : rows)
        if (r.roi == roi && r.parameter == p) return r;
    throw UsageError("no report row for " + roi + "/" + std::string(to_string(p)));
}

std::string RoiReport::csv() const {
    std::ostringstream os;
    os << "roi,parameter,mean_rel_err_pct\n";
    for (const auto& r : rows) os << r.roi << ',' << to_string(r.parameter) << ',' << io::format_double(r.mean_rel_err_pct) << '\n';
    return os.str();
}

RoiReport roi_relative_error(const PerfusionMaps& est, const PerfusionMaps& ref, const std::vector<RoiMask>& masks) {
    if (est.nx != ref.nx || est.ny != ref.ny) throw UsageError("roi_relative_error: map sizes differ");
    RoiReport rep;
    for (const auto& m : masks) {
        if (m.inside.size() != est.nx * est.ny) throw UsageError("roi_relative_error: mask size mismatch");
        for (MapParam p : report_params()) {
            const auto& e = field(est, p);
            const auto& r = field(ref, p);
            RoiError row{m.name, p, 0.0, 0, 0};
            double sum = 0;
            for (std::size_t i = 0; i < m.inside.size(); ++i) {
                if (!m.inside[i]) continue;
                if (std::abs(r[i]) < 1e-12) {
                    ++row.excluded;
                    continue;
                }
                sum += std::abs(e[i] - r[i]) / std::abs(r[i]);
                ++row.pixels;
            }
            if (row.pixels == 0) throw UsageError("ROI '" + m.name + "' is empty after exclusions");
            row.mean_rel_err_pct = 100.0 * sum / static_cast<double>(row.pixels);
            rep.rows.push_back(row);
        }
    }
    return rep;
}

RoiReport difference(const RoiReport& a, const RoiReport& b) {
    if (a.rows.size() != b.rows.size()) throw UsageError("difference: reports have different layouts");
    RoiReport d = a;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        if (a.rows[i].roi != b.rows[i].roi || a.rows[i].parameter != b.rows[i].parameter)
            throw UsageError("difference: reports have different layouts");
        d.rows[i].mean_rel_err_pct = a.rows[i].mean_rel_err_pct - b.rows[i].mean_rel_err_pct;
    }
    return d;
}

} // namespace lps
