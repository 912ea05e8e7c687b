#include "nlmecv/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nlmecv {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}
}  // namespace

bool cholesky(std::vector<double>& a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            if (i == j) {
                if (s <= 0.0 || !std::isfinite(s)) return false;
                a[i * n + i] = std::sqrt(s);
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
        for (std::size_t j = i + 1; j < n; ++j) a[i * n + j] = 0.0;
    }
    return true;
}

void cholesky_solve(const std::vector<double>& l, std::size_t n,
                    const std::vector<double>& b, std::vector<double>& x) {
    x = b;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) x[i] -= l[i * n + k] * x[k];
        x[i] /= l[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
        for (std::size_t k = ii + 1; k < n; ++k) x[ii] -= l[k * n + ii] * x[k];
        x[ii] /= l[ii * n + ii];
    }
}

double cholesky_logdet(const std::vector<double>& l, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::log(l[i * n + i]);
    return 2.0 * s;
}

namespace {

void fd_gradient(const Objective& f, const std::vector<double>& x, double h0,
                 std::vector<double>& g) {
    const std::size_t n = x.size();
    g.resize(n);
    std::vector<double> xp = x;
    for (std::size_t k = 0; k < n; ++k) {
        const double h = h0 * std::max(1.0, std::fabs(x[k]));
        xp[k] = x[k] + h;
        const double fp = f(xp);
        xp[k] = x[k] - h;
        const double fm = f(xp);
        xp[k] = x[k];
        g[k] = (fp - fm) / (2.0 * h);
    }
}

void fd_hessian(const Objective& f, const std::vector<double>& x, double fx,
                double h0, std::vector<double>& hess) {
    const std::size_t n = x.size();
    hess.assign(n * n, 0.0);
    std::vector<double> xp = x;
    std::vector<double> hs(n);
    for (std::size_t k = 0; k < n; ++k)
        hs[k] = h0 * std::max(1.0, std::fabs(x[k]));

    for (std::size_t k = 0; k < n; ++k) {
        xp[k] = x[k] + hs[k];
        const double fp = f(xp);
        xp[k] = x[k] - hs[k];
        const double fm = f(xp);
        xp[k] = x[k];
        hess[k * n + k] = (fp - 2.0 * fx + fm) / (hs[k] * hs[k]);
    }
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = k + 1; l < n; ++l) {
            xp[k] = x[k] + hs[k]; xp[l] = x[l] + hs[l];
            const double fpp = f(xp);
            xp[l] = x[l] - hs[l];
            const double fpm = f(xp);
            xp[k] = x[k] - hs[k]; xp[l] = x[l] + hs[l];
            const double fmp = f(xp);
            xp[l] = x[l] - hs[l];
            const double fmm = f(xp);
            xp[k] = x[k]; xp[l] = x[l];
            const double v = (fpp - fpm - fmp + fmm) / (4.0 * hs[k] * hs[l]);
            hess[k * n + l] = v;
            hess[l * n + k] = v;
        }
    }
}

}  // namespace

NewtonResult newton_minimize(const Objective& f, std::vector<double> x0,
                             const NewtonOptions& opts) {
    const std::size_t n = x0.size();
    NewtonResult res;
    res.x = std::move(x0);
    if (n == 0) {
        res.f = f(res.x);
        res.converged = true;
        res.hessian_pd = true;
        return res;
    }

    auto safe_f = [&](const std::vector<double>& x) {
        double v;
        try {
            v = f(x);
        } catch (...) {
            return kInf;
        }
        return std::isfinite(v) ? v : kInf;
    };

    res.f = safe_f(res.x);
    if (!std::isfinite(res.f)) return res;  // start point infeasible

    std::vector<double> g, hess, chol, step, xt;
    bool stalled = false;
    for (res.iterations = 0; res.iterations < opts.max_iterations;
         ++res.iterations) {
        fd_gradient(safe_f, res.x, opts.fd_step_grad, g);
        res.grad_norm = norm2(g);
        if (res.grad_norm < opts.grad_tol) { res.converged = true; break; }
        if (stalled) {
            res.converged = res.grad_norm < opts.stall_grad_tol;
            break;
        }

        fd_hessian(safe_f, res.x, res.f, opts.fd_step_hess, hess);

        // Levenberg shift until the shifted Hessian factors.
        double lambda = 0.0;
        bool solved = false;
        for (int tries = 0; tries < 40 && !solved; ++tries) {
            chol = hess;
            if (lambda > 0.0)
                for (std::size_t k = 0; k < n; ++k) chol[k * n + k] += lambda;
            if (cholesky(chol, n)) {
                solved = true;
            } else {
                lambda = (lambda == 0.0) ? 1e-8 : lambda * 10.0;
                if (lambda > 1e12) break;
            }
        }
        if (!solved) break;

        std::vector<double> neg_g(n);
        for (std::size_t k = 0; k < n; ++k) neg_g[k] = -g[k];
        cholesky_solve(chol, n, neg_g, step);

        double slope = 0.0;
        for (std::size_t k = 0; k < n; ++k) slope += g[k] * step[k];
        if (slope >= 0.0) { stalled = true; continue; }

        double t = 1.0;
        bool accepted = false;
        xt.resize(n);
        for (int h = 0; h < 40; ++h) {
            for (std::size_t k = 0; k < n; ++k) xt[k] = res.x[k] + t * step[k];
            const double ft = safe_f(xt);
            if (ft <= res.f + 1e-4 * t * slope) {
                res.x = xt;
                res.f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) stalled = true;  // re-check gradient once, then stop
    }

    fd_gradient(safe_f, res.x, opts.fd_step_grad, g);
    res.grad_norm = norm2(g);
    res.gradient = g;
    fd_hessian(safe_f, res.x, res.f, opts.fd_step_hess, res.hessian);
    std::vector<double> chk = res.hessian;
    res.hessian_pd = cholesky(chk, n);
    if (res.grad_norm < opts.grad_tol) res.converged = true;
    return res;
}

namespace {

struct BfgsOutcome {
    std::vector<double> x;
    double f;
    int iterations;
    long long evals;
    double grad_norm;
    bool converged;
};

BfgsOutcome bfgs_phase(const Objective& f, std::vector<double> x,
                       const SearchOptions& opts, long long& eval_counter) {
    const std::size_t n = x.size();
    auto safe_f = [&](const std::vector<double>& p) {
        ++eval_counter;
        double v;
        try {
            v = f(p);
        } catch (...) {
            return kInf;
        }
        return std::isfinite(v) ? v : kInf;
    };

    BfgsOutcome out{x, safe_f(x), 0, 0, kInf, false};
    if (!std::isfinite(out.f)) return out;

    std::vector<double> g, gn, s(n), y(n), hg(n), xt(n);
    std::vector<double> hinv(n * n, 0.0);  // inverse Hessian approximation
    for (std::size_t i = 0; i < n; ++i) hinv[i * n + i] = 1.0;
    fd_gradient(safe_f, out.x, opts.fd_step, g);

    int small_changes = 0;
    for (int it = 0; it < opts.max_bfgs_iterations; ++it) {
        // direction = -H g
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += hinv[i * n + j] * g[j];
            hg[i] = -acc;
        }
        double slope = 0.0;
        for (std::size_t i = 0; i < n; ++i) slope += g[i] * hg[i];
        if (!(slope < 0.0)) {
            // reset to steepest descent
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) hinv[i * n + j] = 0.0;
                hinv[i * n + i] = 1.0;
                hg[i] = -g[i];
            }
            slope = 0.0;
            for (std::size_t i = 0; i < n; ++i) slope += g[i] * hg[i];
            if (!(slope < 0.0)) break;
        }

        double t = 1.0;
        double ft = kInf;
        bool accepted = false;
        for (int h = 0; h < 50; ++h) {
            for (std::size_t i = 0; i < n; ++i) xt[i] = out.x[i] + t * hg[i];
            ft = safe_f(xt);
            if (ft <= out.f + 1e-4 * t * slope) { accepted = true; break; }
            t *= 0.5;
        }
        if (!accepted) break;

        for (std::size_t i = 0; i < n; ++i) s[i] = xt[i] - out.x[i];
        const double f_prev = out.f;
        out.x = xt;
        out.f = ft;
        ++out.iterations;

        fd_gradient(safe_f, out.x, opts.fd_step, gn);
        for (std::size_t i = 0; i < n; ++i) y[i] = gn[i] - g[i];
        g = gn;
        out.grad_norm = norm2(g);

        const double rel_change =
            std::fabs(f_prev - out.f) / std::max(1.0, std::fabs(out.f));
        small_changes = (rel_change < opts.rel_f_tol) ? small_changes + 1 : 0;
        if (out.grad_norm < 1e-8 || small_changes >= 2) {
            out.converged = true;
            break;
        }

        double sy = 0.0, yy = 0.0;
        for (std::size_t i = 0; i < n; ++i) { sy += s[i] * y[i]; yy += y[i] * y[i]; }
        if (sy > 1e-12 * norm2(s) * std::sqrt(yy)) {
            if (it == 0) {
                const double scale = sy / yy;
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < n; ++j) hinv[i * n + j] = 0.0;
                    hinv[i * n + i] = scale;
                }
            }
            // H <- (I - r s y^T) H (I - r y s^T) + r s s^T
            const double r = 1.0 / sy;
            std::vector<double> hy(n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) hy[i] += hinv[i * n + j] * y[j];
            double yhy = 0.0;
            for (std::size_t i = 0; i < n; ++i) yhy += y[i] * hy[i];
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    hinv[i * n + j] += -r * (hy[i] * s[j] + s[i] * hy[j]) +
                                       r * (1.0 + r * yhy) * s[i] * s[j];
        }
    }
    out.evals = eval_counter;
    return out;
}

struct SimplexOutcome {
    std::vector<double> x;
    double f;
    int evals;
    bool converged;
};

SimplexOutcome nelder_mead(const Objective& f, const std::vector<double>& x0,
                           double f0, const SearchOptions& opts,
                           long long& eval_counter) {
    const std::size_t n = x0.size();
    auto safe_f = [&](const std::vector<double>& p) {
        ++eval_counter;
        double v;
        try {
            v = f(p);
        } catch (...) {
            return kInf;
        }
        return std::isfinite(v) ? v : kInf;
    };

    const int max_evals = opts.simplex_max_evals > 0
                              ? opts.simplex_max_evals
                              : 400 + 220 * static_cast<int>(n);
    int used = 0;
    std::vector<std::vector<double>> pts(n + 1, x0);
    std::vector<double> fs(n + 1, f0);
    for (std::size_t k = 0; k < n; ++k) {
        pts[k + 1][k] += opts.simplex_step * std::max(0.1, std::fabs(x0[k]));
        fs[k + 1] = safe_f(pts[k + 1]);
        ++used;
    }

    std::vector<std::size_t> ord(n + 1);
    std::vector<double> centroid(n), xr(n), xe(n), xc(n);
    bool converged = false;
    while (used < max_evals) {
        for (std::size_t i = 0; i <= n; ++i) ord[i] = i;
        std::sort(ord.begin(), ord.end(),
                  [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
        const std::size_t best = ord[0], worst = ord[n], second = ord[n - 1];

        double xspread = 0.0;
        for (std::size_t i = 1; i <= n; ++i)
            for (std::size_t k = 0; k < n; ++k)
                xspread = std::max(xspread,
                                   std::fabs(pts[ord[i]][k] - pts[best][k]));
        const double fspread = fs[worst] - fs[best];
        if (fspread <= opts.simplex_rel_f_tol * std::max(1.0, std::fabs(fs[best])) &&
            xspread <= opts.simplex_x_tol) {
            converged = true;
            break;
        }

        for (std::size_t k = 0; k < n; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i <= n; ++i)
                if (i != worst) s += pts[i][k];
            centroid[k] = s / static_cast<double>(n);
        }
        for (std::size_t k = 0; k < n; ++k)
            xr[k] = centroid[k] + (centroid[k] - pts[worst][k]);
        const double fr = safe_f(xr); ++used;

        if (fr < fs[best]) {
            for (std::size_t k = 0; k < n; ++k)
                xe[k] = centroid[k] + 2.0 * (centroid[k] - pts[worst][k]);
            const double fe = safe_f(xe); ++used;
            if (fe < fr) { pts[worst] = xe; fs[worst] = fe; }
            else { pts[worst] = xr; fs[worst] = fr; }
        } else if (fr < fs[second]) {
            pts[worst] = xr; fs[worst] = fr;
        } else {
            const bool outside = fr < fs[worst];
            for (std::size_t k = 0; k < n; ++k)
                xc[k] = centroid[k] + (outside ? 0.5 : -0.5) *
                                          (centroid[k] - pts[worst][k]);
            const double fc = safe_f(xc); ++used;
            if (fc < std::min(fr, fs[worst])) {
                pts[worst] = xc; fs[worst] = fc;
            } else {
                // shrink toward best
                for (std::size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (std::size_t k = 0; k < n; ++k)
                        pts[i][k] = pts[best][k] + 0.5 * (pts[i][k] - pts[best][k]);
                    fs[i] = safe_f(pts[i]); ++used;
                }
            }
        }
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i <= n; ++i)
        if (fs[i] < fs[best]) best = i;
    return {pts[best], fs[best], used, converged};
}

}  // namespace

SearchResult minimize(const Objective& f, std::vector<double> x0,
                      const SearchOptions& opts) {
    SearchResult res;
    long long evals = 0;
    if (x0.empty()) {
        res.f = f(x0);
        res.x = std::move(x0);
        res.converged = true;
        res.n_evals = 1;
        return res;
    }

    BfgsOutcome b = bfgs_phase(f, std::move(x0), opts, evals);
    res.iterations = b.iterations;
    res.grad_norm = b.grad_norm;

    SearchOptions polish = opts;
    if (polish.simplex_max_evals == 0) {
        const int n = static_cast<int>(b.x.size());
        polish.simplex_max_evals =
            b.converged ? 200 + 80 * n : 400 + 260 * n;
    }
    SimplexOutcome s = nelder_mead(f, b.x, b.f, polish, evals);
    res.polish_evals = s.evals;
    if (s.f <= b.f) {
        res.x = s.x;
        res.f = s.f;
    } else {
        res.x = b.x;
        res.f = b.f;
    }
    res.converged = s.converged;
    res.n_evals = evals;
    return res;
}

}  // namespace nlmecv
