#pragma once

// Box-constrained limited-memory quasi-Newton solver (L-BFGS-B).
//
// Follows the algorithm of Byrd, Lu, Nocedal & Zhu, "A limited memory
// algorithm for bound constrained optimization" (1995): limited-memory BFGS
// in compact representation B = theta*I - W M W^T, a generalized Cauchy
// point found by gradient projection along the piecewise-linear path, direct
// primal subspace minimization over the free variables, and a More-Thuente
// strong-Wolfe line search (MINPACK-2 dcsrch/dcstep). Bounds are uniform
// scalars applied to every variable.
//
// Defaults mirror the reference Fortran solver: memory 10, factr 1e7
// (f_rtol = 1e7 * machine epsilon), pgtol 1e-5, line search ftol 1e-3,
// gtol 0.9, xtol 0.1.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "texsynth/core.hpp"

namespace texsynth {

// Uniform box applied to every variable.
struct Bounds {
    double lower = 0.0;
    double upper = 1.0;
};

struct SolverConfig {
    int memory = 10;
    int max_iterations = 2000;
    double f_rtol = 2.220446049250313e-09;  // factr 1e7 x machine epsilon
    double pg_tol = 1e-5;
    int max_evals_per_linesearch = 20;
    double ls_ftol = 1e-3;  // sufficient-decrease coefficient
    double ls_gtol = 0.9;   // curvature coefficient (smaller = more exact search)
    double ls_xtol = 0.1;   // relative interval-width cutoff
    // Called after every accepted iterate: (iteration, x, f, projected-gradient inf-norm).
    std::function<void(int, const Eigen::VectorXd&, double, double)> on_iteration;
};

enum class SolverStatus { converged_f, converged_pg, max_iter, linesearch_fail };

inline std::string to_string(SolverStatus s) {
    switch (s) {
        case SolverStatus::converged_f: return "converged_f";
        case SolverStatus::converged_pg: return "converged_pg";
        case SolverStatus::max_iter: return "max_iter";
        case SolverStatus::linesearch_fail: return "linesearch_fail";
    }
    return "unknown";
}

struct TracePoint {
    double f = 0.0;
    double pg_norm = 0.0;
};

struct SolverResult {
    Eigen::VectorXd x_final;
    double f_final = 0.0;
    int n_iterations = 0;
    SolverStatus status = SolverStatus::max_iter;
    std::vector<TracePoint> trace;  // initial point plus every accepted iterate
};

// Objective callback: fills grad, returns f.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

namespace lbfgsb_detail {

constexpr double kEps = 2.220446049250313e-16;

// MINPACK-2 dcstep: safeguarded cubic/quadratic trial step and interval
// update for the line search.
inline void dcstep(double& stx, double& fx, double& dx, double& sty, double& fy, double& dy,
                   double& stp, double fp, double dp, bool& brackt, double stpmin, double stpmax) {
    const double sgnd = dp * (dx / std::abs(dx));
    double stpf;

    if (fp > fx) {
        // First case: higher function value; the minimum is bracketed.
        const double theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp;
        const double s = std::max({std::abs(theta), std::abs(dx), std::abs(dp)});
        double gamma = s * std::sqrt((theta / s) * (theta / s) - (dx / s) * (dp / s));
        if (stp < stx) gamma = -gamma;
        const double p = (gamma - dx) + theta;
        const double q = ((gamma - dx) + gamma) + dp;
        const double r = p / q;
        const double stpc = stx + r * (stp - stx);
        const double stpq = stx + ((dx / ((fx - fp) / (stp - stx) + dx)) / 2.0) * (stp - stx);
        if (std::abs(stpc - stx) < std::abs(stpq - stx))
            stpf = stpc;
        else
            stpf = stpc + (stpq - stpc) / 2.0;
        brackt = true;
    } else if (sgnd < 0.0) {
        // Second case: opposite derivative signs; bracketed.
        const double theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp;
        const double s = std::max({std::abs(theta), std::abs(dx), std::abs(dp)});
        double gamma = s * std::sqrt((theta / s) * (theta / s) - (dx / s) * (dp / s));
        if (stp > stx) gamma = -gamma;
        const double p = (gamma - dp) + theta;
        const double q = ((gamma - dp) + gamma) + dx;
        const double r = p / q;
        const double stpc = stp + r * (stx - stp);
        const double stpq = stp + (dp / (dp - dx)) * (stx - stp);
        if (std::abs(stpc - stp) > std::abs(stpq - stp))
            stpf = stpc;
        else
            stpf = stpq;
        brackt = true;
    } else if (std::abs(dp) < std::abs(dx)) {
        // Third case: same sign, decreasing magnitude.
        const double theta = 3.0 * (fx - fp) / (stp - stx) + dx + dp;
        const double s = std::max({std::abs(theta), std::abs(dx), std::abs(dp)});
        const double arg = (theta / s) * (theta / s) - (dx / s) * (dp / s);
        double gamma = s * std::sqrt(std::max(0.0, arg));
        if (stp > stx) gamma = -gamma;
        const double p = (gamma - dp) + theta;
        const double q = (gamma + (dx - dp)) + gamma;
        const double r = p / q;
        double stpc;
        if (r < 0.0 && gamma != 0.0)
            stpc = stp + r * (stx - stp);
        else if (stp > stx)
            stpc = stpmax;
        else
            stpc = stpmin;
        const double stpq = stp + (dp / (dp - dx)) * (stx - stp);
        if (brackt) {
            if (std::abs(stpc - stp) < std::abs(stpq - stp))
                stpf = stpc;
            else
                stpf = stpq;
            if (stp > stx)
                stpf = std::min(stp + 0.66 * (sty - stp), stpf);
            else
                stpf = std::max(stp + 0.66 * (sty - stp), stpf);
        } else {
            if (std::abs(stpc - stp) > std::abs(stpq - stp))
                stpf = stpc;
            else
                stpf = stpq;
            stpf = std::min(stpmax, stpf);
            stpf = std::max(stpmin, stpf);
        }
    } else {
        // Fourth case: same sign, non-decreasing magnitude.
        if (brackt) {
            const double theta = 3.0 * (fp - fy) / (sty - stp) + dy + dp;
            const double s = std::max({std::abs(theta), std::abs(dy), std::abs(dp)});
            double gamma = s * std::sqrt((theta / s) * (theta / s) - (dy / s) * (dp / s));
            if (stp > sty) gamma = -gamma;
            const double p = (gamma - dp) + theta;
            const double q = ((gamma - dp) + gamma) + dy;
            const double r = p / q;
            stpf = stp + r * (sty - stp);
        } else if (stp > stx) {
            stpf = stpmax;
        } else {
            stpf = stpmin;
        }
    }

    // Update the interval of uncertainty.
    if (fp > fx) {
        sty = stp;
        fy = fp;
        dy = dp;
    } else {
        if (sgnd < 0.0) {
            sty = stx;
            fy = fx;
            dy = dx;
        }
        stx = stp;
        fx = fp;
        dx = dp;
    }
    stp = stpf;
}

struct LineSearchResult {
    double stp = 0.0;
    double f = 0.0;
    double dg = 0.0;  // directional derivative at stp
    int n_evals = 0;
    bool wolfe = false;       // strong Wolfe conditions met
    bool sufficient = false;  // the last probe satisfies sufficient decrease
    bool has_best = false;    // some earlier probe satisfied sufficient decrease
    double best_stp = 0.0;
    double best_f = 0.0;
};

// MINPACK-2 dcsrch: finds a step satisfying strong Wolfe conditions.
// phi(stp) must return {f, directional derivative}.
template <class Phi>
LineSearchResult dcsrch(Phi&& phi, double f0, double g0, double stp, double stpmin, double stpmax,
                        int max_evals, double ftol = 1e-3, double gtol = 0.9, double xtol = 0.1) {
    constexpr double xtrapl = 1.1;
    constexpr double xtrapu = 4.0;

    LineSearchResult res;
    bool brackt = false;
    int stage = 1;
    const double finit = f0;
    const double ginit = g0;
    const double gtest = ftol * ginit;
    double width = stpmax - stpmin;
    double width1 = width / 0.5;

    double stx = 0.0, fx = finit, dx = ginit;
    double sty = 0.0, fy = finit, dy = ginit;
    double stmin = 0.0;
    double stmax = stp + xtrapu * stp;

    for (;;) {
        auto [f, g] = phi(stp);
        ++res.n_evals;
        const double ftest = finit + stp * gtest;

        res.stp = stp;
        res.f = f;
        res.dg = g;
        // Sufficient decrease must be an actual decrease; rounding can make
        // f == ftest == finit for vanishing steps.
        res.sufficient = (f <= ftest && f < finit);
        if (res.sufficient && (!res.has_best || f < res.best_f)) {
            res.has_best = true;
            res.best_stp = stp;
            res.best_f = f;
        }

        if (stage == 1 && f <= ftest && g >= 0.0) stage = 2;

        if (res.sufficient && std::abs(g) <= gtol * (-ginit)) {
            res.wolfe = true;
            return res;  // strong Wolfe satisfied
        }
        // Termination without Wolfe: caller decides what is salvageable.
        if (brackt && (stp <= stmin || stp >= stmax)) return res;
        if (brackt && stmax - stmin <= xtol * stmax) return res;
        if (stp == stpmax && f <= ftest && g <= gtest) return res;
        if (stp == stpmin && (f > ftest || g >= gtest)) return res;
        if (res.n_evals >= max_evals) return res;

        // Stage 1 uses the modified function psi to force the step past
        // points that satisfy sufficient decrease but not both conditions.
        if (stage == 1 && f <= fx && f > ftest) {
            double fm = f - stp * gtest;
            double fxm = fx - stx * gtest;
            double fym = fy - sty * gtest;
            double gm = g - gtest;
            double gxm = dx - gtest;
            double gym = dy - gtest;
            dcstep(stx, fxm, gxm, sty, fym, gym, stp, fm, gm, brackt, stmin, stmax);
            fx = fxm + stx * gtest;
            fy = fym + sty * gtest;
            dx = gxm + gtest;
            dy = gym + gtest;
        } else {
            dcstep(stx, fx, dx, sty, fy, dy, stp, f, g, brackt, stmin, stmax);
        }

        if (brackt) {
            if (std::abs(sty - stx) >= 0.66 * width1) stp = stx + 0.5 * (sty - stx);
            width1 = width;
            width = std::abs(sty - stx);
        }
        if (brackt) {
            stmin = std::min(stx, sty);
            stmax = std::max(stx, sty);
        } else {
            stmin = stp + xtrapl * (stp - stx);
            stmax = stp + xtrapu * (stp - stx);
        }
        stp = std::max(stp, stpmin);
        stp = std::min(stp, stpmax);

        // If no further progress is possible, evaluate at the best point.
        if ((brackt && (stp <= stmin || stp >= stmax)) ||
            (brackt && stmax - stmin <= xtol * stmax))
            stp = stx;
    }
}

// Limited-memory state in compact form.
struct Memory {
    std::deque<Eigen::VectorXd> s_list;
    std::deque<Eigen::VectorXd> y_list;
    double theta = 1.0;

    Eigen::MatrixXd W;     // n x 2h: [Y, theta*S]
    Eigen::MatrixXd Mmat;  // 2h x 2h: inverse middle matrix
    int h = 0;

    void clear() {
        s_list.clear();
        y_list.clear();
        theta = 1.0;
        h = 0;
        W.resize(0, 0);
        Mmat.resize(0, 0);
    }

    // Rebuilds W and Mmat from the stored pairs. Returns false if the middle
    // matrix is not invertible (caller should reset the memory).
    bool refresh(Eigen::Index n) {
        h = static_cast<int>(s_list.size());
        if (h == 0) {
            W.resize(n, 0);
            Mmat.resize(0, 0);
            return true;
        }
        Eigen::MatrixXd S(n, h), Y(n, h);
        for (int i = 0; i < h; ++i) {
            S.col(i) = s_list[i];
            Y.col(i) = y_list[i];
        }
        W.resize(n, 2 * h);
        W.leftCols(h) = Y;
        W.rightCols(h) = theta * S;

        const Eigen::MatrixXd SY = S.transpose() * Y;
        Eigen::MatrixXd middle = Eigen::MatrixXd::Zero(2 * h, 2 * h);
        middle.topLeftCorner(h, h).diagonal() = -SY.diagonal();
        Eigen::MatrixXd L = SY.triangularView<Eigen::StrictlyLower>();
        middle.topRightCorner(h, h) = L.transpose();
        middle.bottomLeftCorner(h, h) = L;
        middle.bottomRightCorner(h, h) = theta * (S.transpose() * S);

        Eigen::FullPivLU<Eigen::MatrixXd> lu(middle);
        if (!lu.isInvertible()) return false;
        Mmat = lu.inverse();
        return true;
    }
};

// Generalized Cauchy point: minimizes the quadratic model along the
// projected steepest-descent path. Returns x^cp and c = W^T (x^cp - x).
inline void cauchy_point(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Bounds& b,
                         const Memory& mem, Eigen::VectorXd& xcp, Eigen::VectorXd& c) {
    const Eigen::Index n = x.size();
    const int two_h = 2 * mem.h;
    xcp = x;
    c = Eigen::VectorXd::Zero(two_h);

    Eigen::VectorXd d = -g;
    std::vector<std::pair<double, Eigen::Index>> breakpoints;
    breakpoints.reserve(n);
    double max_t = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double t;
        if (g[i] < 0.0)
            t = (x[i] - b.upper) / g[i];
        else if (g[i] > 0.0)
            t = (x[i] - b.lower) / g[i];
        else {
            d[i] = 0.0;
            continue;
        }
        if (t <= 0.0) {
            d[i] = 0.0;  // already at the bound the gradient pushes against
            continue;
        }
        breakpoints.emplace_back(t, i);
        max_t = std::max(max_t, t);
    }
    std::sort(breakpoints.begin(), breakpoints.end());

    Eigen::VectorXd p = mem.W.transpose() * d;  // 2h
    double fp = -d.squaredNorm();
    if (fp >= 0.0) return;  // no descent along the projected path
    double fpp = -mem.theta * fp;
    if (two_h > 0) fpp -= p.dot(mem.Mmat * p);
    const double fpp_floor = kEps * (-mem.theta * fp);
    fpp = std::max(fpp, fpp_floor);
    double dt_min = -fp / fpp;
    double t_old = 0.0;

    std::size_t next = 0;
    while (next < breakpoints.size()) {
        const auto [t, bidx] = breakpoints[next];
        const double dt = t - t_old;
        if (dt_min < dt) break;

        // Variable bidx reaches its bound at t; fix it and update the model
        // derivatives along the reduced path.
        const double xb = (d[bidx] > 0.0) ? b.upper : b.lower;
        const double zb = xb - x[bidx];
        const double gb = g[bidx];
        xcp[bidx] = xb;

        c += dt * p;
        if (two_h > 0) {
            const Eigen::VectorXd wb = mem.W.row(bidx).transpose();
            const Eigen::VectorXd Mc = mem.Mmat * c;
            const Eigen::VectorXd Mp = mem.Mmat * p;
            const Eigen::VectorXd Mw = mem.Mmat * wb;
            fp += dt * fpp + gb * gb + mem.theta * gb * zb - gb * wb.dot(Mc);
            fpp -= mem.theta * gb * gb + 2.0 * gb * wb.dot(Mp) + gb * gb * wb.dot(Mw);
            p += gb * wb;
        } else {
            fp += dt * fpp + gb * gb + mem.theta * gb * zb;
            fpp -= mem.theta * gb * gb;
        }
        fpp = std::max(fpp, fpp_floor);
        d[bidx] = 0.0;
        dt_min = -fp / fpp;
        t_old = t;
        ++next;
        if (fp >= 0.0) {
            dt_min = 0.0;
            break;
        }
    }

    dt_min = std::max(dt_min, 0.0);
    const double t_final = t_old + dt_min;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (d[i] == 0.0) continue;
        xcp[i] = std::clamp(x[i] + t_final * d[i], b.lower, b.upper);
    }
    c += dt_min * p;
}

// Direct primal subspace minimization over the variables free at the Cauchy
// point, backtracked into the box. Returns the subspace minimizer x_bar.
inline Eigen::VectorXd subspace_minimize(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                         const Bounds& b, const Memory& mem,
                                         const Eigen::VectorXd& xcp, const Eigen::VectorXd& c) {
    const Eigen::Index n = x.size();
    std::vector<Eigen::Index> free;
    free.reserve(n);
    for (Eigen::Index i = 0; i < n; ++i)
        if (xcp[i] > b.lower && xcp[i] < b.upper) free.push_back(i);
    if (free.empty()) return xcp;
    const Eigen::Index nf = static_cast<Eigen::Index>(free.size());

    // Reduced gradient of the model at the Cauchy point.
    Eigen::VectorXd r_full = g + mem.theta * (xcp - x);
    if (mem.h > 0) r_full -= mem.W * (mem.Mmat * c);
    Eigen::VectorXd rf(nf);
    for (Eigen::Index j = 0; j < nf; ++j) rf[j] = r_full[free[j]];

    Eigen::VectorXd df;
    if (mem.h == 0) {
        df = -rf / mem.theta;
    } else {
        Eigen::MatrixXd WF(nf, 2 * mem.h);
        for (Eigen::Index j = 0; j < nf; ++j) WF.row(j) = mem.W.row(free[j]);
        const Eigen::VectorXd v = mem.Mmat * (WF.transpose() * rf);
        Eigen::MatrixXd K = Eigen::MatrixXd::Identity(2 * mem.h, 2 * mem.h) -
                            (1.0 / mem.theta) * (mem.Mmat * (WF.transpose() * WF));
        Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
        if (lu.isInvertible()) {
            const Eigen::VectorXd w = lu.solve(v);
            df = -(rf + WF * w / mem.theta) / mem.theta;
        } else {
            df = -rf / mem.theta;
        }
    }

    // Backtrack into the box.
    double alpha = 1.0;
    for (Eigen::Index j = 0; j < nf; ++j) {
        const Eigen::Index i = free[j];
        if (df[j] > 0.0)
            alpha = std::min(alpha, (b.upper - xcp[i]) / df[j]);
        else if (df[j] < 0.0)
            alpha = std::min(alpha, (b.lower - xcp[i]) / df[j]);
    }
    alpha = std::max(alpha, 0.0);

    Eigen::VectorXd xbar = xcp;
    for (Eigen::Index j = 0; j < nf; ++j)
        xbar[free[j]] = std::clamp(xcp[free[j]] + alpha * df[j], b.lower, b.upper);
    return xbar;
}

inline double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                      const Bounds& b) {
    double norm = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double step = std::clamp(x[i] - g[i], b.lower, b.upper) - x[i];
        norm = std::max(norm, std::abs(step));
    }
    return norm;
}

}  // namespace lbfgsb_detail

inline SolverResult minimize(const Objective& objective, Eigen::VectorXd x0, const Bounds& bounds,
                             const SolverConfig& cfg) {
    using namespace lbfgsb_detail;
    if (bounds.lower >= bounds.upper)
        throw std::invalid_argument("minimize: bounds must satisfy lower < upper");
    if (cfg.memory < 1) throw std::invalid_argument("minimize: memory must be >= 1");

    const Eigen::Index n = x0.size();
    Eigen::VectorXd x = x0.cwiseMax(bounds.lower).cwiseMin(bounds.upper);
    Eigen::VectorXd g(n);

    auto eval = [&](const Eigen::VectorXd& point, Eigen::VectorXd& grad) {
        const double f = objective(point, grad);
        if (!std::isfinite(f) || !grad.allFinite())
            throw SolverError("objective returned a non-finite value or gradient");
        return f;
    };

    double f = eval(x, g);
    Memory mem;

    SolverResult res;
    res.trace.push_back({f, projected_gradient_norm(x, g, bounds)});
    res.status = SolverStatus::max_iter;

    bool first_linesearch = true;
    if (res.trace.back().pg_norm <= cfg.pg_tol) {
        res.status = SolverStatus::converged_pg;
        res.x_final = x;
        res.f_final = f;
        return res;
    }

    Eigen::VectorXd xcp, c, g_new(n);
    for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
        bool accepted = false;
        double f_new = f;
        double stp = 0.0;
        Eigen::VectorXd d;

        // One retry with cleared memory if the quasi-Newton direction or the
        // line search fails.
        for (int attempt = 0; attempt < 2; ++attempt) {
            if (!mem.refresh(n)) {
                mem.clear();
                mem.refresh(n);
            }
            cauchy_point(x, g, bounds, mem, xcp, c);
            const Eigen::VectorXd xbar = subspace_minimize(x, g, bounds, mem, xcp, c);
            d = xbar - x;
            const double gd = g.dot(d);
            if (!(gd < 0.0)) {
                if (mem.h > 0) {
                    mem.clear();
                    continue;
                }
                break;  // projected gradient step is not a descent direction: give up
            }

            double stpmax = 1e10;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (d[i] > 0.0)
                    stpmax = std::min(stpmax, (bounds.upper - x[i]) / d[i]);
                else if (d[i] < 0.0)
                    stpmax = std::min(stpmax, (bounds.lower - x[i]) / d[i]);
            }
            stpmax = std::max(stpmax, 1.0);  // x + d is feasible by construction

            double stp0 = first_linesearch ? std::min(1.0 / d.norm(), stpmax) : 1.0;
            stp0 = std::min(stp0, stpmax);

            Eigen::VectorXd x_trial(n);
            auto phi = [&](double s) {
                x_trial = x + s * d;
                const double fv = eval(x_trial, g_new);
                return std::pair<double, double>(fv, g_new.dot(d));
            };
            const LineSearchResult ls =
                dcsrch(phi, f, gd, stp0, 0.0, stpmax, cfg.max_evals_per_linesearch,
                       cfg.ls_ftol, cfg.ls_gtol, cfg.ls_xtol);
            first_linesearch = false;

            if (ls.wolfe || ls.sufficient) {
                // dcsrch always returns straight after an evaluation, so
                // ls.stp is the point g_new currently holds.
                stp = ls.stp;
                f_new = ls.f;
                accepted = true;
                break;
            }
            if (ls.has_best) {
                // The last probe failed but an earlier one achieved
                // sufficient decrease; re-evaluate it to recover the gradient.
                stp = ls.best_stp;
                x_trial = x + stp * d;
                f_new = eval(x_trial, g_new);
                accepted = true;
                break;
            }
            if (mem.h > 0) {
                mem.clear();
                continue;
            }
            break;
        }

        if (!accepted) {
            res.status = SolverStatus::linesearch_fail;
            break;
        }

        Eigen::VectorXd x_new = (x + stp * d).cwiseMax(bounds.lower).cwiseMin(bounds.upper);
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        const double yy = y.squaredNorm();
        if (sy > kEps * yy && yy > 0.0) {
            mem.s_list.push_back(s);
            mem.y_list.push_back(y);
            while (static_cast<int>(mem.s_list.size()) > cfg.memory) {
                mem.s_list.pop_front();
                mem.y_list.pop_front();
            }
            mem.theta = yy / sy;
        }

        const double f_old = f;
        x = std::move(x_new);
        f = f_new;
        g = g_new;
        res.n_iterations = iter;

        const double pg = projected_gradient_norm(x, g, bounds);
        res.trace.push_back({f, pg});
        if (cfg.on_iteration) cfg.on_iteration(iter, x, f, pg);

        if (pg <= cfg.pg_tol) {
            res.status = SolverStatus::converged_pg;
            break;
        }
        if (f_old - f <= cfg.f_rtol * std::max({std::abs(f_old), std::abs(f), 1.0})) {
            res.status = SolverStatus::converged_f;
            break;
        }
    }

    res.x_final = x;
    res.f_final = f;
    return res;
}

}  // namespace texsynth
