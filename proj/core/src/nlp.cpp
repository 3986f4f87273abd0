#include "ndeepc/nlp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "ndeepc/error.hpp"

namespace ndeepc::numerics {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Limited-memory BFGS matrix in compact form (Byrd, Nocedal, Schnabel),
//   B = B0 - [B0 S, R] K^{-1} [B0 S, R]^T,  K = [[S^T B0 S, L], [L^T, -D]],
// in the scaled coordinates of the solver. B0 = I - c V V^T deflates the
// optional flat directions V (orthonormal columns) to curvature 1 - c. Both
// terms are stacked into a single B = I - W K^{-1} W^T.
class CompactBfgs {
public:
    CompactBfgs(Index n, int memory, const Matrix &flat, double flat_curvature)
        : n_(n), memory_(std::max(memory, 1)), flat_(std::sqrt(1.0 - flat_curvature) * flat) {
        rebuild();
    }

    [[nodiscard]] int pairs() const { return static_cast<int>(s_.size()); }
    [[nodiscard]] Index rank() const { return w_.cols(); }
    [[nodiscard]] const Matrix &w() const { return w_; }
    [[nodiscard]] const Matrix &k() const { return k_; }

    void reset() {
        s_.clear();
        r_.clear();
        rebuild();
    }

    [[nodiscard]] Vector apply(const Vector &v) const {
        if (w_.cols() == 0) return v;
        return v - w_ * k_lu_.solve(w_.transpose() * v);
    }

    // Powell-damped update; returns false when the pair was skipped.
    bool update(const Vector &s, Vector r) {
        const double ss = s.squaredNorm();
        if (!(ss > 0.0) || !std::isfinite(ss) || !r.allFinite()) return false;
        const Vector bs = apply(s);
        const double sbs = s.dot(bs);
        if (!(sbs > 1e-300)) return false;
        const double sr = s.dot(r);
        if (sr < 0.2 * sbs) {
            const double theta = 0.8 * sbs / (sbs - sr);
            r = theta * r + (1.0 - theta) * bs;
        }
        if (!(s.dot(r) > 1e-16 * sbs)) return false;
        if (pairs() == memory_) {
            s_.pop_front();
            r_.pop_front();
        }
        s_.push_back(s);
        r_.push_back(std::move(r));
        rebuild();
        return true;
    }

private:
    [[nodiscard]] Vector apply_initial(const Vector &v) const {
        if (flat_.cols() == 0) return v;
        return v - flat_ * (flat_.transpose() * v);
    }

    void rebuild() {
        const int k = pairs();
        const Index f = flat_.cols();
        w_.resize(n_, f + 2 * k);
        k_ = Matrix::Zero(f + 2 * k, f + 2 * k);
        if (f + k == 0) return;
        w_.leftCols(f) = flat_;
        k_.topLeftCorner(f, f).setIdentity();
        if (k > 0) {
            Matrix s(n_, k);
            for (int i = 0; i < k; ++i) {
                s.col(i) = s_[i];
                w_.col(f + i) = apply_initial(s_[i]);
                w_.col(f + k + i) = r_[i];
            }
            const auto b0s = w_.middleCols(f, k);
            const auto r = w_.rightCols(k);
            const Matrix sr = s.transpose() * r;
            Matrix lower = Matrix::Zero(k, k);
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < i; ++j) lower(i, j) = sr(i, j);
            auto kb = k_.bottomRightCorner(2 * k, 2 * k);
            kb.topLeftCorner(k, k) = s.transpose() * b0s;
            kb.topRightCorner(k, k) = lower;
            kb.bottomLeftCorner(k, k) = lower.transpose();
            kb.bottomRightCorner(k, k) = -Matrix(sr.diagonal().asDiagonal());
        }
        k_lu_.compute(k_);
    }

    Index n_;
    int memory_;
    Matrix flat_;
    std::deque<Vector> s_;
    std::deque<Vector> r_;
    Matrix w_;
    Matrix k_;
    Eigen::PartialPivLU<Matrix> k_lu_;
};

enum class BoundState : signed char { Free = 0, Lower = -1, Upper = 1 };

struct QpResult {
    Vector step;
    Vector multipliers;
    std::vector<BoundState> active;
    bool ok = true;
};

// Equality-constrained QP with bounds on the step:
//   min 1/2 d^T B d + g^T d  s.t.  A d = -c,  lo <= d <= hi
// solved by a primal-dual active-set iteration over the bound constraints.
// Each subproblem eliminates the free block with the Woodbury identity
//   B_FF^{-1} = I + W_F (K - W_F^T W_F)^{-1} W_F^T.
QpResult solve_qp(const CompactBfgs &bfgs, const Vector &g, const Matrix &a, const Vector &c,
                  const Vector &lo, const Vector &hi, std::vector<BoundState> active) {
    const Index n = g.size();
    const Index m = a.rows();
    const Index k2 = bfgs.rank();
    const Matrix &w = bfgs.w();
    const Matrix wtw = k2 ? Matrix(w.transpose() * w) : Matrix();
    const double mult_tol = 1e-12 * (1.0 + g.lpNorm<Eigen::Infinity>());

    QpResult out;
    out.step = Vector::Zero(n);
    out.multipliers = Vector::Zero(m);

    std::vector<Index> free_idx;
    std::vector<Index> fixed_idx;
    constexpr int kMaxActiveSetIterations = 60;
    for (int pass = 0; pass < kMaxActiveSetIterations; ++pass) {
        free_idx.clear();
        fixed_idx.clear();
        Vector d = Vector::Zero(n);
        for (Index i = 0; i < n; ++i) {
            switch (active[i]) {
                case BoundState::Free: free_idx.push_back(i); break;
                case BoundState::Lower: d(i) = lo(i); fixed_idx.push_back(i); break;
                case BoundState::Upper: d(i) = hi(i); fixed_idx.push_back(i); break;
            }
        }
        const Index nf = static_cast<Index>(free_idx.size());

        // Coupling of the fixed block into the free gradient: (B d_fix)_F.
        Vector b_dfix = fixed_idx.empty() ? Vector::Zero(n) : bfgs.apply(d);
        Matrix rhs(nf, 1 + m);
        for (Index j = 0; j < nf; ++j) {
            const Index i = free_idx[j];
            rhs(j, 0) = g(i) + b_dfix(i);
            for (Index r = 0; r < m; ++r) rhs(j, 1 + r) = a(r, i);
        }

        Matrix x = rhs;
        if (k2 > 0 && nf > 0) {
            Matrix wf(nf, k2);
            for (Index j = 0; j < nf; ++j) wf.row(j) = w.row(free_idx[j]);
            Matrix mid = bfgs.k() - wtw;
            for (Index i : fixed_idx) mid.noalias() += w.row(i).transpose() * w.row(i);
            const Eigen::PartialPivLU<Matrix> mid_lu(mid);
            x.noalias() += wf * mid_lu.solve(wf.transpose() * rhs);
        }

        Vector mu = Vector::Zero(m);
        if (m > 0 && nf > 0) {
            Matrix af(m, nf);
            for (Index j = 0; j < nf; ++j) af.col(j) = a.col(free_idx[j]);
            const Matrix s = af * x.rightCols(m);
            Vector ad_fixed = Vector::Zero(m);
            for (Index i : fixed_idx) ad_fixed += a.col(i) * d(i);
            const Vector rhs_mu = c + ad_fixed - af * x.col(0);
            const Eigen::CompleteOrthogonalDecomposition<Matrix> cod(s);
            mu = cod.solve(rhs_mu);
        }
        for (Index j = 0; j < nf; ++j) {
            d(free_idx[j]) = -(x(j, 0) + (m > 0 ? x.row(j).tail(m).dot(mu) : 0.0));
        }

        Vector residual = bfgs.apply(d) + g;
        if (m > 0) residual.noalias() += a.transpose() * mu;

        bool changed = false;
        for (Index i = 0; i < n; ++i) {
            const double ptol = 1e-12 * (1.0 + std::max(std::abs(lo(i)), std::abs(hi(i))) *
                                                   (std::isfinite(lo(i)) && std::isfinite(hi(i))));
            switch (active[i]) {
                case BoundState::Free:
                    if (d(i) < lo(i) - ptol) {
                        active[i] = BoundState::Lower;
                        changed = true;
                    } else if (d(i) > hi(i) + ptol) {
                        active[i] = BoundState::Upper;
                        changed = true;
                    }
                    break;
                case BoundState::Lower:
                    if (residual(i) < -mult_tol) {
                        active[i] = BoundState::Free;
                        changed = true;
                    }
                    break;
                case BoundState::Upper:
                    if (residual(i) > mult_tol) {
                        active[i] = BoundState::Free;
                        changed = true;
                    }
                    break;
            }
        }
        out.step = d;
        out.multipliers = mu;
        if (!changed) {
            out.active = std::move(active);
            return out;
        }
    }
    out.step = out.step.cwiseMax(lo).cwiseMin(hi);
    out.active = std::move(active);
    out.ok = false;
    return out;
}

struct Evaluation {
    double f = 0.0;
    Vector grad;
    Vector c;
    Matrix jac;
};

class Evaluator {
public:
    explicit Evaluator(const NlpProblem &p) : p_(p) {}

    bool values(const Vector &x, double &f, Vector &c) const {
        f = p_.objective(x, nullptr);
        c.resize(p_.num_equalities);
        if (p_.num_equalities > 0) p_.equalities(x, c, nullptr);
        return std::isfinite(f) && c.allFinite();
    }

    bool full(const Vector &x, Evaluation &e) const {
        e.grad.resize(p_.dimension);
        e.f = p_.objective(x, &e.grad);
        e.c.resize(p_.num_equalities);
        e.jac.resize(p_.num_equalities, p_.dimension);
        if (p_.num_equalities > 0) p_.equalities(x, e.c, &e.jac);
        return std::isfinite(e.f) && e.grad.allFinite() && e.c.allFinite() && e.jac.allFinite();
    }

private:
    const NlpProblem &p_;
};

void validate(const NlpProblem &p) {
    if (p.dimension <= 0) throw DimensionError("NLP dimension must be positive");
    if (!p.objective) throw ConfigError("NLP objective is not set");
    if (p.num_equalities < 0) throw DimensionError("negative equality count");
    if (p.num_equalities > 0 && !p.equalities) throw ConfigError("NLP equality function is not set");
    if (p.initial_guess.size() != p.dimension) {
        throw DimensionError("initial guess has size " + std::to_string(p.initial_guess.size()) +
                             ", expected " + std::to_string(p.dimension));
    }
    for (const Vector *b : {&p.lower, &p.upper}) {
        if (b->size() != 0 && b->size() != p.dimension) throw DimensionError("bound vector size mismatch");
    }
    if (p.lower.size() && p.upper.size() && (p.lower.array() > p.upper.array()).any()) {
        throw ConfigError("NLP bounds violate lower <= upper");
    }
    if (p.flat_directions.size() != 0) {
        if (p.flat_directions.rows() != p.dimension) throw DimensionError("flat direction size mismatch");
        if (p.flat_directions.cols() >= p.dimension) throw DimensionError("too many flat directions");
        if (!p.flat_directions.allFinite()) throw ConfigError("flat directions must be finite");
        if (!(p.flat_curvature > 0.0 && p.flat_curvature <= 1.0)) throw ConfigError("flat curvature must be in (0, 1]");
    }
    if (p.curvature_hint.size() != 0) {
        if (p.curvature_hint.size() != p.dimension) throw DimensionError("curvature hint size mismatch");
        if (!(p.curvature_hint.array() > 0.0).all() || !p.curvature_hint.allFinite()) {
            throw ConfigError("curvature hint must be positive and finite");
        }
    }
}

double projected_stationarity(const Vector &lagrangian_grad, const Vector &x, const Vector &lo,
                              const Vector &hi) {
    double worst = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
        double gi = lagrangian_grad(i);
        if (x(i) <= lo(i) && gi > 0.0) gi = 0.0;
        if (x(i) >= hi(i) && gi < 0.0) gi = 0.0;
        worst = std::max(worst, std::abs(gi));
    }
    return worst;
}

}  // namespace

NlpSolution solve_nlp(const NlpProblem &problem, const NlpOptions &options) {
    const auto t0 = std::chrono::steady_clock::now();
    validate(problem);

    const Index n = problem.dimension;
    const Index m = problem.num_equalities;
    const Vector lo = problem.lower.size() ? problem.lower : Vector::Constant(n, -kInf);
    const Vector hi = problem.upper.size() ? problem.upper : Vector::Constant(n, kInf);
    const Vector scale = problem.curvature_hint.size() ? Vector(problem.curvature_hint.cwiseSqrt())
                                                       : Vector::Ones(n);
    const Vector inv_scale = scale.cwiseInverse();

    const Evaluator eval(problem);
    Vector x = problem.initial_guess.cwiseMax(lo).cwiseMin(hi);
    Evaluation cur;
    if (!eval.full(x, cur)) throw NumericalError("NaN or Inf in NLP evaluation at the initial guess");

    CompactBfgs bfgs(n, options.bfgs_memory, problem.flat_directions, problem.flat_curvature);
    std::vector<BoundState> active(static_cast<std::size_t>(n), BoundState::Free);
    Vector mu = Vector::Zero(m);
    double penalty = 0.0;
    bool converged = false;
    bool reset_once = false;
    int iter = 0;
    double stationarity = kInf;

    for (;; ++iter) {
        const Matrix a_scaled = cur.jac * inv_scale.asDiagonal();
        const Vector g_scaled = cur.grad.cwiseProduct(inv_scale);
        const Vector lo_d = (lo - x).cwiseProduct(scale);
        const Vector hi_d = (hi - x).cwiseProduct(scale);
        QpResult qp = solve_qp(bfgs, g_scaled, a_scaled, cur.c, lo_d, hi_d, active);
        active = qp.active;
        mu = qp.multipliers;
        const Vector d = qp.step.cwiseProduct(inv_scale);

        Vector lagr_grad = cur.grad;
        if (m > 0) lagr_grad.noalias() += cur.jac.transpose() * mu;
        stationarity = projected_stationarity(lagr_grad, x, lo, hi);
        const double violation = m ? cur.c.lpNorm<Eigen::Infinity>() : 0.0;
        const double stat_scale = std::max(1.0, cur.grad.lpNorm<Eigen::Infinity>());
        if (violation <= options.feasibility_tolerance &&
            stationarity <= options.optimality_tolerance * stat_scale) {
            converged = true;
            break;
        }
        if (iter >= options.max_iterations) break;

        // Exact l1 merit with Armijo backtracking and one second-order correction.
        if (m > 0) penalty = std::max(penalty, 1.05 * mu.lpNorm<Eigen::Infinity>() + 1e-12);
        const double c1 = m ? cur.c.lpNorm<1>() : 0.0;
        const double phi0 = cur.f + penalty * c1;
        const double slope = cur.grad.dot(d) - penalty * c1;

        if (!(slope < 0.0) || !qp.ok) {
            if (!reset_once && bfgs.pairs() > 0) {
                bfgs.reset();
                reset_once = true;
                continue;
            }
            if (!(slope < 0.0)) break;
        }

        const double slack = 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(phi0));
        Vector trial(n);
        double f_trial = 0.0;
        Vector c_trial(m);
        bool accepted = false;
        bool any_finite = false;
        double alpha = 1.0;
        for (int ls = 0; ls < 40 && !accepted; ++ls, alpha *= 0.5) {
            trial = (x + alpha * d).cwiseMax(lo).cwiseMin(hi);
            if (eval.values(trial, f_trial, c_trial)) {
                any_finite = true;
                const double phi = f_trial + penalty * (m ? c_trial.lpNorm<1>() : 0.0);
                if (phi <= phi0 + 1e-4 * alpha * slope + slack) {
                    accepted = true;
                    break;
                }
                if (ls == 0 && m > 0) {
                    // Second-order correction: min-norm (scaled) restoration of c(x + d).
                    const Vector y = (a_scaled * a_scaled.transpose())
                                         .completeOrthogonalDecomposition()
                                         .solve(c_trial);
                    const Vector soc = -(a_scaled.transpose() * y).cwiseProduct(inv_scale);
                    Vector trial_soc = (x + d + soc).cwiseMax(lo).cwiseMin(hi);
                    double f_soc = 0.0;
                    Vector c_soc(m);
                    if (eval.values(trial_soc, f_soc, c_soc)) {
                        const double phi_soc = f_soc + penalty * c_soc.lpNorm<1>();
                        if (phi_soc <= phi0 + 1e-4 * slope + slack) {
                            trial = std::move(trial_soc);
                            accepted = true;
                            break;
                        }
                    }
                }
            }
        }
        if (!accepted) {
            if (!any_finite) throw NumericalError("NaN or Inf at every line-search trial point");
            if (!reset_once && bfgs.pairs() > 0) {
                bfgs.reset();
                reset_once = true;
                continue;
            }
            break;
        }

        Evaluation next;
        if (!eval.full(trial, next)) throw NumericalError("NaN or Inf in NLP derivatives");
        Vector lagr_next = next.grad;
        if (m > 0) lagr_next.noalias() += next.jac.transpose() * mu;
        const Vector s_scaled = (trial - x).cwiseProduct(scale);
        const Vector r_scaled = (lagr_next - lagr_grad).cwiseProduct(inv_scale);
        if (bfgs.update(s_scaled, r_scaled)) reset_once = false;
        x = std::move(trial);
        cur = std::move(next);
    }

    NlpSolution sol;
    sol.x = x;
    sol.multipliers = mu;
    sol.objective = cur.f;
    sol.constraint_violation = m ? cur.c.lpNorm<Eigen::Infinity>() : 0.0;
    sol.stationarity = stationarity;
    sol.iterations = iter;
    sol.converged = converged;
    sol.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return sol;
}

}  // namespace ndeepc::numerics
