#include "ndeepc/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "ndeepc/error.hpp"
#include "ndeepc/mlp.hpp"

namespace ndeepc::controllers {

std::string to_string(Formulation f) {
    switch (f) {
        case Formulation::P1: return "P1";
        case Formulation::P2: return "P2";
        case Formulation::P3: return "P3";
        case Formulation::P3NoSlack: return "P3-no-slack";
    }
    return "?";
}

Formulation formulation_from_string(const std::string &name) {
    if (name == "P1") return Formulation::P1;
    if (name == "P2") return Formulation::P2;
    if (name == "P3") return Formulation::P3;
    if (name == "P3-no-slack") return Formulation::P3NoSlack;
    throw ConfigError("unknown formulation '" + name + "' (expected P1, P2, P3 or P3-no-slack)");
}

void ControlConfig::validate(const hankel::Dims &dims) const {
    dims.validate();
    if (output_weight.rows() != dims.outputs || output_weight.cols() != dims.outputs)
        throw ConfigError("output weight Q must be p x p");
    if (input_weight.rows() != dims.inputs || input_weight.cols() != dims.inputs)
        throw ConfigError("input weight R must be m x m");
    if (!output_weight.allFinite() || !input_weight.allFinite()) throw ConfigError("weights must be finite");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive");
    if (!(slack_penalty > 0.0) || !std::isfinite(slack_penalty)) throw ConfigError("slack penalty must be positive");
    if (!(u_min <= u_max)) throw ConfigError("input box is empty (u_min > u_max)");
    if (!(y_min <= y_max)) throw ConfigError("output box is empty (y_min > y_max)");
    if (solver.max_iterations < 1) throw ConfigError("solver max_iterations must be >= 1");
}

namespace {

Matrix block_diagonal(const Matrix &w, Index repeats) {
    const Index n = w.rows();
    Matrix out = Matrix::Zero(n * repeats, n * repeats);
    for (Index i = 0; i < repeats; ++i) out.block(i * n, i * n, n, n) = w;
    return out;
}

void check_input(const DeepcContext &ctx, const ControlConfig &cfg, const StepInput &in) {
    const auto &d = ctx.dims;
    cfg.validate(d);
    if (in.u_ini.size() != d.inputs * d.t_ini || in.y_ini.size() != d.outputs * d.t_ini)
        throw DimensionError("initial windows must have sizes m*T_ini and p*T_ini");
    if (in.y_ref.size() != d.prediction_size()) throw DimensionError("output reference must have size p*N");
    if (in.u_ref.size() != d.inputs * d.horizon) throw DimensionError("input reference must have size m*N");
    if (ctx.net.input_size() != d.regressor_size() || ctx.features() != ctx.net.hidden_size())
        throw DimensionError("context network does not match its dimensions");
}

/// Quadratic tracking cost and the hidden map, shared by all formulations.
/// The feature map is cached on the last input sequence since the solver
/// evaluates objective and constraints at the same point in turn.
class Stage {
public:
    Stage(const DeepcContext &ctx, const ControlConfig &cfg, const StepInput &in)
        : ctx_(ctx), in_(in),
          q_(block_diagonal(cfg.output_weight, ctx.dims.horizon)),
          r_(block_diagonal(cfg.input_weight, ctx.dims.horizon)) {}

    [[nodiscard]] Index mn() const { return ctx_.dims.inputs * ctx_.dims.horizon; }
    [[nodiscard]] Index pn() const { return ctx_.dims.prediction_size(); }
    [[nodiscard]] Index features() const { return ctx_.features(); }

    void update(const Vector &u) {
        if (valid_ && u.size() == u_.size() && u == u_) return;
        const Vector z = regressor(ctx_, in_, u);
        phi_ = mlp::forward(ctx_.net, z).hidden;
        const Matrix full = mlp::hidden_jacobian(ctx_.net, z);
        jac_ = full.rightCols(mn());
        u_ = u;
        valid_ = true;
    }

    [[nodiscard]] const Vector &phi() const { return phi_; }
    [[nodiscard]] const Matrix &phi_jacobian() const { return jac_; }

    /// M [phi; 1], the least-squares output prediction.
    [[nodiscard]] Vector nominal_output() const {
        const Index l = features();
        return ctx_.prediction_map.leftCols(l) * phi_ + ctx_.prediction_map.col(l);
    }
    /// d(M [phi; 1]) / du.
    [[nodiscard]] Matrix nominal_output_jacobian() const { return ctx_.prediction_map.leftCols(features()) * jac_; }

    [[nodiscard]] Vector g_nls() const { return predictors::g_nls(ctx_, phi_); }
    /// d g^NLS / du.
    [[nodiscard]] Matrix g_nls_jacobian() const { return ctx_.pinv_augmented.leftCols(features()) * jac_; }

    double tracking(const Vector &y, const Vector &u, Vector *grad_y, Vector *grad_u) const {
        const Vector ey = y - in_.y_ref;
        const Vector eu = u - in_.u_ref;
        const Vector qy = q_ * ey;
        const Vector ru = r_ * eu;
        if (grad_y) *grad_y = 2.0 * qy;
        if (grad_u) *grad_u = 2.0 * ru;
        return ey.dot(qy) + eu.dot(ru);
    }

    /// Reduced curvature of the tracking cost in u along the nominal predictor.
    [[nodiscard]] Vector input_curvature() const {
        const Matrix gy = nominal_output_jacobian();
        Vector h = 2.0 * r_.diagonal() + 2.0 * (gy.transpose() * q_ * gy).diagonal();
        return h.cwiseMax(1e-6);
    }
    [[nodiscard]] const Matrix &q() const { return q_; }

private:
    const DeepcContext &ctx_;
    const StepInput &in_;
    Matrix q_;
    Matrix r_;
    bool valid_ = false;
    Vector u_;
    Vector phi_;
    Matrix jac_;
};

Vector initial_input(const ControlConfig &cfg, const StepInput &in, const InitialGuess *guess, Index mn) {
    Vector u;
    if (guess && guess->u.size() > 0) {
        if (guess->u.size() != mn) throw DimensionError("initial input guess must have size m*N");
        u = guess->u;
    } else {
        u = in.u_ref;
    }
    return u.cwiseMax(cfg.u_min).cwiseMin(cfg.u_max);
}

void fill_diagnostics(ControlStepResult &r, const numerics::NlpSolution &sol) {
    r.diagnostics.iterations += sol.iterations;
    r.diagnostics.converged = sol.converged;
    r.diagnostics.solve_seconds += sol.solve_seconds;
    r.diagnostics.constraint_violation = sol.constraint_violation;
    r.diagnostics.stationarity = sol.stationarity;
}

bool output_box_violated(const ControlConfig &cfg, const Vector &y, double tol) {
    return (y.array() < cfg.y_min - tol).any() || (y.array() > cfg.y_max + tol).any();
}

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Shared builder for P2 and P3. The prediction is
///   y = M [phi(u); 1] + A aux,
/// with the linear constraint C aux - s = 0 (s absent without slack).
/// With `explicit_y` the prediction becomes an equality on bounded y variables.
struct AffineAuxForm {
    Matrix a;  // pN x na
    Matrix c;  // nc x na
    bool slack = false;
    double lambda = 0.0;
    double rho = 0.0;
};

ControlStepResult solve_affine_aux(const DeepcContext &ctx, const ControlConfig &cfg, const StepInput &in,
                                   const InitialGuess *guess, const AffineAuxForm &form, bool explicit_y) {
    Stage stage(ctx, cfg, in);
    const Index pn = stage.pn();
    const Index mn = stage.mn();
    const Index na = form.a.cols();
    const Index nc = form.c.rows();
    const Index ns = form.slack ? nc : 0;
    const Index ny = explicit_y ? pn : 0;
    const Index oy = 0, ou = ny, oa = ny + mn, os = ny + mn + na;
    const Index n = os + ns;

    numerics::NlpProblem prob;
    prob.dimension = n;
    prob.num_equalities = nc + ny;

    prob.objective = [&](const Vector &x, Vector *grad) {
        const Vector u = x.segment(ou, mn);
        const Vector aux = x.segment(oa, na);
        stage.update(u);
        Vector y = explicit_y ? Vector(x.segment(oy, ny)) : Vector(stage.nominal_output() + form.a * aux);
        Vector gy, gu;
        double f = stage.tracking(y, u, grad ? &gy : nullptr, grad ? &gu : nullptr);
        f += form.lambda * aux.squaredNorm();
        if (ns > 0) f += form.rho * x.segment(os, ns).squaredNorm();
        if (grad) {
            grad->setZero(n);
            Vector ga = 2.0 * form.lambda * aux;
            if (explicit_y) {
                grad->segment(oy, ny) = gy;
            } else {
                gu.noalias() += stage.nominal_output_jacobian().transpose() * gy;
                ga.noalias() += form.a.transpose() * gy;
            }
            grad->segment(ou, mn) = gu;
            grad->segment(oa, na) = ga;
            if (ns > 0) grad->segment(os, ns) = 2.0 * form.rho * x.segment(os, ns);
        }
        return f;
    };

    prob.equalities = [&](const Vector &x, Vector &c, Matrix *jac) {
        const Vector aux = x.segment(oa, na);
        c.resize(nc + ny);
        c.head(nc) = form.c * aux;
        if (ns > 0) c.head(nc) -= x.segment(os, ns);
        if (explicit_y) {
            stage.update(x.segment(ou, mn));
            c.tail(ny) = stage.nominal_output() + form.a * aux - x.segment(oy, ny);
        }
        if (jac) {
            jac->setZero(nc + ny, n);
            jac->block(0, oa, nc, na) = form.c;
            if (ns > 0) jac->block(0, os, nc, ns) = -Matrix::Identity(nc, ns);
            if (explicit_y) {
                jac->block(nc, oy, ny, ny) = -Matrix::Identity(ny, ny);
                jac->block(nc, ou, ny, mn) = stage.nominal_output_jacobian();
                jac->block(nc, oa, ny, na) = form.a;
            }
        }
    };

    prob.lower = Vector::Constant(n, -kInf);
    prob.upper = Vector::Constant(n, kInf);
    prob.lower.segment(ou, mn).setConstant(cfg.u_min);
    prob.upper.segment(ou, mn).setConstant(cfg.u_max);
    if (explicit_y) {
        prob.lower.segment(oy, ny).setConstant(cfg.y_min);
        prob.upper.segment(oy, ny).setConstant(cfg.y_max);
    }

    const Vector u0 = initial_input(cfg, in, guess, mn);
    Vector aux0 = Vector::Zero(na);
    if (guess && guess->aux.size() > 0) {
        if (guess->aux.size() != na) throw DimensionError("initial auxiliary guess has the wrong size");
        aux0 = guess->aux;
    }
    stage.update(u0);
    prob.initial_guess.resize(n);
    prob.initial_guess.segment(ou, mn) = u0;
    prob.initial_guess.segment(oa, na) = aux0;
    if (ns > 0) prob.initial_guess.segment(os, ns) = form.c * aux0;
    if (explicit_y) {
        prob.initial_guess.segment(oy, ny) =
            (stage.nominal_output() + form.a * aux0).cwiseMax(cfg.y_min).cwiseMin(cfg.y_max);
    }

    prob.curvature_hint.resize(n);
    prob.curvature_hint.segment(ou, mn) = stage.input_curvature();
    const Matrix aqa = form.a.transpose() * stage.q() * form.a;
    prob.curvature_hint.segment(oa, na) =
        Vector::Constant(na, 2.0 * form.lambda) + (explicit_y ? Vector::Zero(na) : Vector(2.0 * aqa.diagonal()));
    if (ns > 0) prob.curvature_hint.segment(os, ns).setConstant(2.0 * form.rho);
    if (explicit_y) prob.curvature_hint.segment(oy, ny) = (2.0 * stage.q().diagonal()).cwiseMax(1e-6);

    const auto sol = numerics::solve_nlp(prob, cfg.solver);

    ControlStepResult r;
    r.u_sequence = sol.x.segment(ou, mn);
    r.aux = sol.x.segment(oa, na);
    r.slack = ns > 0 ? Vector(sol.x.segment(os, ns)) : Vector::Zero(nc);
    if (explicit_y) {
        r.y_sequence = sol.x.segment(oy, ny);
    } else {
        stage.update(r.u_sequence);
        r.y_sequence = stage.nominal_output() + form.a * r.aux;
    }
    r.u_applied = r.u_sequence.head(ctx.dims.inputs);
    r.objective = sol.objective;
    fill_diagnostics(r, sol);
    r.diagnostics.explicit_output_resolve = explicit_y;
    return r;
}

ControlStepResult solve_with_output_box(const DeepcContext &ctx, const ControlConfig &cfg, const StepInput &in,
                                        const InitialGuess *guess, const AffineAuxForm &form) {
    auto r = solve_affine_aux(ctx, cfg, in, guess, form, false);
    if (!output_box_violated(cfg, r.y_sequence, cfg.solver.feasibility_tolerance)) return r;
    InitialGuess next{r.u_sequence, r.aux};
    auto fixed = solve_affine_aux(ctx, cfg, in, &next, form, true);
    fixed.diagnostics.iterations += r.diagnostics.iterations;
    fixed.diagnostics.solve_seconds += r.diagnostics.solve_seconds;
    return fixed;
}

}  // namespace

Vector regressor(const DeepcContext &ctx, const StepInput &in, const Vector &u) {
    return hankel::build_online_regressor(ctx.dims, in.u_ini, in.y_ini, u);
}

ControlStepResult solve_p1(const DeepcContext &ctx, const ControlConfig &cfg, const StepInput &in,
                           const InitialGuess *guess) {
    check_input(ctx, cfg, in);
    Stage stage(ctx, cfg, in);
    const Index pn = stage.pn();
    const Index mn = stage.mn();
    const Index t = ctx.columns();
    const Index l = ctx.features();
    const Index oy = 0, ou = pn, og = pn + mn;
    const Index n = og + t;
    const double lambda = cfg.lambda;

    numerics::NlpProblem prob;
    prob.dimension = n;
    prob.num_equalities = l + 1 + pn;

    // On the feasible set [Phi; 1^T] g = [phi(u); 1], so g^NLS(u) = A^+ A g and
    // the regularizer equals lambda |(I - A^+ A) g|^2. That form has no
    // u-curvature, and its g-Hessian 2 lambda (I - A^+ A) is flat on row(A),
    // which is passed to the solver below.
    prob.objective = [&](const Vector &x, Vector *grad) {
        const Vector u = x.segment(ou, mn);
        stage.update(u);
        const Vector g = x.segment(og, t);
        const Vector e = g - ctx.pinv_augmented * (ctx.augmented * g);
        Vector gy, gu;
        const double f = stage.tracking(x.segment(oy, pn), u, grad ? &gy : nullptr, grad ? &gu : nullptr) +
                         lambda * e.squaredNorm();
        if (grad) {
            grad->resize(n);
            grad->segment(oy, pn) = gy;
            grad->segment(ou, mn) = gu;
            // (I - A^+ A) is a symmetric projector
            grad->segment(og, t) = 2.0 * lambda * e;
        }
        return f;
    };

    prob.equalities = [&](const Vector &x, Vector &c, Matrix *jac) {
        stage.update(x.segment(ou, mn));
        const Vector g = x.segment(og, t);
        c.resize(l + 1 + pn);
        c.head(l + 1) = ctx.augmented * g;
        c.head(l) -= stage.phi();
        c(l) -= 1.0;
        c.tail(pn) = ctx.y_future * g - x.segment(oy, pn);
        if (jac) {
            jac->setZero(l + 1 + pn, n);
            jac->block(0, ou, l, mn) = -stage.phi_jacobian();
            jac->block(0, og, l + 1, t) = ctx.augmented;
            jac->block(l + 1, oy, pn, pn) = -Matrix::Identity(pn, pn);
            jac->block(l + 1, og, pn, t) = ctx.y_future;
        }
    };

    prob.lower = Vector::Constant(n, -kInf);
    prob.upper = Vector::Constant(n, kInf);
    prob.lower.segment(oy, pn).setConstant(cfg.y_min);
    prob.upper.segment(oy, pn).setConstant(cfg.y_max);
    prob.lower.segment(ou, mn).setConstant(cfg.u_min);
    prob.upper.segment(ou, mn).setConstant(cfg.u_max);

    const Vector u0 = initial_input(cfg, in, guess, mn);
    stage.update(u0);
    Vector g0;
    if (guess && guess->aux.size() > 0) {
        if (guess->aux.size() != t) throw DimensionError("initial g guess must have size T");
        g0 = guess->aux;
    } else {
        g0 = stage.g_nls();
    }
    prob.initial_guess.resize(n);
    prob.initial_guess.segment(oy, pn) = (ctx.y_future * g0).cwiseMax(cfg.y_min).cwiseMin(cfg.y_max);
    prob.initial_guess.segment(ou, mn) = u0;
    prob.initial_guess.segment(og, t) = g0;

    prob.curvature_hint.resize(n);
    prob.curvature_hint.segment(oy, pn) = (2.0 * stage.q().diagonal()).cwiseMax(1e-6);
    prob.curvature_hint.segment(ou, mn) = stage.input_curvature();
    prob.curvature_hint.segment(og, t).setConstant(2.0 * lambda);
    if (ctx.full_row_rank) {
        // the g-scaling is uniform, so an orthonormal basis of row(A) stays orthonormal
        const Eigen::HouseholderQR<Matrix> qr(ctx.augmented.transpose());
        prob.flat_directions = Matrix::Zero(n, l + 1);
        prob.flat_directions.bottomRows(t) = qr.householderQ() * Matrix::Identity(t, l + 1);
        // O(10) true curvature in unscaled units, relative to the 2 lambda hint
        prob.flat_curvature = std::clamp(10.0 / (2.0 * lambda), 1e-8, 1e-3);
    }

    const auto sol = numerics::solve_nlp(prob, cfg.solver);
    ControlStepResult r;
    r.y_sequence = sol.x.segment(oy, pn);
    r.u_sequence = sol.x.segment(ou, mn);
    r.aux = sol.x.segment(og, t);
    r.u_applied = r.u_sequence.head(ctx.dims.inputs);
    r.objective = sol.objective;
    fill_diagnostics(r, sol);
    return r;
}

ControlStepResult solve_p2(const DeepcContext &ctx, const ControlConfig &cfg, const StepInput &in,
                           const InitialGuess *guess) {
    check_input(ctx, cfg, in);
    AffineAuxForm form;
    form.a = ctx.y_future;
    form.c = ctx.augmented;
    form.lambda = cfg.lambda;
    return solve_with_output_box(ctx, cfg, in, guess, form);
}

ControlStepResult solve_p3(const DeepcContext &ctx, const ControlConfig &cfg, const StepInput &in,
                           const InitialGuess *guess) {
    check_input(ctx, cfg, in);
    if (!ctx.y_future_full_row_rank) {
        throw HypothesisError("future output block Y_f is not of full row rank (min singular value " +
                              std::to_string(ctx.y_future_min_singular_value) + ")");
    }
    AffineAuxForm form;
    form.a = Matrix::Identity(ctx.dims.prediction_size(), ctx.dims.prediction_size());
    form.c = ctx.slack_map;
    form.slack = cfg.formulation != Formulation::P3NoSlack;
    form.lambda = cfg.lambda;
    form.rho = cfg.slack_penalty;
    return solve_with_output_box(ctx, cfg, in, guess, form);
}

ControlStepResult solve(const DeepcContext &ctx, const ControlConfig &cfg, const StepInput &in,
                        const InitialGuess *guess) {
    switch (cfg.formulation) {
        case Formulation::P1: return solve_p1(ctx, cfg, in, guess);
        case Formulation::P2: return solve_p2(ctx, cfg, in, guess);
        case Formulation::P3:
        case Formulation::P3NoSlack: return solve_p3(ctx, cfg, in, guess);
    }
    throw ConfigError("unknown formulation");
}

DeepcContext make_linear_mode(const hankel::HankelSet &h, const predictors::ContextOptions &opts) {
    const auto net = mlp::MlpNetwork::identity(h.dims.regressor_size(), h.dims.prediction_size());
    return predictors::prepare_context(net, h, opts);
}

InitialGuess p1_guess_from_p2(const DeepcContext &ctx, const StepInput &in, const InitialGuess &p2) {
    const Vector z = regressor(ctx, in, p2.u);
    Vector g = predictors::g_nls(ctx, mlp::forward(ctx.net, z).hidden);
    if (p2.aux.size() > 0) {
        if (p2.aux.size() != g.size()) throw DimensionError("g_hat guess must have size T");
        g += p2.aux;
    }
    return {p2.u, std::move(g)};
}

Controller::Controller(std::shared_ptr<const DeepcContext> ctx, ControlConfig cfg)
    : ctx_(std::move(ctx)), cfg_(std::move(cfg)) {
    if (!ctx_) throw ConfigError("controller needs a context");
    cfg_.validate(ctx_->dims);
}

ControlStepResult Controller::step(const StepInput &in) {
    InitialGuess guess;
    guess.u = warm_u_;
    auto r = solve(*ctx_, cfg_, in, warm_u_.size() > 0 ? &guess : nullptr);
    const Index m = ctx_->dims.inputs;
    const Index mn = r.u_sequence.size();
    warm_u_.resize(mn);
    warm_u_.head(mn - m) = r.u_sequence.tail(mn - m);
    warm_u_.tail(m) = r.u_sequence.tail(m);
    return r;
}

}  // namespace ndeepc::controllers
