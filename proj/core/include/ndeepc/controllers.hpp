#pragma once

#include <memory>
#include <string>

#include "ndeepc/hankel.hpp"
#include "ndeepc/nlp.hpp"
#include "ndeepc/predictors.hpp"

namespace ndeepc::controllers {

/// Online problem solved at each sample.
///  P1: variables (y, u, g in R^T), [Phi; 1^T; Y_f] g = [phi(u); 1; y], cost + lambda |g - g^NLS(u)|^2.
///  P2: variables (u, g_hat in R^T), [Phi; 1^T] g_hat = 0, y = Y_f (g^NLS(u) + g_hat), cost + lambda |g_hat|^2.
///  P3: variables (u, g_tilde in R^pN, slack), [Phi; 1^T] Y_f^+ g_tilde = slack,
///      y = Y_f g^NLS(u) + g_tilde, cost + lambda |g_tilde|^2 + rho |slack|^2.
///  P3NoSlack: P3 with the slack fixed at zero.
enum class Formulation { P1, P2, P3, P3NoSlack };

std::string to_string(Formulation f);
Formulation formulation_from_string(const std::string &name);

struct ControlConfig {
    Matrix output_weight = Matrix::Constant(1, 1, 200.0);  // Q, p x p
    Matrix input_weight = Matrix::Constant(1, 1, 0.5);     // R, m x m
    double lambda = 1e4;
    double slack_penalty = 1e4;
    double u_min = -4.0;
    double u_max = 4.0;
    double y_min = -3.141592653589793;
    double y_max = 3.141592653589793;
    Formulation formulation = Formulation::P3;
    numerics::NlpOptions solver{};

    void validate(const hankel::Dims &dims) const;
};

/// Measured windows and references at time k:
///   u_ini = u(k-T_ini .. k-1), y_ini = y(k-T_ini+1 .. k),
///   y_ref = r(k+1 .. k+N),     u_ref = u_r(k .. k+N-1).
struct StepInput {
    Vector u_ini;
    Vector y_ini;
    Vector y_ref;
    Vector u_ref;
};

/// Optional initial point. An empty `aux` selects the default: g^NLS(u) for
/// P1 and zero for P2/P3.
struct InitialGuess {
    Vector u;
    Vector aux;
};

struct SolverDiagnostics {
    int iterations = 0;
    bool converged = false;
    double solve_seconds = 0.0;
    double constraint_violation = 0.0;
    double stationarity = 0.0;
    /// The output box was violated with y eliminated, so the problem was
    /// re-solved with y as explicit bounded variables.
    bool explicit_output_resolve = false;
};

struct ControlStepResult {
    Vector u_applied;   // first input of the optimal sequence
    Vector u_sequence;  // mN
    Vector y_sequence;  // pN
    Vector aux;         // g (P1), g_hat (P2), g_tilde (P3)
    Vector slack;       // P3 only
    double objective = 0.0;
    SolverDiagnostics diagnostics;
};

using predictors::DeepcContext;

ControlStepResult solve_p1(const DeepcContext &ctx, const ControlConfig &cfg, const StepInput &in,
                           const InitialGuess *guess = nullptr);
ControlStepResult solve_p2(const DeepcContext &ctx, const ControlConfig &cfg, const StepInput &in,
                           const InitialGuess *guess = nullptr);
/// Slack on or off follows cfg.formulation (P3 / P3NoSlack).
/// Throws HypothesisError if Y_f is not of full row rank.
ControlStepResult solve_p3(const DeepcContext &ctx, const ControlConfig &cfg, const StepInput &in,
                           const InitialGuess *guess = nullptr);

/// Dispatches on cfg.formulation.
ControlStepResult solve(const DeepcContext &ctx, const ControlConfig &cfg, const StepInput &in,
                        const InitialGuess *guess = nullptr);

/// Context with the identity hidden map (linear activations, 0/1 weights,
/// zero biases): Phi_bar = H, so the problems reduce to affine DeePC.
DeepcContext make_linear_mode(const hankel::HankelSet &h, const predictors::ContextOptions &opts = {});

/// Maps a P2 initial point (u, g_hat) to the equivalent P1 point (u, g^NLS(u) + g_hat).
InitialGuess p1_guess_from_p2(const DeepcContext &ctx, const StepInput &in, const InitialGuess &p2);

/// The full regressor col(u_ini, y_ini, u) for a candidate input sequence.
Vector regressor(const DeepcContext &ctx, const StepInput &in, const Vector &u);

/// Receding-horizon wrapper keeping warm-start state between samples. The
/// next initial guess shifts the previous input plan by one step and repeats
/// the last input; auxiliary variables restart from their defaults.
class Controller {
public:
    Controller(std::shared_ptr<const DeepcContext> ctx, ControlConfig cfg);

    ControlStepResult step(const StepInput &in);
    void reset() { warm_u_.resize(0); }

    [[nodiscard]] const ControlConfig &config() const { return cfg_; }
    [[nodiscard]] const DeepcContext &context() const { return *ctx_; }

private:
    std::shared_ptr<const DeepcContext> ctx_;
    ControlConfig cfg_;
    Vector warm_u_;
};

}  // namespace ndeepc::controllers
