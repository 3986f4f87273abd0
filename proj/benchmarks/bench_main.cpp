#include <benchmark/benchmark.h>

#include <cmath>
#include <memory>

#include "ndeepc/controllers.hpp"
#include "ndeepc/mlp.hpp"
#include "ndeepc/numerics.hpp"
#include "ndeepc/predictors.hpp"
#include "ndeepc_app/pipeline.hpp"

using namespace ndeepc;

namespace {

// Default pendulum experiment with a briefly trained network; built once.
struct Fixture {
    app::ExperimentConfig cfg;
    hankel::HankelSet hankel;
    mlp::MlpNetwork net;
    std::shared_ptr<const predictors::DeepcContext> ctx;
    controllers::StepInput input;

    Fixture() {
        cfg.training.epochs = 300;
        const auto e = app::generate_data(cfg);
        hankel = app::build_dataset(cfg, hankel::TrajectoryData::siso(e.u, e.y));
        net = app::train_model(cfg, hankel).net;
        ctx = std::make_shared<const predictors::DeepcContext>(predictors::prepare_context(net, hankel));
        const Index t_ini = cfg.t_ini, n = cfg.horizon;
        input.u_ini = Vector::LinSpaced(t_ini, -0.5, 0.5);
        input.y_ini = Vector::LinSpaced(t_ini, 0.0, 0.05);
        input.y_ref = Vector::Constant(n, 0.3);
        input.u_ref = Vector::Constant(n, plant::equilibrium_torque(cfg.plant, 0.3));
    }
};

const Fixture &fixture() {
    static const Fixture f;
    return f;
}

void BM_PseudoInverse(benchmark::State &state) {
    const auto &f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(numerics::pseudo_inverse(f.ctx->augmented));
}
BENCHMARK(BM_PseudoInverse)->Unit(benchmark::kMillisecond);

void BM_MlpForwardColumns(benchmark::State &state) {
    const auto &f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(mlp::forward_columns(f.net, f.hankel.regressor));
}
BENCHMARK(BM_MlpForwardColumns)->Unit(benchmark::kMillisecond);

void BM_HiddenJacobian(benchmark::State &state) {
    const auto &f = fixture();
    const Vector x = f.hankel.regressor.col(0);
    for (auto _ : state) benchmark::DoNotOptimize(mlp::hidden_jacobian(f.net, x));
}
BENCHMARK(BM_HiddenJacobian);

// One control step per formulation; range(0) is log10(lambda).
void BM_Solve(benchmark::State &state, controllers::Formulation form) {
    const auto &f = fixture();
    auto cfg = f.cfg.control;
    cfg.formulation = form;
    cfg.lambda = std::pow(10.0, static_cast<double>(state.range(0)));
    int iterations = 0;
    for (auto _ : state) {
        const auto r = controllers::solve(*f.ctx, cfg, f.input);
        iterations = r.diagnostics.iterations;
        benchmark::DoNotOptimize(r.u_applied);
    }
    state.counters["sqp_iterations"] = iterations;
}
BENCHMARK_CAPTURE(BM_Solve, P1, controllers::Formulation::P1)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Solve, P2, controllers::Formulation::P2)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Solve, P3, controllers::Formulation::P3)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
