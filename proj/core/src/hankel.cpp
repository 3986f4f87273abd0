#include "ndeepc/hankel.hpp"

#include <fstream>
#include <string>

#include "ndeepc/error.hpp"

namespace ndeepc::hankel {
namespace {

// Stacks windows of `len` samples of `signal` starting at `first + j` for
// j = 0 .. cols-1, channel-major within each time step.
Matrix block_hankel(const Matrix &signal, Index first, Index len, Index cols) {
    const Index ch = signal.rows();
    Matrix out(ch * len, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index t = 0; t < len; ++t) out.block(t * ch, j, ch, 1) = signal.col(first + j + t);
    }
    return out;
}

std::vector<std::string> channel_names(const csv::Table &t, char prefix) {
    std::vector<std::string> names;
    const std::string single(1, prefix);
    for (const auto &h : t.header) {
        if (h == single) return {single};
    }
    for (int i = 0;; ++i) {
        const std::string name = single + std::to_string(i);
        bool found = false;
        for (const auto &h : t.header) found = found || h == name;
        if (!found) break;
        names.push_back(name);
    }
    if (names.empty()) throw IoError("trajectory table has no '" + single + "' column");
    return names;
}

}  // namespace

void TrajectoryData::validate() const {
    if (u.cols() != y.cols()) {
        throw DimensionError("trajectory has " + std::to_string(u.cols()) + " input samples but " +
                             std::to_string(y.cols()) + " output samples");
    }
    if (u.rows() < 1 || y.rows() < 1) throw DimensionError("trajectory needs at least one input and output");
    numerics::require_finite(u, "trajectory input");
    numerics::require_finite(y, "trajectory output");
}

TrajectoryData TrajectoryData::siso(std::span<const double> u, std::span<const double> y) {
    TrajectoryData d;
    d.u = Eigen::Map<const Eigen::RowVectorXd>(u.data(), static_cast<Index>(u.size()));
    d.y = Eigen::Map<const Eigen::RowVectorXd>(y.data(), static_cast<Index>(y.size()));
    d.validate();
    return d;
}

TrajectoryData trajectory_from_table(const csv::Table &table) {
    const auto un = channel_names(table, 'u');
    const auto yn = channel_names(table, 'y');
    const auto n = static_cast<Index>(table.rows());
    TrajectoryData d;
    d.u.resize(static_cast<Index>(un.size()), n);
    d.y.resize(static_cast<Index>(yn.size()), n);
    for (std::size_t c = 0; c < un.size(); ++c) {
        const auto col = table.column(un[c]);
        for (Index k = 0; k < n; ++k) d.u(static_cast<Index>(c), k) = col[static_cast<std::size_t>(k)];
    }
    for (std::size_t c = 0; c < yn.size(); ++c) {
        const auto col = table.column(yn[c]);
        for (Index k = 0; k < n; ++k) d.y(static_cast<Index>(c), k) = col[static_cast<std::size_t>(k)];
    }
    d.validate();
    return d;
}

TrajectoryData prepend_rest_history(const TrajectoryData &data, Index count, const Vector &u_rest,
                                    const Vector &y_rest) {
    data.validate();
    if (count < 0) throw DimensionError("negative rest-history length");
    if (u_rest.size() != data.inputs() || y_rest.size() != data.outputs()) {
        throw DimensionError("rest condition does not match trajectory channels");
    }
    TrajectoryData out;
    out.u.resize(data.inputs(), data.samples() + count);
    out.y.resize(data.outputs(), data.samples() + count);
    out.u.leftCols(count) = u_rest.replicate(1, count);
    out.y.leftCols(count) = y_rest.replicate(1, count);
    out.u.rightCols(data.samples()) = data.u;
    out.y.rightCols(data.samples()) = data.y;
    return out;
}

void Dims::validate() const {
    if (inputs < 1 || outputs < 1) throw DimensionError("need at least one input and one output channel");
    if (t_ini < 1) throw DimensionError("T_ini must be >= 1, got " + std::to_string(t_ini));
    if (horizon < 1) throw DimensionError("prediction horizon N must be >= 1, got " + std::to_string(horizon));
}

HankelSet build_hankel(const TrajectoryData &data, Index t_ini, Index horizon) {
    data.validate();
    HankelSet h;
    h.dims = Dims{data.inputs(), data.outputs(), t_ini, horizon};
    h.dims.validate();
    const Index needed = t_ini + horizon + 1;
    if (data.samples() < needed) {
        throw DimensionError("trajectory has " + std::to_string(data.samples()) + " samples, need at least " +
                             std::to_string(needed) + " (short by " +
                             std::to_string(needed - data.samples()) + ")");
    }
    const Index cols = hankel_columns(data.samples(), t_ini, horizon);
    h.u_past = block_hankel(data.u, 0, t_ini, cols);
    h.y_past = block_hankel(data.y, 1, t_ini, cols);
    h.u_future = block_hankel(data.u, t_ini, horizon, cols);
    h.y_future = block_hankel(data.y, t_ini + 1, horizon, cols);
    h.regressor.resize(h.dims.regressor_size(), cols);
    h.regressor << h.u_past, h.y_past, h.u_future;
    return h;
}

Vector build_online_regressor(const Dims &dims, const Vector &u_ini, const Vector &y_ini,
                              const Vector &u_future) {
    dims.validate();
    if (u_ini.size() != dims.inputs * dims.t_ini || y_ini.size() != dims.outputs * dims.t_ini ||
        u_future.size() != dims.inputs * dims.horizon) {
        throw DimensionError("regressor windows have sizes (" + std::to_string(u_ini.size()) + ", " +
                             std::to_string(y_ini.size()) + ", " + std::to_string(u_future.size()) +
                             "), expected (" + std::to_string(dims.inputs * dims.t_ini) + ", " +
                             std::to_string(dims.outputs * dims.t_ini) + ", " +
                             std::to_string(dims.inputs * dims.horizon) + ")");
    }
    Vector out(dims.regressor_size());
    out << u_ini, y_ini, u_future;
    return out;
}

void write_hankel(const std::filesystem::path &dir, const HankelSet &h) {
    const std::pair<const char *, const Matrix *> blocks[] = {
        {"U_p.csv", &h.u_past}, {"Y_p.csv", &h.y_past}, {"U_f.csv", &h.u_future},
        {"Y_f.csv", &h.y_future}, {"H.csv", &h.regressor}};
    for (const auto &[name, m] : blocks) {
        std::ofstream os(dir / name);
        if (!os) throw IoError("cannot write " + (dir / name).string());
        csv::write_matrix(os, *m);
    }
}

}  // namespace ndeepc::hankel
