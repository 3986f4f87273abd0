#pragma once

#include <filesystem>
#include <span>

#include "ndeepc/csv.hpp"
#include "ndeepc/numerics.hpp"

namespace ndeepc::hankel {

/// Recorded input/output samples, one column per time step. y(:, k) is the
/// output measured at time k, before u(:, k) is applied.
struct TrajectoryData {
    Matrix u;  // m x samples
    Matrix y;  // p x samples

    [[nodiscard]] Index inputs() const { return u.rows(); }
    [[nodiscard]] Index outputs() const { return y.rows(); }
    [[nodiscard]] Index samples() const { return u.cols(); }

    void validate() const;

    static TrajectoryData siso(std::span<const double> u, std::span<const double> y);
};

/// Reads columns `u`,`y` (single channel) or `u0..`,`y0..` (multi-channel).
TrajectoryData trajectory_from_table(const csv::Table &table);

/// Prepends `count` samples of a known rest condition (u_rest applied, y_rest
/// measured), e.g. the time before an experiment started from equilibrium.
TrajectoryData prepend_rest_history(const TrajectoryData &data, Index count, const Vector &u_rest,
                                    const Vector &y_rest);

struct Dims {
    Index inputs = 1;
    Index outputs = 1;
    Index t_ini = 1;
    Index horizon = 1;

    /// (m + p) T_ini + m N
    [[nodiscard]] Index regressor_size() const { return (inputs + outputs) * t_ini + inputs * horizon; }
    [[nodiscard]] Index prediction_size() const { return outputs * horizon; }
    void validate() const;
};

/// Past/future block Hankel matrices of one trajectory. Column j holds the
/// windows starting at sample j:
///   U_p: u(j .. j+T_ini-1),    Y_p: y(j+1 .. j+T_ini),
///   U_f: u(j+T_ini .. +N-1),   Y_f: y(j+T_ini+1 .. j+T_ini+N).
struct HankelSet {
    Dims dims;
    Matrix u_past;
    Matrix y_past;
    Matrix u_future;
    Matrix y_future;
    Matrix regressor;  // H = [U_p; Y_p; U_f]

    [[nodiscard]] Index columns() const { return regressor.cols(); }
    /// T >= (m + p) T_ini + m N
    [[nodiscard]] bool meets_column_condition() const { return columns() >= dims.regressor_size(); }
};

/// Number of Hankel columns a trajectory of `samples` samples yields.
inline Index hankel_columns(Index samples, Index t_ini, Index horizon) { return samples - t_ini - horizon; }

HankelSet build_hankel(const TrajectoryData &data, Index t_ini, Index horizon);

/// col(u_ini, y_ini, u_future), laid out exactly like a column of H.
Vector build_online_regressor(const Dims &dims, const Vector &u_ini, const Vector &y_ini,
                              const Vector &u_future);

/// Writes U_p.csv, Y_p.csv, U_f.csv, Y_f.csv and H.csv (row-major dumps) into dir.
void write_hankel(const std::filesystem::path &dir, const HankelSet &h);

}  // namespace ndeepc::hankel
