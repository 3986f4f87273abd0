#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ndeepc/numerics.hpp"

namespace ndeepc::csv {

/// Column-oriented numeric table with a header row.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    [[nodiscard]] std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

    /// Throws IoError naming the column if it is absent.
    [[nodiscard]] std::span<const double> column(std::string_view name) const;

    void add_column(std::string name, std::vector<double> values);
};

/// Values are written with 17 significant digits so that a read-back is exact.
void write(std::ostream &os, const Table &table);
Table read(std::istream &is);

void write_file(const std::filesystem::path &path, const Table &table);
Table read_file(const std::filesystem::path &path);

/// Row-major matrix dump: a "# rows=R cols=C" line followed by R lines.
void write_matrix(std::ostream &os, const Matrix &m);
Matrix read_matrix(std::istream &is);

}  // namespace ndeepc::csv
