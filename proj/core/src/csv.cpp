#include "ndeepc/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "ndeepc/error.hpp"

namespace ndeepc::csv {
namespace {

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

double parse_double(std::string_view token, std::size_t line_no) {
    token = trim(token);
    double value = 0.0;
    const auto *end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(token.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw IoError("line " + std::to_string(line_no) + ": cannot parse '" + std::string(token) +
                      "' as a number");
    }
    return value;
}

}  // namespace

std::span<const double> Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return columns[i];
    }
    throw IoError("missing column '" + std::string(name) + "'");
}

void Table::add_column(std::string name, std::vector<double> values) {
    if (!columns.empty() && values.size() != rows()) {
        throw DimensionError("column '" + name + "' has " + std::to_string(values.size()) +
                             " rows, table has " + std::to_string(rows()));
    }
    header.push_back(std::move(name));
    columns.push_back(std::move(values));
}

void write(std::ostream &os, const Table &table) {
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        os << (i ? "," : "") << table.header[i];
    }
    os << '\n';
    os << std::setprecision(17);
    for (std::size_t r = 0; r < table.rows(); ++r) {
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            os << (c ? "," : "") << table.columns[c][r];
        }
        os << '\n';
    }
}

Table read(std::istream &is) {
    Table table;
    std::string line;
    if (!std::getline(is, line) || trim(line).empty()) throw IoError("empty CSV: no header row");
    for (auto name : split(line)) {
        table.header.emplace_back(trim(name));
        table.columns.emplace_back();
    }
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line);
        if (fields.size() != table.header.size()) {
            throw IoError("line " + std::to_string(line_no) + ": expected " +
                          std::to_string(table.header.size()) + " fields, got " +
                          std::to_string(fields.size()));
        }
        for (std::size_t c = 0; c < fields.size(); ++c) {
            table.columns[c].push_back(parse_double(fields[c], line_no));
        }
    }
    return table;
}

void write_file(const std::filesystem::path &path, const Table &table) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    write(os, table);
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

Table read_file(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    return read(is);
}

void write_matrix(std::ostream &os, const Matrix &m) {
    os << "# rows=" << m.rows() << " cols=" << m.cols() << '\n';
    os << std::setprecision(17);
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) os << (c ? "," : "") << m(r, c);
        os << '\n';
    }
}

Matrix read_matrix(std::istream &is) {
    std::string line;
    if (!std::getline(is, line)) throw IoError("empty matrix dump");
    long rows = -1;
    long cols = -1;
    if (std::sscanf(line.c_str(), "# rows=%ld cols=%ld", &rows, &cols) != 2 || rows < 0 || cols < 0) {
        throw IoError("matrix dump header malformed: '" + line + "'");
    }
    Matrix m(rows, cols);
    for (long r = 0; r < rows; ++r) {
        if (!std::getline(is, line)) throw IoError("matrix dump truncated at row " + std::to_string(r));
        const auto fields = split(line);
        if (static_cast<long>(fields.size()) != cols && cols > 0) {
            throw IoError("matrix dump row " + std::to_string(r) + " has wrong field count");
        }
        for (long c = 0; c < cols; ++c) m(r, c) = parse_double(fields[c], static_cast<std::size_t>(r + 2));
    }
    return m;
}

}  // namespace ndeepc::csv
