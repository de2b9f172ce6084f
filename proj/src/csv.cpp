#include "urbanfuse/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace urbanfuse::csv {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        const auto field = line.substr(start, pos == std::string_view::npos ? line.npos : pos - start);
        out.emplace_back(trim(field));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw DataError(source.string() + ":1: missing column '" + std::string(name) + "'");
}

std::string Table::locus(std::size_t row) const {
    return source.string() + ":" + std::to_string(row + 2);
}

Table read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string() + ": cannot open file");
    Table table;
    table.source = path;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!have_header) {
            // Strip a UTF-8 byte order mark.
            if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
            table.header = split(line);
            have_header = true;
            continue;
        }
        if (trim(line).empty()) continue;
        auto fields = split(line);
        if (fields.size() != table.header.size()) {
            throw DataError(table.locus(table.rows.size()) + ": expected " +
                            std::to_string(table.header.size()) + " fields, found " +
                            std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    if (!have_header) throw DataError(path.string() + ": missing header row");
    return table;
}

double parse_double(std::string_view text, const Table& table, std::size_t row, std::size_t col) {
    double value = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    // from_chars accepts "nan"/"inf"; both are rejected as non-finite below.
    if (ec != std::errc{} || ptr != end) {
        throw DataError(table.locus(row) + ": column '" + table.header[col] +
                        "': cannot parse number '" + std::string(text) + "'");
    }
    if (!std::isfinite(value)) {
        throw DataError(table.locus(row) + ": column '" + table.header[col] +
                        "': non-finite value '" + std::string(text) + "'");
    }
    return value;
}

long long parse_int(std::string_view text, const Table& table, std::size_t row, std::size_t col) {
    long long value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw DataError(table.locus(row) + ": column '" + table.header[col] +
                        "': cannot parse integer '" + std::string(text) + "'");
    }
    return value;
}

std::string format(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

void write_matrix(const std::filesystem::path& path, const std::vector<std::string>& header,
                  const std::vector<NodeId>& ids, const Matrix& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot write file");
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        out << ids[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < values.cols(); ++c) out << ',' << format(values(r, c));
        out << '\n';
    }
}

IdMatrix read_matrix(const std::filesystem::path& path) {
    const Table table = read(path);
    IdMatrix result;
    result.header = table.header;
    const auto cols = table.header.size() - 1;
    result.values.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        result.ids.push_back(parse_int(table.rows[r][0], table, r, 0));
        for (std::size_t c = 0; c < cols; ++c) {
            result.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                parse_double(table.rows[r][c + 1], table, r, c + 1);
        }
    }
    return result;
}

}  // namespace urbanfuse::csv
