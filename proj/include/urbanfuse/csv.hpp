#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "urbanfuse/common.hpp"

namespace urbanfuse::csv {

/// A parsed comma-separated file with a mandatory header row. Quoting is not
/// supported; fields are trimmed of surrounding whitespace.
struct Table {
    std::filesystem::path source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index of `name`; throws DataError if absent.
    std::size_t column(std::string_view name) const;
    /// "<file>:<line>" for data row `row` (0-based, header is line 1).
    std::string locus(std::size_t row) const;
};

Table read(const std::filesystem::path& path);

double parse_double(std::string_view text, const Table& table, std::size_t row, std::size_t col);
long long parse_int(std::string_view text, const Table& table, std::size_t row, std::size_t col);

/// Shortest representation that round-trips bit-exactly.
std::string format(double value);

/// Writes `header` followed by one row per matrix row, prefixed with `ids`.
void write_matrix(const std::filesystem::path& path, const std::vector<std::string>& header,
                  const std::vector<NodeId>& ids, const Matrix& values);

/// Reads a `node_id,<values...>` file back; ids are returned in file order.
struct IdMatrix {
    std::vector<std::string> header;
    std::vector<NodeId> ids;
    Matrix values;
};
IdMatrix read_matrix(const std::filesystem::path& path);

}  // namespace urbanfuse::csv
