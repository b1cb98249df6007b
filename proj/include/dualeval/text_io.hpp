#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace dualeval {

/// Whole-file read; gzip input (1f 8b magic) is inflated.
std::string read_maybe_gzip(const std::filesystem::path& path);

/// Header row plus data rows. CSV quoting ("a,b", "") is honoured for ','.
struct DelimitedTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    bool has_column(std::string_view name) const;
    /// Throws DataError if absent.
    std::size_t column(std::string_view name) const;
};

DelimitedTable read_delimited(std::istream& in, char delimiter);
DelimitedTable read_delimited_file(const std::filesystem::path& path, char delimiter);

/// Delimiter guessed from the extension: .tsv/.tab -> tab, everything else comma.
char delimiter_for(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_real(double value);

}  // namespace dualeval
