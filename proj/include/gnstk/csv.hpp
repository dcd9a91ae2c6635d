#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace gnstk {

/// Shortest round-trip decimal form, '.' separator, locale-free ("nan"/"inf"
/// for non-finite values).
std::string format_double(double v);
std::string format_int(std::int64_t v);

/// Minimal RFC-4180 writer: fields containing commas, quotes or newlines are
/// quoted; rows end with '\n'.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}
    void row(std::span<const std::string> cells);
    void row(std::initializer_list<std::string> cells) {
        row(std::span<const std::string>(cells.begin(), cells.size()));
    }

private:
    std::ostream& out_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(const std::string& name) const;
};

CsvTable read_csv_file(const std::filesystem::path& path);

}  // namespace gnstk
