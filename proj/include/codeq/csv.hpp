#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "codeq/common.hpp"

namespace codeq {

// %.9g formatting: compact, locale-independent under the default "C" locale,
// and byte-stable across runs.
inline std::string fmt_g(double v, int digits = 9) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
    return buf;
}

// Writes rows under a fixed header; the schema is pinned at open time.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header)
            : os_(path), ncols_(header.size()) {
        CODEQ_REQUIRE(os_.is_open(), "CsvWriter: cannot open '", path, "'");
        write_raw(header);
    }

    void row(const std::vector<std::string>& cells) {
        CODEQ_REQUIRE(cells.size() == ncols_, "CsvWriter: expected ", ncols_,
                      " columns, got ", cells.size());
        write_raw(cells);
    }

    void flush() { os_.flush(); }

private:
    void write_raw(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            CODEQ_REQUIRE(cells[i].find_first_of(",\n\"") == std::string::npos,
                          "CsvWriter: cell contains a delimiter: '", cells[i], "'");
            os_ << cells[i] << (i + 1 < cells.size() ? "," : "");
        }
        os_ << "\n";
        CODEQ_REQUIRE(os_.good(), "CsvWriter: write failed");
    }

    std::ofstream os_;
    std::size_t ncols_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return i;
            }
        }
        fail("CsvTable: no column '", name, "'");
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream is(path);
    CODEQ_REQUIRE(is.is_open(), "read_csv: cannot open '", path, "'");
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (line.empty()) {
            continue;
        }
        if (!line.empty() && line.back() == ',') {
            cells.push_back("");
        }
        if (first) {
            table.header = cells;
            first = false;
        } else {
            table.rows.push_back(cells);
        }
    }
    return table;
}

// Schema check: the header must match exactly and every row must have the
// declared column count.
inline void csv_check_schema(const std::string& path,
                             const std::vector<std::string>& expected_header) {
    CsvTable t = read_csv(path);
    CODEQ_REQUIRE(t.header == expected_header, "csv_check_schema: '", path,
                  "' header does not match the documented schema");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        CODEQ_REQUIRE(t.rows[r].size() == expected_header.size(),
                      "csv_check_schema: '", path, "' row ", r, " has ",
                      t.rows[r].size(), " cells, expected ", expected_header.size());
    }
}

} // namespace codeq
