#pragma once

#include <string>
#include <vector>

#include "glim/common.hpp"

namespace glim::csvio {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// Reals are printed with enough digits to round-trip exactly.
std::string fmt_real(double v);
double parse_real(const std::string& s);

void write_csv(const std::string& path, const Table& t);  // temp + rename
Table read_csv(const std::string& path);

// Metric log kept in memory and saved atomically on demand.
class MetricLog {
public:
    explicit MetricLog(std::vector<std::string> header) { table_.header = std::move(header); }

    void add_row(std::vector<std::string> row) {
        if (row.size() != table_.header.size())
            throw ContractError("metric row width does not match header");
        table_.rows.push_back(std::move(row));
    }
    void save(const std::string& path) const { write_csv(path, table_); }
    void load_existing(const std::string& path);
    const Table& table() const { return table_; }
    size_t size() const { return table_.rows.size(); }

private:
    Table table_;
};

}  // namespace glim::csvio
