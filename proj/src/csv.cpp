#include "glim/csv.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace glim::csvio {

std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_real(const std::string& s) {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw IoError("not a number: '" + s + "'");
    return v;
}

void write_csv(const std::string& path, const Table& t) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp);
        if (!f) throw IoError("cannot open " + tmp + " for writing");
        for (size_t i = 0; i < t.header.size(); ++i)
            f << (i ? "," : "") << t.header[i];
        f << "\n";
        for (const auto& row : t.rows) {
            for (size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
            f << "\n";
        }
        if (!f) throw IoError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Table read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open csv: " + path);
    Table t;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && f.eof()) break;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

void MetricLog::load_existing(const std::string& path) {
    Table t = read_csv(path);
    if (t.header != table_.header)
        throw IoError("existing metric file has a different header: " + path);
    table_.rows = std::move(t.rows);
}

}  // namespace glim::csvio
