#include "densetrf/csv.h"

#include <cstdio>
#include <sstream>

#include "densetrf/errors.h"

namespace dtrf {

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
    : path_(path), width_(columns.size()) {
    std::filesystem::create_directories(path.parent_path());
    os_.open(path, std::ios::trunc);
    if (!os_) throw Error("cannot open csv for writing: " + path.string());
    for (size_t i = 0; i < columns.size(); ++i) os_ << (i ? "," : "") << columns[i];
    os_ << "\n";
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw Error("csv row width mismatch in " + path_.string());
    for (size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << "\n";
}

void CsvWriter::comment(const std::string& text) { os_ << "# " << text << "\n"; }

void CsvWriter::flush() { os_.flush(); }

std::string CsvWriter::num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::string CsvWriter::num(int64_t v) { return std::to_string(v); }

int CsvTable::col(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return int(i);
    }
    return -1;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open csv: " + path.string());
    CsvTable t;
    std::string line;
    bool header = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            t.comments.push_back(line);
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.push_back("");
        if (header) {
            t.columns = cells;
            header = false;
        } else {
            t.rows.push_back(cells);
        }
    }
    return t;
}

} // namespace dtrf
