#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace dtrf {

// Append-only CSV writer with a fixed header. Numeric cells are formatted by
// the caller (use CsvWriter::num) so output is byte-stable across runs.
class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns);

    void row(const std::vector<std::string>& cells);
    void comment(const std::string& text); // "# ..." line
    void flush();
    const std::filesystem::path& path() const { return path_; }

    static std::string num(double v);
    static std::string num(int64_t v);

  private:
    std::filesystem::path path_;
    std::ofstream os_;
    size_t width_;
};

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> comments;

    int col(const std::string& name) const; // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& path);

} // namespace dtrf
