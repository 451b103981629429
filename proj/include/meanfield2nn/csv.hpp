#pragma once

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace mf {

/// Comma-separated output with a header row, '.' decimals and LF endings.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header)
        : out_(path, std::ios::binary), columns_(header.size()) {
        if (!out_) throw std::runtime_error("cannot open " + path);
        for (std::size_t k = 0; k < header.size(); ++k) out_ << (k ? "," : "") << header[k];
        out_ << '\n';
    }

    /// Cells are either numbers or preformatted strings.
    struct Cell {
        Cell(double v) : text(format(v)) {}
        Cell(int v) : text(std::to_string(v)) {}
        Cell(long v) : text(std::to_string(v)) {}
        Cell(long long v) : text(std::to_string(v)) {}
        Cell(unsigned long v) : text(std::to_string(v)) {}
        Cell(unsigned long long v) : text(std::to_string(v)) {}
        Cell(bool v) : text(v ? "1" : "0") {}
        Cell(const char* s) : text(s) {}
        Cell(std::string s) : text(std::move(s)) {}
        std::string text;
    };

    void row(std::initializer_list<Cell> cells) { write(cells.begin(), cells.end()); }
    void row(const std::vector<Cell>& cells) { write(cells.begin(), cells.end()); }

    static std::string format(double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.12g", v);
        return buf;
    }

private:
    template <class It>
    void write(It begin, It end) {
        if (static_cast<std::size_t>(end - begin) != columns_) throw std::logic_error("CSV row width mismatch");
        for (It it = begin; it != end; ++it) out_ << (it == begin ? "" : ",") << it->text;
        out_ << '\n';
    }

    std::ofstream out_;
    std::size_t columns_;
};

} // namespace mf
