#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdrscope {

// Minimal CSV support for the fixed schemas used by this project: comma
// separated, no quoting, one header line. Rejects files it cannot open.
class CsvReader {
public:
    explicit CsvReader(const std::string& path) : in_(path), path_(path) {
        if (!in_) throw std::runtime_error("cannot open file: " + path);
    }

    // Returns false at EOF. Fields are split on ',' with trailing '\r' removed.
    bool next_row(std::vector<std::string>& fields) {
        std::string line;
        if (!std::getline(in_, line)) return false;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        fields.clear();
        size_t start = 0;
        for (;;) {
            size_t pos = line.find(',', start);
            if (pos == std::string::npos) {
                fields.push_back(line.substr(start));
                break;
            }
            fields.push_back(line.substr(start, pos - start));
            start = pos + 1;
        }
        return true;
    }

    const std::string& path() const { return path_; }

private:
    std::ifstream in_;
    std::string path_;
};

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open file for writing: " + path);
    }
    void row(const std::vector<std::string>& fields) {
        for (size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }
    void raw_line(const std::string& line) { out_ << line << '\n'; }

private:
    std::ofstream out_;
};

}  // namespace cdrscope
