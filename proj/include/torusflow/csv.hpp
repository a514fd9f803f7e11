// Minimal CSV writer with RFC 4180 quoting.
#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace torusflow {

class CsvWriter {
  public:
    explicit CsvWriter(const std::filesystem::path& file) : out_(file) {
        if (!out_) throw std::runtime_error("cannot open " + file.string());
        out_ << std::setprecision(std::numeric_limits<double>::max_digits10);
    }

    CsvWriter& field(const std::string& s) {
        sep();
        if (s.find_first_of(",\"\r\n") != std::string::npos) {
            out_ << '"';
            for (char c : s) {
                if (c == '"') out_ << '"';
                out_ << c;
            }
            out_ << '"';
        } else {
            out_ << s;
        }
        return *this;
    }

    CsvWriter& field(double v) {
        sep();
        out_ << v;
        return *this;
    }

    CsvWriter& field(int v) {
        sep();
        out_ << v;
        return *this;
    }

    void endrow() {
        out_ << "\r\n";
        first_ = true;
    }

    void row(const std::vector<std::string>& cells) {
        for (const auto& c : cells) field(c);
        endrow();
    }

  private:
    void sep() {
        if (!first_) out_ << ',';
        first_ = false;
    }

    std::ofstream out_;
    bool first_ = true;
};

}  // namespace torusflow
