#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "pcm/common.hpp"

namespace pcm {

/// Shortest round-trippable decimal form; CSV output is bit-faithful.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::string& comment,
              const std::string& header) {
        f_ = std::fopen(path.string().c_str(), "w");
        require(f_ != nullptr, "cannot open output file: " + path.string());
        if (!comment.empty()) std::fprintf(f_, "# %s\n", comment.c_str());
        std::fprintf(f_, "%s\n", header.c_str());
    }
    ~CsvWriter() {
        if (f_) std::fclose(f_);
    }
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i)
            std::fprintf(f_, "%s%s", cells[i].c_str(), i + 1 < cells.size() ? "," : "\n");
    }

private:
    std::FILE* f_ = nullptr;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::FILE* f = std::fopen(path.string().c_str(), "w");
    require(f != nullptr, "cannot open output file: " + path.string());
    std::fwrite(content.data(), 1, content.size(), f);
    std::fclose(f);
}

} // namespace pcm
