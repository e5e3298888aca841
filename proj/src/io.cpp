#include "distlab/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace distlab {

namespace fs = std::filesystem;

void atomic_write_file(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

void ensure_dir(const std::string& path) {
    if (!path.empty()) fs::create_directories(path);
}

CsvWriter::CsvWriter(std::string path, std::string header)
    : path_(std::move(path)), header_(std::move(header)) {}

void CsvWriter::append(const std::string& row, bool flush_now) {
    rows_.push_back(row);
    if (flush_now) flush();
}

void CsvWriter::flush() {
    std::string content = header_;
    content += '\n';
    for (const std::string& row : rows_) {
        content += row;
        content += '\n';
    }
    atomic_write_file(path_, content);
}

}  // namespace distlab
