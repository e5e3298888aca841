#pragma once

#include <string>
#include <vector>

namespace distlab {

// Writes via a temp file in the same directory plus rename, so readers never
// see a partially written file.
void atomic_write_file(const std::string& path, const std::string& content);

void ensure_dir(const std::string& path);

// Accumulates CSV rows in memory and atomically rewrites the whole file on
// every flush; an interrupted run leaves either the previous complete file
// or none at all.
class CsvWriter {
public:
    CsvWriter(std::string path, std::string header);

    void append(const std::string& row, bool flush_now = true);
    void flush();
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::string header_;
    std::vector<std::string> rows_;
};

}  // namespace distlab
