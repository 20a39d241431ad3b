#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

// Minimal RFC4180-style CSV handling: quoted fields, doubled quotes, LF line
// endings. The writer is canonical (a field is quoted only when needed or
// when forced), which is what makes trace round-trips byte-identical.

namespace tracena::csv {

class Reader {
public:
    explicit Reader(const std::filesystem::path& path);

    // Reads one record into `fields`; returns false at end of input.
    bool next(std::vector<std::string>& fields);

    // 1-based number of the most recently read row.
    std::size_t row_number() const { return row_; }

    const std::string& path() const { return path_; }

private:
    std::ifstream in_;
    std::string path_;
    std::size_t row_ = 0;
};

void write_field(std::ostream& out, const std::string& field, bool force_quote = false);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace tracena::csv
