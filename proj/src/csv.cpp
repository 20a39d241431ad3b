#include "tracena/csv.hpp"

#include "tracena/error.hpp"

namespace tracena::csv {

Reader::Reader(const std::filesystem::path& path) : in_(path), path_(path.string()) {
    if (!in_) throw Error("cannot open \"" + path_ + "\"");
}

bool Reader::next(std::vector<std::string>& fields) {
    fields.clear();
    int c = in_.get();
    if (c == EOF) return false;
    ++row_;

    std::string field;
    bool quoted = false;
    while (true) {
        if (quoted) {
            if (c == EOF) {
                throw ParseError(path_ + ": row " + std::to_string(row_) +
                                 ": unterminated quoted field");
            }
            if (c == '"') {
                const int peek = in_.peek();
                if (peek == '"') {
                    field.push_back('"');
                    in_.get();
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(static_cast<char>(c));
            }
        } else {
            if (c == '"' && field.empty()) {
                quoted = true;
            } else if (c == ',') {
                fields.push_back(std::move(field));
                field.clear();
            } else if (c == '\n' || c == EOF) {
                if (!field.empty() && field.back() == '\r') field.pop_back();
                fields.push_back(std::move(field));
                return true;
            } else {
                field.push_back(static_cast<char>(c));
            }
        }
        c = in_.get();
    }
}

void write_field(std::ostream& out, const std::string& field, bool force_quote) {
    const bool need_quote = force_quote ||
                            field.find_first_of(",\"\n\r") != std::string::npos;
    if (!need_quote) {
        out << field;
        return;
    }
    out << '"';
    for (const char ch : field) {
        if (ch == '"') out << '"';
        out << ch;
    }
    out << '"';
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        write_field(out, fields[i]);
    }
    out << '\n';
}

}  // namespace tracena::csv
