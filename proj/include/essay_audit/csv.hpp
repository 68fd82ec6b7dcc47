#ifndef ESSAY_AUDIT_CSV_HPP
#define ESSAY_AUDIT_CSV_HPP

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace essay_audit::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column index by name, -1 if absent.
    int column(std::string_view name) const;
};

// RFC 4180: quoted fields, doubled quotes, CRLF or LF line endings.
Table parse(std::string_view text);
Table read_file(const std::string& path);

std::string escape_field(std::string_view field);
void write(std::ostream& os, const Table& table);
void write_file(const std::string& path, const Table& table);

}  // namespace essay_audit::csv

#endif
