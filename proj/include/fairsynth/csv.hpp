#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fairsynth/data.hpp"
#include "fairsynth/error.hpp"

namespace fairsynth {

// Comma-separated, standard double-quote escaping, no other dialects.
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch == '\r') {
            // tolerate CRLF
        } else {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline std::string escape_csv_field(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out += "\"\"";
        else out += ch;
    }
    out += '"';
    return out;
}

// Parse one data line against the schema. line_no is 1-based and only used
// in error messages.
inline Row parse_row_line(const std::string& line, const Schema& schema, std::size_t line_no) {
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != schema.size())
        throw DataError("row " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " values, expected " +
                        std::to_string(schema.size()));
    Row row;
    row.reserve(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
        try {
            row.push_back(parse_cell(fields[c], schema.columns[c]));
        } catch (const DataError& e) {
            throw DataError("row " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return row;
}

inline std::string render_row_line(const Row& row, const Schema& schema) {
    std::string out;
    for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out += ',';
        out += escape_csv_field(render_cell(row[c], schema.columns[c]));
    }
    return out;
}

// Full-file render, header first. Weighted datasets gain a trailing
// "weight" column so reweighed data survives the round trip through disk.
inline std::string render_csv(const Dataset& dataset) {
    std::string out = dataset.schema.header_line();
    if (dataset.has_weights()) out += ",weight";
    out += '\n';
    for (std::size_t r = 0; r < dataset.rows.size(); ++r) {
        out += render_row_line(dataset.rows[r], dataset.schema);
        if (dataset.has_weights()) {
            out += ',';
            out += render_number(dataset.weights[r]);
        }
        out += '\n';
    }
    return out;
}

inline void save_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << render_csv(dataset);
    if (!f) throw DataError("failed writing '" + path + "'");
}

inline Dataset parse_csv_text(const std::string& text, const Schema& schema) {
    schema.validate();
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw DataError("empty CSV input: missing header row");
    // strip a UTF-8 BOM if present
    if (line.size() >= 3 && line.compare(0, 3, "\xef\xbb\xbf") == 0) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header = split_csv_line(line);
    bool trailing_weight =
        header.size() == schema.size() + 1 && header.back() == "weight";
    if (!trailing_weight) {
        if (header.size() != schema.size())
            throw DataError("header has " + std::to_string(header.size()) +
                            " columns, schema expects " + std::to_string(schema.size()));
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] != schema.columns[i].name)
                throw DataError("header column " + std::to_string(i + 1) + " is '" +
                                header[i] + "', schema expects '" + schema.columns[i].name + "'");
    } else {
        for (std::size_t i = 0; i + 1 < header.size(); ++i)
            if (header[i] != schema.columns[i].name)
                throw DataError("header column " + std::to_string(i + 1) + " is '" +
                                header[i] + "', schema expects '" + schema.columns[i].name + "'");
    }

    Dataset out;
    out.schema = schema;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (trailing_weight) {
            std::vector<std::string> fields = split_csv_line(line);
            if (fields.size() != schema.size() + 1)
                throw DataError("row " + std::to_string(line_no - 1) + " has " +
                                std::to_string(fields.size()) + " values, expected " +
                                std::to_string(schema.size() + 1));
            std::string weight_text = fields.back();
            fields.pop_back();
            std::string data_line;
            for (std::size_t i = 0; i < fields.size(); ++i) {
                if (i) data_line += ',';
                data_line += escape_csv_field(fields[i]);
            }
            out.rows.push_back(parse_row_line(data_line, schema, line_no - 1));
            try {
                out.weights.push_back(parse_cell(weight_text, ColumnSpec{"weight", ColumnKind::Numeric, {}, {}}).number);
            } catch (const DataError& e) {
                throw DataError("row " + std::to_string(line_no - 1) + ": " + e.what());
            }
        } else {
            out.rows.push_back(parse_row_line(line, schema, line_no - 1));
        }
    }
    out.validate();
    return out;
}

inline Dataset load_csv(const std::string& path, const Schema& schema) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "' for reading");
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_csv_text(buf.str(), schema);
}

} // namespace fairsynth
