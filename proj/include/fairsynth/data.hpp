#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "fairsynth/error.hpp"

namespace fairsynth {

enum class ColumnKind { Binary, Categorical, Numeric };

inline const char* kind_name(ColumnKind k) {
    switch (k) {
        case ColumnKind::Binary: return "binary";
        case ColumnKind::Categorical: return "categorical";
        case ColumnKind::Numeric: return "numeric";
    }
    return "?";
}

inline ColumnKind kind_from_name(const std::string& s) {
    if (s == "binary") return ColumnKind::Binary;
    if (s == "categorical") return ColumnKind::Categorical;
    if (s == "numeric") return ColumnKind::Numeric;
    throw ConfigError("unknown column kind '" + s + "' (expected binary|categorical|numeric)");
}

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    std::vector<std::string> categories;  // binary/categorical only, ordered levels
    std::string units;                    // optional free text

    bool is_discrete() const { return kind != ColumnKind::Numeric; }

    int level_of(const std::string& value) const {
        for (std::size_t i = 0; i < categories.size(); ++i)
            if (categories[i] == value) return static_cast<int>(i);
        return -1;
    }

    void validate() const {
        if (name.empty()) throw ConfigError("column with empty name");
        if (kind == ColumnKind::Binary && categories.size() != 2)
            throw ConfigError("binary column '" + name + "' must have exactly 2 categories");
        if (kind == ColumnKind::Categorical && categories.size() < 2)
            throw ConfigError("categorical column '" + name + "' must have >=2 categories");
        if (is_discrete()) {
            std::set<std::string> seen(categories.begin(), categories.end());
            if (seen.size() != categories.size())
                throw ConfigError("column '" + name + "' has duplicate category levels");
        }
    }
};

struct Schema {
    std::vector<ColumnSpec> columns;

    std::size_t size() const { return columns.size(); }

    int index_of(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i].name == name) return static_cast<int>(i);
        return -1;
    }

    const ColumnSpec& column(const std::string& name) const {
        int i = index_of(name);
        if (i < 0) throw ConfigError("schema has no column named '" + name + "'");
        return columns[static_cast<std::size_t>(i)];
    }

    void validate() const {
        if (columns.empty()) throw ConfigError("schema must have at least one column");
        std::set<std::string> names;
        for (const auto& c : columns) {
            c.validate();
            if (!names.insert(c.name).second)
                throw ConfigError("duplicate column name '" + c.name + "' in schema");
        }
    }

    // Comma-joined column names; the header line of CSV files and prompts.
    std::string header_line() const {
        std::string out;
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (i) out += ',';
            out += columns[i].name;
        }
        return out;
    }

    bool operator==(const Schema& other) const {
        if (columns.size() != other.columns.size()) return false;
        for (std::size_t i = 0; i < columns.size(); ++i) {
            const auto& a = columns[i];
            const auto& b = other.columns[i];
            if (a.name != b.name || a.kind != b.kind || a.categories != b.categories)
                return false;
        }
        return true;
    }
};

// One tabular cell. `level` is active for binary/categorical columns,
// `number` for numeric ones; the column kind decides which.
struct Cell {
    double number = 0.0;
    std::int32_t level = -1;
};

using Row = std::vector<Cell>;

inline bool cells_equal(const Cell& a, const Cell& b, const ColumnSpec& col) {
    return col.is_discrete() ? a.level == b.level : a.number == b.number;
}

inline bool rows_equal(const Row& a, const Row& b, const Schema& schema) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!cells_equal(a[i], b[i], schema.columns[i])) return false;
    return true;
}

inline Cell make_level(int level) {
    Cell c;
    c.level = level;
    return c;
}

inline Cell make_number(double v) {
    Cell c;
    c.number = v;
    return c;
}

// Parse one raw field for a column. Throws DataError with the failure reason.
inline Cell parse_cell(const std::string& text, const ColumnSpec& col) {
    if (text.empty())
        throw DataError("missing value for column '" + col.name + "'");
    if (col.is_discrete()) {
        int lv = col.level_of(text);
        if (lv < 0)
            throw DataError("unknown level '" + text + "' for column '" + col.name + "'");
        return make_level(lv);
    }
    const char* begin = text.data();
    const char* end = begin + text.size();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw DataError("value '" + text + "' is not numeric for column '" + col.name + "'");
    return make_number(v);
}

// Shortest text that parses back to the same double.
inline std::string render_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

inline std::string render_cell(const Cell& cell, const ColumnSpec& col) {
    if (col.is_discrete()) {
        if (cell.level < 0 || cell.level >= static_cast<int>(col.categories.size()))
            throw DataError("cell level out of range for column '" + col.name + "'");
        return col.categories[static_cast<std::size_t>(cell.level)];
    }
    return render_number(cell.number);
}

// Immutable after construction; all operations on it are pure.
struct Dataset {
    Schema schema;
    std::vector<Row> rows;
    std::vector<double> weights;  // empty means all 1; otherwise per-row, >=0 finite

    std::size_t size() const { return rows.size(); }
    bool has_weights() const { return !weights.empty(); }
    double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }

    const Cell& at(std::size_t row, int col) const {
        return rows[row][static_cast<std::size_t>(col)];
    }

    void validate() const {
        schema.validate();
        if (!weights.empty() && weights.size() != rows.size())
            throw DataError("weight vector length does not match row count");
        for (double w : weights)
            if (!(w >= 0.0) || !std::isfinite(w))
                throw DataError("row weights must be finite and >= 0");
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const Row& row = rows[r];
            if (row.size() != schema.size())
                throw DataError("row " + std::to_string(r + 1) + " has " +
                                std::to_string(row.size()) + " values, expected " +
                                std::to_string(schema.size()));
            for (std::size_t c = 0; c < row.size(); ++c) {
                const auto& col = schema.columns[c];
                if (col.is_discrete()) {
                    if (row[c].level < 0 ||
                        row[c].level >= static_cast<int>(col.categories.size()))
                        throw DataError("row " + std::to_string(r + 1) +
                                        ": level out of range for column '" + col.name + "'");
                } else if (!std::isfinite(row[c].number)) {
                    throw DataError("row " + std::to_string(r + 1) +
                                    ": non-finite value in column '" + col.name + "'");
                }
            }
        }
    }
};

// The X/Z/W/Y role partition the whole pipeline runs on. Confounders are
// implicit: every column that is not sensitive, mediator, or outcome.
struct SfmRoles {
    std::string sensitive;
    std::string baseline_level;    // x0
    std::string comparison_level;  // x1
    std::vector<std::string> mediators;
    std::string outcome;

    std::vector<std::string> confounders(const Schema& schema) const {
        std::vector<std::string> out;
        for (const auto& c : schema.columns) {
            if (c.name == sensitive || c.name == outcome) continue;
            if (std::find(mediators.begin(), mediators.end(), c.name) != mediators.end())
                continue;
            out.push_back(c.name);
        }
        return out;
    }

    void validate(const Schema& schema) const {
        const ColumnSpec& s = schema.column(sensitive);
        if (!s.is_discrete())
            throw ConfigError("sensitive column '" + sensitive + "' must be binary or categorical");
        if (s.level_of(baseline_level) < 0)
            throw ConfigError("baseline level '" + baseline_level + "' not a level of '" + sensitive + "'");
        if (s.level_of(comparison_level) < 0)
            throw ConfigError("comparison level '" + comparison_level + "' not a level of '" + sensitive + "'");
        if (baseline_level == comparison_level)
            throw ConfigError("baseline and comparison levels must differ");
        schema.column(outcome);
        if (outcome == sensitive)
            throw ConfigError("outcome and sensitive column must differ");
        std::set<std::string> seen;
        for (const auto& m : mediators) {
            schema.column(m);
            if (m == sensitive || m == outcome)
                throw ConfigError("mediator '" + m + "' overlaps sensitive or outcome role");
            if (!seen.insert(m).second)
                throw ConfigError("mediator '" + m + "' listed twice");
        }
    }

    // Binary-after-preprocessing contract; required by every evaluator.
    void require_binary_outcome(const Schema& schema) const {
        const ColumnSpec& y = schema.column(outcome);
        if (y.categories.size() != 2)
            throw ConfigError("outcome column '" + outcome +
                              "' must be binary (binarize it before evaluation)");
    }
};

} // namespace fairsynth
