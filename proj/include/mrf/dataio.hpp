#ifndef MRF_DATAIO_HPP
#define MRF_DATAIO_HPP

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrf/matrix.hpp"

namespace mrf {

enum class Frequency { quarterly, monthly };

/// FRED-style stationarity transform code:
///   1 level, 2 first difference, 3 second difference, 4 log,
///   5 dlog, 6 d2log, 7 difference of the growth rate d(x_t/x_{t-1} - 1).
struct TransformCode {
    int code = 1;
    explicit TransformCode(int c = 1) : code(c) {
        if (c < 1 || c > 7) throw std::invalid_argument("TransformCode: code must be in 1..7");
    }
};

/// Direct-forecast target construction: either the level h periods ahead or
/// the average over the next h periods.
struct ForecastSpec {
    int horizon = 1;
    enum class TargetMode { point, average } target_mode = TargetMode::point;
};

/// A dated panel of time series. NaN marks missing values.
struct SeriesPanel {
    Matrix values;                    // T x N
    std::vector<std::string> names;   // N labels
    Frequency frequency = Frequency::quarterly;
    std::vector<std::string> dates;   // T period labels
    std::vector<int> tcodes;          // empty or N entries

    int T() const { return values.rows(); }
    int N() const { return values.cols(); }

    int column_index(const std::string& name) const {
        for (int c = 0; c < N(); ++c)
            if (names[c] == name) return c;
        return -1;
    }
    std::vector<double> column(const std::string& name) const {
        const int c = column_index(name);
        if (c < 0) throw std::invalid_argument("SeriesPanel: no column named '" + name + "'");
        return values.col(c);
    }
};

// ---------------------------------------------------------------------------
// Period labels
// ---------------------------------------------------------------------------

struct Period {
    int year = 0;
    int sub = 1;  // quarter 1..4 or month 1..12
    Frequency freq = Frequency::quarterly;

    int serial() const { return freq == Frequency::quarterly ? year * 4 + (sub - 1) : year * 12 + (sub - 1); }
    Period next() const {
        Period p = *this;
        const int per_year = freq == Frequency::quarterly ? 4 : 12;
        if (++p.sub > per_year) {
            p.sub = 1;
            ++p.year;
        }
        return p;
    }
    std::string label() const {
        char buf[16];
        if (freq == Frequency::quarterly)
            std::snprintf(buf, sizeof(buf), "%04dQ%d", year, sub);
        else
            std::snprintf(buf, sizeof(buf), "%04dM%02d", year, sub);
        return buf;
    }
};

/// Parses "1961Q3", "1961M09", "1961-09" or "1961-09-30" period labels.
/// Returns false when the label does not match any known pattern.
inline bool parse_period(const std::string& label, Frequency freq, Period& out) {
    int year = 0, sub = 0;
    char sep = 0;
    std::istringstream ss(label);
    if (!(ss >> year)) return false;
    if (!(ss >> sep)) return false;
    if (sep == 'Q' || sep == 'q') {
        if (!(ss >> sub) || sub < 1 || sub > 4) return false;
        out = {year, freq == Frequency::quarterly ? sub : (sub - 1) * 3 + 1, freq};
        return true;
    }
    if (sep == 'M' || sep == 'm' || sep == '-' || sep == '/') {
        if (!(ss >> sub) || sub < 1 || sub > 12) return false;
        if (freq == Frequency::quarterly) sub = (sub - 1) / 3 + 1;
        out = {year, sub, freq};
        return true;
    }
    return false;
}

inline int compare_period_labels(const std::string& a, const std::string& b, Frequency freq) {
    Period pa, pb;
    if (!parse_period(a, freq, pa) || !parse_period(b, freq, pb))
        throw std::invalid_argument("cannot parse period label '" + a + "' or '" + b + "'");
    return pa.serial() - pb.serial();
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

/// Applies a FRED transform code to a series. Differencing consumes leading
/// observations, which come back as NaN so lengths line up.
inline std::vector<double> apply_tcode(const std::vector<double>& series, TransformCode code) {
    const int T = static_cast<int>(series.size());
    std::vector<double> out(T, kNaN);
    const int c = code.code;

    auto check_positive = [&](int i) {
        if (std::isnan(series[i])) return;
        if (series[i] <= 0.0)
            throw std::domain_error("apply_tcode: non-positive value at index " + std::to_string(i) +
                                    " under log transform code " + std::to_string(c));
    };

    switch (c) {
        case 1:
            out = series;
            break;
        case 2:
            for (int t = 1; t < T; ++t) out[t] = series[t] - series[t - 1];
            break;
        case 3:
            for (int t = 2; t < T; ++t) out[t] = series[t] - 2.0 * series[t - 1] + series[t - 2];
            break;
        case 4:
            for (int t = 0; t < T; ++t) {
                check_positive(t);
                out[t] = std::log(series[t]);
            }
            break;
        case 5:
            for (int t = 0; t < T; ++t) check_positive(t);
            for (int t = 1; t < T; ++t) out[t] = std::log(series[t]) - std::log(series[t - 1]);
            break;
        case 6:
            for (int t = 0; t < T; ++t) check_positive(t);
            for (int t = 2; t < T; ++t)
                out[t] = std::log(series[t]) - 2.0 * std::log(series[t - 1]) + std::log(series[t - 2]);
            break;
        case 7:
            // d(x_t / x_{t-1} - 1): two observations consumed.
            for (int t = 2; t < T; ++t)
                out[t] = (series[t] / series[t - 1] - 1.0) - (series[t - 1] / series[t - 2] - 1.0);
            break;
        default:
            throw std::invalid_argument("apply_tcode: unknown code");
    }
    return out;
}

/// Direct-forecast target aligned so that row t holds the value predicted
/// from information available at t: y_{t+h} (point) or the mean of
/// y_{t+1..t+h} (average). Trailing h entries are NaN.
inline std::vector<double> build_direct_target(const std::vector<double>& y, const ForecastSpec& spec) {
    const int T = static_cast<int>(y.size());
    const int h = spec.horizon;
    if (h < 1) throw std::invalid_argument("build_direct_target: horizon must be >= 1");
    if (h >= T) throw std::invalid_argument("build_direct_target: horizon must be smaller than the sample");
    std::vector<double> out(T, kNaN);
    for (int t = 0; t + h < T; ++t) {
        if (spec.target_mode == ForecastSpec::TargetMode::point) {
            out[t] = y[t + h];
        } else {
            double s = 0.0;
            for (int k = 1; k <= h; ++k) s += y[t + k];
            out[t] = s / h;
        }
    }
    return out;
}

/// T x P matrix whose column p (1-based lag order) holds the series lagged p
/// periods; entries before the sample start are NaN.
inline Matrix build_lag_panel(const std::vector<double>& series, int P) {
    if (P < 1) throw std::invalid_argument("build_lag_panel: P must be >= 1");
    const int T = static_cast<int>(series.size());
    Matrix out(T, P, kNaN);
    for (int p = 1; p <= P; ++p)
        for (int t = p; t < T; ++t) out(t, p - 1) = series[t - p];
    return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
        } else if (ch == ',' && !quoted) {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    cells.push_back(cur);
    return cells;
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    std::size_t e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& cell, double& out) {
    const std::string t = trim(cell);
    if (t.empty()) {
        out = kNaN;
        return true;
    }
    try {
        std::size_t pos = 0;
        out = std::stod(t, &pos);
        return pos == t.size();
    } catch (...) {
        return false;
    }
}

inline std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace detail

/// Reads a panel CSV: first column holds date labels, first row variable
/// names, and an optional second row carries FRED transform codes (detected
/// by a "transform" marker in its date cell or by all cells being small
/// integers in 1..7). Empty cells are missing values.
inline SeriesPanel read_panel_csv(const std::string& path, Frequency freq = Frequency::quarterly) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_panel_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_panel_csv: empty file '" + path + "'");

    SeriesPanel panel;
    panel.frequency = freq;
    const auto header = detail::split_csv_line(line);
    if (header.size() < 2) throw std::runtime_error("read_panel_csv: need a date column plus data columns");
    for (std::size_t c = 1; c < header.size(); ++c) panel.names.push_back(detail::trim(header[c]));
    for (std::size_t i = 0; i < panel.names.size(); ++i)
        for (std::size_t j = i + 1; j < panel.names.size(); ++j)
            if (panel.names[i] == panel.names[j])
                throw std::runtime_error("read_panel_csv: duplicate column name '" + panel.names[i] + "'");

    const int N = static_cast<int>(panel.names.size());
    std::vector<std::vector<double>> rows;
    bool first_data_row = true;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        cells.resize(header.size());
        const std::string date_cell = detail::trim(cells[0]);

        if (first_data_row) {
            first_data_row = false;
            const bool marked = detail::to_lower(date_cell).find("transform") != std::string::npos ||
                                detail::to_lower(date_cell) == "tcode";
            bool all_codes = true;
            std::vector<int> codes(N);
            for (int c = 0; c < N; ++c) {
                double v;
                if (!detail::parse_double(cells[c + 1], v) || std::isnan(v) || v != std::floor(v) ||
                    v < 1 || v > 7) {
                    all_codes = false;
                    break;
                }
                codes[c] = static_cast<int>(v);
            }
            Period ignored;
            const bool date_like = parse_period(date_cell, freq, ignored);
            if (marked || (all_codes && !date_like)) {
                panel.tcodes = codes;
                continue;
            }
        }

        std::vector<double> row(N);
        for (int c = 0; c < N; ++c) {
            if (!detail::parse_double(cells[c + 1], row[c]))
                throw std::runtime_error("read_panel_csv: cannot parse value '" + cells[c + 1] +
                                         "' in column " + panel.names[c] + " at date " + date_cell);
        }
        panel.dates.push_back(date_cell);
        rows.push_back(std::move(row));
    }

    panel.values = Matrix(static_cast<int>(rows.size()), N);
    for (int r = 0; r < panel.values.rows(); ++r)
        for (int c = 0; c < N; ++c) panel.values(r, c) = rows[r][c];

    if (panel.T() < 1) throw std::runtime_error("read_panel_csv: no data rows in '" + path + "'");

    // Dates must be strictly increasing and contiguous at the stated frequency.
    Period prev;
    if (parse_period(panel.dates[0], freq, prev)) {
        for (int t = 1; t < panel.T(); ++t) {
            Period cur;
            if (!parse_period(panel.dates[t], freq, cur))
                throw std::runtime_error("read_panel_csv: unparseable date '" + panel.dates[t] + "'");
            if (cur.serial() != prev.serial() + 1)
                throw std::runtime_error("read_panel_csv: dates not contiguous at '" + panel.dates[t] + "'");
            prev = cur;
        }
    } else {
        throw std::runtime_error("read_panel_csv: unparseable date '" + panel.dates[0] + "'");
    }
    return panel;
}

/// Round-trip safe double formatting (shortest representation that parses
/// back to the same bits).
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void write_panel_csv(const SeriesPanel& panel, const std::string& path,
                            const std::string& date_header = "date") {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_panel_csv: cannot open '" + path + "' for writing");
    out << date_header;
    for (const auto& n : panel.names) out << ',' << n;
    out << '\n';
    if (!panel.tcodes.empty()) {
        out << "transform";
        for (int c : panel.tcodes) out << ',' << c;
        out << '\n';
    }
    for (int t = 0; t < panel.T(); ++t) {
        out << panel.dates[t];
        for (int c = 0; c < panel.N(); ++c) {
            out << ',';
            const double v = panel.values(t, c);
            if (!std::isnan(v)) out << format_double(v);
        }
        out << '\n';
    }
}

/// Applies each column's transform code (panel.tcodes, or the provided
/// override) and returns the stationarized panel.
inline SeriesPanel transform_panel(const SeriesPanel& panel, const std::vector<int>& codes_override = {}) {
    const std::vector<int>& codes = codes_override.empty() ? panel.tcodes : codes_override;
    if (static_cast<int>(codes.size()) != panel.N())
        throw std::invalid_argument("transform_panel: need one transform code per column");
    SeriesPanel out = panel;
    for (int c = 0; c < panel.N(); ++c) {
        auto col = apply_tcode(panel.values.col(c), TransformCode(codes[c]));
        out.values.set_col(c, col);
    }
    return out;
}

}  // namespace mrf

#endif  // MRF_DATAIO_HPP
