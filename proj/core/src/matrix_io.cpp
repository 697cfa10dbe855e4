#include "scefis/matrix_io.hpp"

#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "scefis/image_io.hpp"

namespace scefis {

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("not a number in CSV: '" + s + "'");
    }
    if (used != s.size()) throw std::invalid_argument("trailing characters in CSV cell: '" + s + "'");
    return v;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

}  // namespace

std::string to_csv(const std::vector<std::string>& header, const Matrix& values) {
    if (static_cast<Eigen::Index>(header.size()) != values.cols()) throw std::invalid_argument("CSV header width mismatch");
    std::string out = fmt::format("{}\n", fmt::join(header, ","));
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            if (c) out += ',';
            out += fmt::format("{:.17g}", values(r, c));
        }
        out += '\n';
    }
    return out;
}

CsvTable parse_csv(const std::string& text) {
    const auto lines = lines_of(text);
    if (lines.empty()) throw std::invalid_argument("empty CSV");
    CsvTable t;
    t.header = split(lines[0]);
    t.values.resize(static_cast<Eigen::Index>(lines.size() - 1), static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = split(lines[i]);
        if (cells.size() != t.header.size()) throw std::invalid_argument(fmt::format("CSV row {} has {} cells", i, cells.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            t.values(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(c)) = parse_double(cells[c]);
        }
    }
    return t;
}

std::string to_csv(const StackedFeatureMatrix& f) {
    std::string out = "image_id,statistic";
    for (const auto& c : f.columns) out += "," + c;
    out += '\n';
    for (Eigen::Index r = 0; r < f.row_count(); ++r) {
        const auto& key = f.rows[static_cast<std::size_t>(r)];
        out += fmt::format("{},{}", key.image_id, key.statistic);
        for (Eigen::Index c = 0; c < f.column_count(); ++c) out += fmt::format(",{:.17g}", f.values(r, c));
        out += '\n';
    }
    return out;
}

StackedFeatureMatrix stacked_from_csv(const std::string& text) {
    const auto lines = lines_of(text);
    if (lines.empty()) throw std::invalid_argument("empty CSV");
    const auto header = split(lines[0]);
    if (header.size() < 2 || header[0] != "image_id" || header[1] != "statistic") {
        throw std::invalid_argument("feature CSV must start with image_id,statistic");
    }
    StackedFeatureMatrix f;
    f.columns.assign(header.begin() + 2, header.end());
    f.values.resize(static_cast<Eigen::Index>(lines.size() - 1), static_cast<Eigen::Index>(f.columns.size()));
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = split(lines[i]);
        if (cells.size() != header.size()) throw std::invalid_argument(fmt::format("CSV row {} has {} cells", i, cells.size()));
        f.rows.push_back({cells[0], static_cast<int>(parse_double(cells[1]))});
        for (std::size_t c = 2; c < cells.size(); ++c) {
            f.values(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(c - 2)) = parse_double(cells[c]);
        }
    }
    return f;
}

void write_store(const std::filesystem::path& dir, const TrainingStore& store) {
    std::vector<std::string> header;
    for (Eigen::Index c = 0; c < store.dimension(); ++c) header.push_back(fmt::format("m{}", c));
    write_text_atomic(dir / "M.csv", to_csv(header, store.inputs));
    write_text_atomic(dir / "O.csv", to_csv({"t"}, Matrix(store.outputs)));
}

TrainingStore read_store(const std::filesystem::path& dir) {
    const auto read_text = [](const std::filesystem::path& p) {
        const auto bytes = read_file_bytes(p);
        return std::string(bytes.begin(), bytes.end());
    };
    TrainingStore s;
    s.inputs = parse_csv(read_text(dir / "M.csv")).values;
    const auto o = parse_csv(read_text(dir / "O.csv")).values;
    if (o.cols() != 1 || o.rows() != s.inputs.rows()) throw std::invalid_argument("O.csv does not match M.csv");
    s.outputs = o.col(0);
    return s;
}

}  // namespace scefis
