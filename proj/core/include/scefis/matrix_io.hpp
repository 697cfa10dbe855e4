#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "scefis/fuzzy.hpp"
#include "scefis/selection.hpp"

namespace scefis {

struct CsvTable {
    std::vector<std::string> header;
    Matrix values;
};

/// Round-trippable CSV (17 significant digits) with a header row.
std::string to_csv(const std::vector<std::string>& header, const Matrix& values);
CsvTable parse_csv(const std::string& text);

/// Leading `image_id,statistic` columns followed by the feature columns.
std::string to_csv(const StackedFeatureMatrix& f);
StackedFeatureMatrix stacked_from_csv(const std::string& text);

void write_store(const std::filesystem::path& dir, const TrainingStore& store);
TrainingStore read_store(const std::filesystem::path& dir);

}  // namespace scefis
