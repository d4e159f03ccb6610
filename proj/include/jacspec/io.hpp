#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jacspec/free_conv.hpp"
#include "jacspec/measures.hpp"

namespace jacspec::io {

/// {"type": "atomic"|"grid_density"|"empirical", "data": {...}}
nlohmann::json to_json(const measures::SpectralMeasure& mu);
measures::SpectralMeasure measure_from_json(const nlohmann::json& j);

/// %.17g, the shortest format that round-trips every double.
std::string format_double(double x);

struct HistogramBin {
  double left = 0.0;
  double right = 0.0;
  std::size_t count = 0;
  double density = 0.0;  // count / (total · width)
};

/// Equal-width bins on [lo, hi]; values outside are not counted but still
/// enter the total, so the densities integrate to the covered fraction.
std::vector<HistogramBin> histogram(std::span<const double> values, double lo, double hi, std::size_t bins);

// CSV writers. All overwrite `path`.
void write_eigenvalues_csv(const std::filesystem::path& path, std::span<const double> eigenvalues);
/// Grid densities only; "lambda,density".
void write_density_csv(const std::filesystem::path& path, const measures::SpectralMeasure& density);
void write_histogram_csv(const std::filesystem::path& path, std::span<const HistogramBin> bins);
void write_diagnostics_csv(const std::filesystem::path& path, std::span<const freeconv::PointDiagnostic> rows);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

std::vector<double> read_column_csv(const std::filesystem::path& path, const std::string& column);

}  // namespace jacspec::io
