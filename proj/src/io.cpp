#include "jacspec/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "jacspec/error.hpp"

namespace jacspec::io {

using measures::SpectralMeasure;
using nlohmann::json;

json to_json(const SpectralMeasure& mu) {
  if (const auto* at = mu.as_atomic()) {
    return {{"type", "atomic"}, {"data", {{"positions", at->positions}, {"weights", at->weights}}}};
  }
  if (const auto* g = mu.as_grid()) {
    return {{"type", "grid_density"},
            {"data", {{"grid", g->grid}, {"values", g->values}, {"zero_atom", g->zero_atom}}}};
  }
  return {{"type", "empirical"}, {"data", {{"eigenvalues", mu.as_empirical()->eigenvalues}}}};
}

SpectralMeasure measure_from_json(const json& j) {
  try {
    const auto type = j.at("type").get<std::string>();
    const auto& d = j.at("data");
    if (type == "atomic") {
      return SpectralMeasure::atomic(d.at("positions").get<std::vector<double>>(),
                                     d.at("weights").get<std::vector<double>>());
    }
    if (type == "grid_density") {
      return SpectralMeasure::grid_density(d.at("grid").get<std::vector<double>>(),
                                           d.at("values").get<std::vector<double>>(),
                                           d.value("zero_atom", 0.0));
    }
    if (type == "empirical") return SpectralMeasure::empirical(d.at("eigenvalues").get<std::vector<double>>());
    throw ConfigError("type", "unknown measure type '" + type + "'");
  } catch (const json::exception& e) {
    throw ConfigError("measure", e.what());
  }
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<HistogramBin> histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo)) throw DomainError("histogram: need bins >= 1 and hi > lo");
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<HistogramBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].left = lo + width * static_cast<double>(b);
    out[b].right = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
  }
  for (const double v : values) {
    if (v < lo || v > hi) continue;
    auto b = static_cast<std::size_t>((v - lo) / width);
    if (b >= bins) b = bins - 1;
    ++out[b].count;
  }
  const double total = static_cast<double>(values.size());
  for (auto& bin : out) bin.density = total > 0 ? static_cast<double>(bin.count) / (total * width) : 0.0;
  return out;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

void write_eigenvalues_csv(const std::filesystem::path& path, std::span<const double> eigenvalues) {
  auto out = open_out(path);
  out << "lambda\n";
  for (const double x : eigenvalues) out << format_double(x) << '\n';
}

void write_density_csv(const std::filesystem::path& path, const SpectralMeasure& density) {
  const auto* g = density.as_grid();
  if (!g) throw DomainError("write_density_csv: measure is not a grid density");
  auto out = open_out(path);
  out << "lambda,density\n";
  for (std::size_t i = 0; i < g->grid.size(); ++i) {
    out << format_double(g->grid[i]) << ',' << format_double(g->values[i]) << '\n';
  }
}

void write_histogram_csv(const std::filesystem::path& path, std::span<const HistogramBin> bins) {
  auto out = open_out(path);
  out << "bin_left,bin_right,count,density\n";
  for (const auto& b : bins) {
    out << format_double(b.left) << ',' << format_double(b.right) << ',' << b.count << ','
        << format_double(b.density) << '\n';
  }
}

void write_diagnostics_csv(const std::filesystem::path& path, std::span<const freeconv::PointDiagnostic> rows) {
  auto out = open_out(path);
  out << "lambda,residual,iterations\n";
  for (const auto& r : rows) {
    out << format_double(r.lambda) << ',' << format_double(r.residual) << ',' << r.iterations << '\n';
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

std::vector<double> read_column_csv(const std::filesystem::path& path, const std::string& column) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("'" + path.string() + "' is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::size_t col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == column) col = i;
  }
  if (col == header.size()) throw Error("column '" + column + "' not in '" + path.string() + "'");
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t i = 0; i <= col && std::getline(ss, cell, ','); ++i) {
    }
    out.push_back(std::stod(cell));
  }
  return out;
}

}  // namespace jacspec::io
