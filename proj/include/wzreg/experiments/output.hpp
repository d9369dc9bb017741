#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace wzreg::experiments {

/// 17 significant digits in scientific notation; "inf", "-inf" or "nan" otherwise.
std::string format_number(double value);
std::string format_count(std::size_t value);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Comma separated, "\n" line endings, header first.
  std::string to_csv() const;
};

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

/// Writes through a temporary file and a rename.
void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  std::vector<double> vertical_lines;  // dashed reference lines at these x values
  std::vector<std::string> vertical_labels;
};

/// Self-contained SVG line plot.
std::string render_svg(const PlotSpec& spec);

}  // namespace wzreg::experiments
