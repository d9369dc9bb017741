#include "wzreg/experiments/output.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include <openssl/evp.h>

#include "wzreg/error.hpp"

namespace wzreg::experiments {

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buffer[64];
  const auto result =
      std::to_chars(buffer, buffer + sizeof buffer, value, std::chars_format::scientific, 16);
  return std::string(buffer, result.ptr);
}

std::string format_count(std::size_t value) { return std::to_string(value); }

std::string Table::to_csv() const {
  std::string out;
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header);
  for (const auto& row : rows) {
    if (row.size() != header.size()) {
      fail(ErrorCode::invariant_failure, "table row width does not match the header");
    }
    line(row);
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    fail(ErrorCode::numerical_failure, "SHA-256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) fail(ErrorCode::config_error, "cannot create " + path.parent_path().string());
  const std::filesystem::path staging = path.string() + ".partial";
  {
    std::ofstream out(staging, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::config_error, "cannot write " + staging.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::config_error, "short write to " + staging.string());
  }
  std::filesystem::rename(staging, path, ec);
  if (ec) fail(ErrorCode::config_error, "cannot move output into place: " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::config_error, "cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

namespace {

std::string svg_number(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.2f", v);
  return buffer;
}

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Round step (1, 2 or 5 times a power of ten) giving about `target` ticks.
double tick_step(double span, int target) {
  const double raw = span / target;
  const double power = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * power >= raw) return m * power;
  }
  return 10.0 * power;
}

std::string tick_label(double v, double step) {
  const int decimals = std::max(0, static_cast<int>(-std::floor(std::log10(step) + 1e-9)));
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.*f", decimals, v);
  return buffer;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

std::string render_svg(const PlotSpec& spec) {
  const double width = 720, height = 480;
  const double left = 70, right = 190, top = 40, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;

  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const auto& s : spec.series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      y_min = std::min(y_min, s.y[i]);
      y_max = std::max(y_max, s.y[i]);
    }
  }
  for (double v : spec.vertical_lines) {
    x_min = std::min(x_min, v);
    x_max = std::max(x_max, v);
  }
  if (!std::isfinite(x_min)) x_min = 0, x_max = 1;
  if (!std::isfinite(y_min)) y_min = 0, y_max = 1;
  if (x_max - x_min <= 0) x_max = x_min + 1;
  if (y_max - y_min <= 0) y_max = y_min + 1;
  const double y_pad = 0.05 * (y_max - y_min);
  y_min -= y_pad;
  y_max += y_pad;

  auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * plot_w; };
  auto py = [&](double y) { return top + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << svg_number(left + plot_w / 2) << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-size=\"15\">" << escape(spec.title) << "</text>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\""
      << plot_h << "\" fill=\"none\" stroke=\"#444\"/>\n";

  const double xs = tick_step(x_max - x_min, 8), ys = tick_step(y_max - y_min, 6);
  for (double t = std::ceil(x_min / xs) * xs; t <= x_max + 1e-9 * xs; t += xs) {
    svg << "<line x1=\"" << svg_number(px(t)) << "\" y1=\"" << svg_number(top + plot_h)
        << "\" x2=\"" << svg_number(px(t)) << "\" y2=\"" << svg_number(top + plot_h + 5)
        << "\" stroke=\"#444\"/><text x=\"" << svg_number(px(t)) << "\" y=\""
        << svg_number(top + plot_h + 20) << "\" text-anchor=\"middle\" font-size=\"11\">"
        << tick_label(t, xs) << "</text>\n";
  }
  for (double t = std::ceil(y_min / ys) * ys; t <= y_max + 1e-9 * ys; t += ys) {
    svg << "<line x1=\"" << svg_number(left - 5) << "\" y1=\"" << svg_number(py(t)) << "\" x2=\""
        << left << "\" y2=\"" << svg_number(py(t)) << "\" stroke=\"#444\"/><text x=\""
        << svg_number(left - 8) << "\" y=\"" << svg_number(py(t) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << tick_label(t, ys) << "</text>\n";
  }
  svg << "<text x=\"" << svg_number(left + plot_w / 2) << "\" y=\"" << height - 15
      << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(spec.x_label) << "</text>\n";
  svg << "<text transform=\"translate(18 " << svg_number(top + plot_h / 2)
      << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"13\">" << escape(spec.y_label)
      << "</text>\n";

  for (std::size_t i = 0; i < spec.vertical_lines.size(); ++i) {
    const double x = px(spec.vertical_lines[i]);
    svg << "<line x1=\"" << svg_number(x) << "\" y1=\"" << top << "\" x2=\"" << svg_number(x)
        << "\" y2=\"" << top + plot_h << "\" stroke=\"#666\" stroke-dasharray=\"6 4\"/>\n";
    if (i < spec.vertical_labels.size()) {
      svg << "<text x=\"" << svg_number(x + 4) << "\" y=\"" << top + 14
          << "\" font-size=\"11\" fill=\"#444\">" << escape(spec.vertical_labels[i]) << "</text>\n";
    }
  }

  for (std::size_t s = 0; s < spec.series.size(); ++s) {
    const auto& series = spec.series[s];
    const char* colour = kPalette[s % std::size(kPalette)];
    std::string points;
    for (std::size_t i = 0; i < series.x.size() && i < series.y.size(); ++i) {
      if (!std::isfinite(series.x[i]) || !std::isfinite(series.y[i])) continue;
      points += svg_number(px(series.x[i])) + ',' + svg_number(py(series.y[i])) + ' ';
    }
    if (!points.empty()) {
      points.pop_back();
      svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\""
          << points << "\"/>\n";
    }
    const double ly = top + 10 + 20 * static_cast<double>(s);
    svg << "<line x1=\"" << left + plot_w + 12 << "\" y1=\"" << svg_number(ly) << "\" x2=\""
        << left + plot_w + 36 << "\" y2=\"" << svg_number(ly) << "\" stroke=\"" << colour
        << "\" stroke-width=\"2\"/><text x=\"" << left + plot_w + 42 << "\" y=\""
        << svg_number(ly + 4) << "\" font-size=\"11\">" << escape(series.label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace wzreg::experiments
