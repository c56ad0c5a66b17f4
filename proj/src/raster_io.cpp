#include "udfit/raster_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

#include "udfit/errors.hpp"

namespace udfit {

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& text, const std::string& context) {
  std::string t = text;
  t.erase(0, t.find_first_not_of(" \t\r"));
  t.erase(t.find_last_not_of(" \t\r") + 1);
  if (t == "NA" || t == "nan" || t == "NaN" || t.empty()) {
    if (t.empty()) throw IoError(context + ": empty numeric field");
    return std::numeric_limits<double>::quiet_NaN();
  }
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw IoError(context + ": cannot parse number '" + t + "'");
  return v;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) fields.push_back(cur);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  s.erase(0, s.find_first_not_of(" \t\r"));
  s.erase(s.find_last_not_of(" \t\r") + 1);
  return s;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return in;
}

// Sorted distinct coordinates, merging values closer than a relative tolerance.
std::vector<double> distinct(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double x : v) {
    if (out.empty() || std::abs(x - out.back()) > 1e-9 * std::max(1.0, std::abs(x)))
      out.push_back(x);
  }
  return out;
}

}  // namespace

void write_raster_csv(std::ostream& out, const Raster& r) {
  out << "x,y,value\n";
  const Grid& g = r.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point c = g.center(i);
    out << format_double(c.x) << ',' << format_double(c.y) << ',' << format_double(r[i]) << '\n';
  }
}

void write_raster_csv(const std::string& path, const Raster& r) {
  auto out = open_out(path);
  write_raster_csv(out, r);
}

Raster read_raster_csv(std::istream& in, const std::optional<Grid>& grid_hint) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("raster CSV: empty input");
  if (trim(line) != "x,y,value") throw IoError("raster CSV: expected header 'x,y,value'");
  struct Row {
    double x, y, v;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    const std::string ctx = "raster CSV line " + std::to_string(line_no);
    if (f.size() != 3) throw IoError(ctx + ": expected 3 fields");
    rows.push_back({parse_double(f[0], ctx), parse_double(f[1], ctx), parse_double(f[2], ctx)});
  }
  if (rows.empty()) throw IoError("raster CSV: no cells");

  Grid grid;
  if (grid_hint) {
    grid = *grid_hint;
  } else {
    std::vector<double> xs, ys;
    for (const auto& r : rows) {
      xs.push_back(r.x);
      ys.push_back(r.y);
    }
    const auto ux = distinct(xs);
    const auto uy = distinct(ys);
    double dx = ux.size() > 1 ? (ux.back() - ux.front()) / static_cast<double>(ux.size() - 1) : 0.0;
    double dy = uy.size() > 1 ? (uy.back() - uy.front()) / static_cast<double>(uy.size() - 1) : 0.0;
    if (dx == 0.0 && dy == 0.0)
      throw IoError("raster CSV: cannot infer cell size from a single cell; pass a grid");
    if (dx == 0.0) dx = dy;
    if (dy == 0.0) dy = dx;
    StudyRegion region{ux.front() - dx / 2, ux.back() + dx / 2, uy.front() - dy / 2,
                       uy.back() + dy / 2};
    grid = Grid(region, ux.size(), uy.size());
  }
  if (rows.size() != grid.size())
    throw IoError("raster CSV: " + std::to_string(rows.size()) + " rows for " +
                  std::to_string(grid.size()) + " cells");
  Raster r(grid, std::numeric_limits<double>::quiet_NaN());
  std::vector<bool> seen(grid.size(), false);
  for (const auto& row : rows) {
    const std::size_t i = grid.cell_of({row.x, row.y});
    if (seen[i]) throw IoError("raster CSV: duplicate cell center");
    seen[i] = true;
    r[i] = row.v;
  }
  return r;
}

Raster read_raster_csv(const std::string& path, const std::optional<Grid>& grid_hint) {
  auto in = open_in(path);
  return read_raster_csv(in, grid_hint);
}

void write_raster_ascii(std::ostream& out, const Raster& r) {
  const Grid& g = r.grid();
  const double rel = std::abs(g.dx() - g.dy()) / std::max(g.dx(), g.dy());
  if (rel > 1e-12) throw Unsupported("ESRI ASCII grids require square cells");
  out << "ncols " << g.nx() << '\n'
      << "nrows " << g.ny() << '\n'
      << "xllcorner " << format_double(g.region().xmin) << '\n'
      << "yllcorner " << format_double(g.region().ymin) << '\n'
      << "cellsize " << format_double(g.dx()) << '\n'
      << "NODATA_value " << format_double(kAsciiNoData) << '\n';
  for (std::size_t row = 0; row < g.ny(); ++row) {
    const std::size_t iy = g.ny() - 1 - row;
    for (std::size_t ix = 0; ix < g.nx(); ++ix) {
      const double v = r[g.index(ix, iy)];
      if (ix) out << ' ';
      out << format_double(std::isnan(v) ? kAsciiNoData : v);
    }
    out << '\n';
  }
}

void write_raster_ascii(const std::string& path, const Raster& r) {
  auto out = open_out(path);
  write_raster_ascii(out, r);
}

Raster read_raster_ascii(std::istream& in) {
  std::map<std::string, std::string> header;
  static const char* keys[] = {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize",
                               "nodata_value"};
  for (int k = 0; k < 6; ++k) {
    std::string key, value;
    if (!(in >> key >> value)) throw IoError("ESRI ASCII: truncated header");
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    header[key] = value;
  }
  for (const char* k : keys)
    if (!header.count(k)) throw IoError(std::string("ESRI ASCII: missing header key ") + k);
  const long ncols = std::stol(header["ncols"]);
  const long nrows = std::stol(header["nrows"]);
  const double xll = parse_double(header["xllcorner"], "xllcorner");
  const double yll = parse_double(header["yllcorner"], "yllcorner");
  const double cs = parse_double(header["cellsize"], "cellsize");
  const double nodata = parse_double(header["nodata_value"], "NODATA_value");
  if (!(cs > 0.0)) throw IoError("ESRI ASCII: cellsize must be positive");
  const Grid grid = build_grid(
      {xll, xll + cs * static_cast<double>(ncols), yll, yll + cs * static_cast<double>(nrows)},
      ncols, nrows);
  Raster r(grid);
  for (long row = 0; row < nrows; ++row) {
    const auto iy = static_cast<std::size_t>(nrows - 1 - row);
    for (long ix = 0; ix < ncols; ++ix) {
      std::string tok;
      if (!(in >> tok)) throw IoError("ESRI ASCII: fewer values than ncols*nrows");
      const double v = parse_double(tok, "ESRI ASCII value");
      r[grid.index(static_cast<std::size_t>(ix), iy)] =
          v == nodata ? std::numeric_limits<double>::quiet_NaN() : v;
    }
  }
  return r;
}

Raster read_raster_ascii(const std::string& path) {
  auto in = open_in(path);
  return read_raster_ascii(in);
}

namespace {
bool is_ascii_path(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".asc") == 0;
}
}  // namespace

Raster read_raster(const std::string& path, const std::optional<Grid>& grid_hint) {
  return is_ascii_path(path) ? read_raster_ascii(path) : read_raster_csv(path, grid_hint);
}

void write_raster(const std::string& path, const Raster& r) {
  if (is_ascii_path(path))
    write_raster_ascii(path, r);
  else
    write_raster_csv(path, r);
}

}  // namespace udfit
