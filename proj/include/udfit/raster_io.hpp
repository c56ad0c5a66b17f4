#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "udfit/geometry.hpp"

namespace udfit {

// Formats a double with 17 significant digits ("NA" for NaN) so that a
// read-back reproduces the value bit for bit.
std::string format_double(double v);
double parse_double(const std::string& text, const std::string& context);

// CSV with header `x,y,value`, one row per cell center, missing as NA.
void write_raster_csv(std::ostream& out, const Raster& r);
void write_raster_csv(const std::string& path, const Raster& r);

// The grid is inferred from the cell centers. A one-cell-wide axis needs
// `grid_hint` (or square cells are assumed when the other axis has >= 2
// cells).
Raster read_raster_csv(std::istream& in, const std::optional<Grid>& grid_hint = std::nullopt);
Raster read_raster_csv(const std::string& path,
                       const std::optional<Grid>& grid_hint = std::nullopt);

// ESRI ASCII grid. Rows run north to south. Only square cells are
// representable; NaN is written as NODATA_value.
inline constexpr double kAsciiNoData = -9999.0;
void write_raster_ascii(std::ostream& out, const Raster& r);
void write_raster_ascii(const std::string& path, const Raster& r);
Raster read_raster_ascii(std::istream& in);
Raster read_raster_ascii(const std::string& path);

// Dispatches on extension: `.asc` is ESRI ASCII, anything else CSV.
Raster read_raster(const std::string& path, const std::optional<Grid>& grid_hint = std::nullopt);
void write_raster(const std::string& path, const Raster& r);

}  // namespace udfit
