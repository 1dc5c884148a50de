#pragma once

#include <string>
#include <vector>

#include "featmetric/raster.hpp"

namespace featmetric {

/// PFM: header `Pf` (1 channel) or `PF` (3 channels), dimensions, scale -1.0
/// (little-endian), then float32 rows bottom-to-top. Only 1- and 3-channel
/// maps are supported.
void write_pfm(const std::string& path, const RasterMap& map);
RasterMap read_pfm(const std::string& path);

/// PGM: binary P5, maxval 255. Values are stored as raw bytes, so maps must
/// hold values in [0,255]; read_pgm returns doubles in that range.
void write_pgm(const std::string& path, const RasterMap& map);
RasterMap read_pgm(const std::string& path);

/// RFC-4180 quoting, LF line endings, header row supplied by the caller as
/// rows[0].
void write_csv(const std::string& path, const std::vector<std::vector<std::string>>& rows);
std::vector<std::vector<std::string>> read_csv(const std::string& path);

/// Shortest-roundtrip-ish formatting used for all numeric CSV output ("%.17g").
std::string format_double(double value);

}  // namespace featmetric
