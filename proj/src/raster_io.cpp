#include "featmetric/raster_io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace featmetric {

static_assert(std::endian::native == std::endian::little,
              "PFM/checkpoint I/O assumes a little-endian host");

namespace {

void skip_pnm_whitespace(std::istream& in) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.ignore();
    } else {
      break;
    }
  }
}

}  // namespace

void write_pfm(const std::string& path, const RasterMap& map) {
  if (map.channels() != 1 && map.channels() != 3)
    throw ShapeMismatch("write_pfm: PFM supports 1 or 3 channels");
  if (map.empty()) throw ShapeMismatch("write_pfm: empty map");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pfm: cannot open " + path);
  out << (map.channels() == 3 ? "PF" : "Pf") << "\n"
      << map.width() << " " << map.height() << "\n"
      << "-1.0" << "\n";
  const int w = map.width();
  const int nc = map.channels();
  std::vector<float> row(static_cast<size_t>(w) * nc);
  for (int y = map.height() - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < nc; ++c)
        row[static_cast<size_t>(x) * nc + c] = static_cast<float>(map.at(x, y, c));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw IoError("write_pfm: write failed for " + path);
}

RasterMap read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_pfm: cannot open " + path);
  std::string magic;
  in >> magic;
  int nc;
  if (magic == "PF")
    nc = 3;
  else if (magic == "Pf")
    nc = 1;
  else
    throw ParseError("read_pfm: bad magic in " + path);
  int w = 0, h = 0;
  double scale = 0.0;
  skip_pnm_whitespace(in);
  in >> w;
  skip_pnm_whitespace(in);
  in >> h;
  skip_pnm_whitespace(in);
  in >> scale;
  if (!in || w <= 0 || h <= 0) throw ParseError("read_pfm: malformed header in " + path);
  if (scale >= 0.0) throw ParseError("read_pfm: big-endian PFM not supported: " + path);
  in.ignore();  // single whitespace byte before the raster
  RasterMap map(w, h, nc);
  std::vector<float> row(static_cast<size_t>(w) * nc);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw ParseError("read_pfm: truncated data in " + path);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < nc; ++c)
        map.at(x, y, c) = row[static_cast<size_t>(x) * nc + c];
  }
  if (!map.all_finite()) throw ParseError("read_pfm: non-finite values in " + path);
  return map;
}

void write_pgm(const std::string& path, const RasterMap& map) {
  if (map.channels() != 1) throw ShapeMismatch("write_pgm: PGM is single-channel");
  if (map.empty()) throw ShapeMismatch("write_pgm: empty map");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pgm: cannot open " + path);
  out << "P5\n" << map.width() << " " << map.height() << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(map.width()));
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      double v = std::lround(map.at(x, y));
      row[static_cast<size_t>(x)] =
          static_cast<unsigned char>(std::min(255.0, std::max(0.0, v)));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("write_pgm: write failed for " + path);
}

RasterMap read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_pgm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw ParseError("read_pgm: bad magic in " + path);
  int w = 0, h = 0, maxval = 0;
  skip_pnm_whitespace(in);
  in >> w;
  skip_pnm_whitespace(in);
  in >> h;
  skip_pnm_whitespace(in);
  in >> maxval;
  if (!in || w <= 0 || h <= 0) throw ParseError("read_pgm: malformed header in " + path);
  if (maxval != 255) throw ParseError("read_pgm: only maxval 255 supported: " + path);
  in.ignore();
  RasterMap map(w, h, 1);
  std::vector<unsigned char> row(static_cast<size_t>(w));
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw ParseError("read_pgm: truncated data in " + path);
    for (int x = 0; x < w; ++x) map.at(x, y) = row[static_cast<size_t>(x)];
  }
  return map;
}

namespace {

bool needs_quotes(const std::string& field) {
  return field.find_first_of(",\"\n\r") != std::string::npos;
}

std::string quote_field(const std::string& field) {
  if (!needs_quotes(field)) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

void write_csv(const std::string& path, const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_csv: cannot open " + path);
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << quote_field(row[i]);
    }
    out << '\n';
  }
  if (!out) throw IoError("write_csv: write failed for " + path);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_csv: cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_has_content = false;
  int c;
  while ((c = in.get()) != EOF) {
    char ch = static_cast<char>(c);
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.ignore();
        } else {
          in_quotes = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    if (ch == '"') {
      in_quotes = true;
      row_has_content = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
      row_has_content = true;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && in.peek() == '\n') in.ignore();
      if (row_has_content || !field.empty()) {
        row.push_back(std::move(field));
        field.clear();
        rows.push_back(std::move(row));
        row.clear();
        row_has_content = false;
      }
    } else {
      field += ch;
      row_has_content = true;
    }
  }
  if (in_quotes) throw ParseError("read_csv: unterminated quote in " + path);
  if (row_has_content || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace featmetric
