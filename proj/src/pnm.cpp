#include "cdkit/pnm.hpp"

#include <cstdio>
#include <fstream>

#include "cdkit/errors.hpp"

namespace cdkit::io {

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) continue;
    tok.push_back(char(c));
    while ((c = in.get()) != EOF && !std::isspace(c) && c != '#') tok.push_back(char(c));
    if (c == '#') in.unget();
    return tok;
  }
  throw IoError("truncated header in " + path);
}

int parse_dim(const std::string& tok, const std::string& what, const std::string& path) {
  try {
    size_t pos = 0;
    long v = std::stol(tok, &pos);
    if (pos != tok.size() || v <= 0 || v > 1 << 20)
      throw IoError("bad " + what + " '" + tok + "' in " + path);
    return int(v);
  } catch (const IoError&) {
    throw;
  } catch (...) {
    throw IoError("bad " + what + " '" + tok + "' in " + path);
  }
}

void read_header(std::istream& in, const std::string& magic, const std::string& path, int& h,
                 int& w) {
  std::string m = next_token(in, path);
  if (m != magic) throw IoError("expected " + magic + " magic in " + path + ", got '" + m + "'");
  w = parse_dim(next_token(in, path), "width", path);
  h = parse_dim(next_token(in, path), "height", path);
  int maxval = parse_dim(next_token(in, path), "maxval", path);
  if (maxval != 255) throw IoError("unsupported maxval " + std::to_string(maxval) + " in " + path);
  // Exactly one whitespace byte separates the header from the payload.
}

}  // namespace

void write_ppm(const std::string& path, const ImageRGB& img) {
  if (img.h <= 0 || img.w <= 0 || img.data.size() != size_t(img.h) * img.w * 3)
    throw IoError("refusing to write malformed image to " + path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), std::streamsize(img.data.size()));
  if (!out) throw IoError("short write to " + path);
}

ImageRGB read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  int h = 0, w = 0;
  read_header(in, "P6", path, h, w);
  ImageRGB img = ImageRGB::zeros(h, w);
  in.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size()));
  if (in.gcount() != std::streamsize(img.data.size()))
    throw IoError("truncated pixel data in " + path);
  return img;
}

void write_pgm(const std::string& path, const grid::ChangeMask& mask) {
  if (mask.h <= 0 || mask.w <= 0 || mask.values.size() != size_t(mask.h) * mask.w)
    throw IoError("refusing to write malformed mask to " + path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "P5\n" << mask.w << " " << mask.h << "\n255\n";
  std::vector<uint8_t> bytes(mask.values.size());
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.values[i] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

grid::ChangeMask read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  int h = 0, w = 0;
  read_header(in, "P5", path, h, w);
  std::vector<uint8_t> bytes(size_t(h) * w);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (in.gcount() != std::streamsize(bytes.size()))
    throw IoError("truncated pixel data in " + path);
  grid::ChangeMask mask = grid::ChangeMask::zeros(h, w);
  for (size_t i = 0; i < bytes.size(); ++i) mask.values[i] = bytes[i] ? 1 : 0;
  return mask;
}

}  // namespace cdkit::io
