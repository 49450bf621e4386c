#include "sdfrecon/image_io.hpp"

#include "sdfrecon/util.hpp"
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace sdfrecon {

namespace {

void write_pnm(const std::string& path, const ImageU8& img, const char* magic, int channels) {
  if (img.channels != channels)
    throw std::invalid_argument(std::string("write_pnm: image is not ") +
                                (channels == 1 ? "grayscale" : "rgb"));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << magic << "\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), std::streamsize(img.data.size()));
  if (!out) throw IoError("short write: " + path);
}

// Reads a PNM header token, skipping whitespace and '#' comments. Comments
// encountered before the token are returned through `comments`.
std::string next_token(std::istream& in, std::vector<std::string>* comments = nullptr) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      if (comments) comments->push_back(line);
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(char(c));
  }
  if (tok.empty()) throw FormatError("truncated PNM header");
  return tok;
}

struct PnmHeader {
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  std::vector<std::string> comments;
};

PnmHeader read_header(std::istream& in, const std::string& path) {
  PnmHeader h;
  h.magic = next_token(in, &h.comments);
  h.width = std::stoi(next_token(in, &h.comments));
  h.height = std::stoi(next_token(in, &h.comments));
  h.maxval = std::stoi(next_token(in, &h.comments));
  if (h.width <= 0 || h.height <= 0)
    throw FormatError("bad PNM dimensions in " + path);
  return h;
}

ImageU8 read_pnm(const std::string& path, const char* magic, int channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  PnmHeader h = read_header(in, path);
  if (h.magic != magic)
    throw FormatError("expected " + std::string(magic) + " in " + path + ", got " + h.magic);
  if (h.maxval != 255) throw FormatError("unsupported maxval in " + path);
  ImageU8 img;
  img.width = h.width;
  img.height = h.height;
  img.channels = channels;
  img.data.resize(std::size_t(h.width) * h.height * channels);
  in.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size()));
  if (in.gcount() != std::streamsize(img.data.size()))
    throw FormatError("truncated pixel data in " + path);
  return img;
}

}  // namespace

void write_pgm(const std::string& path, const ImageU8& img) { write_pnm(path, img, "P5", 1); }
void write_ppm(const std::string& path, const ImageU8& img) { write_pnm(path, img, "P6", 3); }
ImageU8 read_pgm(const std::string& path) { return read_pnm(path, "P5", 1); }
ImageU8 read_ppm(const std::string& path) { return read_pnm(path, "P6", 3); }

void write_depth_pgm(const std::string& path, const DepthMap& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  char range[128];
  std::snprintf(range, sizeof(range), "# depth_range %.17g %.17g", d.zmin, d.zmax);
  out << "P5\n" << range << "\n" << d.width << " " << d.height << "\n65535\n";
  double span = d.zmax > d.zmin ? d.zmax - d.zmin : 1.0;
  std::vector<uint8_t> raw(std::size_t(d.width) * d.height * 2);
  for (std::size_t i = 0; i < d.depth.size(); ++i) {
    uint16_t v = 0;  // 0 = miss
    if (std::isfinite(d.depth[i])) {
      double s = (d.depth[i] - d.zmin) / span;
      s = s < 0 ? 0 : (s > 1 ? 1 : s);
      v = uint16_t(1 + std::lround(s * 65534.0));
    }
    raw[2 * i] = uint8_t(v >> 8);  // big-endian per Netpbm
    raw[2 * i + 1] = uint8_t(v & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  if (!out) throw IoError("short write: " + path);
}

DepthMap read_depth_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  PnmHeader h = read_header(in, path);
  if (h.magic != "P5" || h.maxval != 65535)
    throw FormatError("not a 16-bit P5 depth map: " + path);
  DepthMap d;
  d.width = h.width;
  d.height = h.height;
  bool have_range = false;
  for (const auto& c : h.comments) {
    std::istringstream ss(c);
    std::string tag;
    if (ss >> tag && tag == "depth_range" && (ss >> d.zmin >> d.zmax)) have_range = true;
  }
  if (!have_range) throw FormatError("depth map missing depth_range comment: " + path);
  std::vector<uint8_t> raw(std::size_t(h.width) * h.height * 2);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (in.gcount() != std::streamsize(raw.size()))
    throw FormatError("truncated pixel data in " + path);
  d.depth.resize(std::size_t(h.width) * h.height);
  double span = d.zmax > d.zmin ? d.zmax - d.zmin : 1.0;
  for (std::size_t i = 0; i < d.depth.size(); ++i) {
    uint16_t v = uint16_t(raw[2 * i]) << 8 | raw[2 * i + 1];
    d.depth[i] = v == 0 ? std::numeric_limits<double>::quiet_NaN()
                        : d.zmin + (v - 1) / 65534.0 * span;
  }
  return d;
}

}  // namespace sdfrecon
