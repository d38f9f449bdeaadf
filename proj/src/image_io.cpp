#include "buildiff/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "buildiff/error.hpp"

namespace buildiff {

void write_pgm(const std::filesystem::path& path, const SilhouetteImage& image) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot write " + path.string());
  os << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
  for (double p : image.pixels()) {
    const auto v = static_cast<unsigned char>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0));
    os.put(static_cast<char>(v));
  }
  if (!os) throw InputError("failed writing " + path.string());
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string token(std::istream& is) {
  std::string tok;
  while (true) {
    const int c = is.get();
    if (c == EOF) return tok;
    if (c == '#' && tok.empty()) {
      std::string rest;
      std::getline(is, rest);
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
}

}  // namespace

SilhouetteImage read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open image " + path.string());
  const auto magic = token(is);
  if (magic != "P5" && magic != "P2") throw InputError(path.string() + ": not a PGM image");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token(is));
    h = std::stoul(token(is));
    maxval = std::stoul(token(is));
  } catch (const std::exception&) {
    throw InputError(path.string() + ": malformed PGM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255)
    throw InputError(path.string() + ": unsupported PGM dimensions or depth");
  std::vector<double> pixels(w * h);
  for (auto& p : pixels) {
    int v = 0;
    if (magic == "P5") {
      v = is.get();
      if (v == EOF) throw InputError(path.string() + ": truncated pixel data");
    } else if (!(is >> v)) {
      throw InputError(path.string() + ": truncated pixel data");
    }
    p = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return SilhouetteImage(w, h, std::move(pixels));
}

}  // namespace buildiff
