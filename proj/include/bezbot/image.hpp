#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "bezbot/errors.hpp"

namespace bezbot {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // row-major

  static GrayImage zeros(int w, int h) {
    return {w, h, std::vector<uint8_t>(static_cast<std::size_t>(w) * h, 0)};
  }
  uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct BinaryImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // 0 background, 1 foreground

  static BinaryImage zeros(int w, int h) {
    return {w, h, std::vector<uint8_t>(static_cast<std::size_t>(w) * h, 0)};
  }
  uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  std::size_t count() const {
    std::size_t n = 0;
    for (uint8_t p : pixels) n += p != 0;
    return n;
  }
};

// Binary 8-bit PGM (P5).
inline void write_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw IoError("not a P5 PGM file: " + path);
  auto next_int = [&in, &path]() {
    // skip whitespace and '#' comment lines
    int c = in.peek();
    while (c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '#') {
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else {
        in.get();
      }
      c = in.peek();
    }
    int v;
    if (!(in >> v)) throw IoError("malformed PGM header: " + path);
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (maxval != 255) throw IoError("unsupported PGM maxval: " + path);
  in.get();  // single whitespace after maxval
  GrayImage img = GrayImage::zeros(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw IoError("truncated PGM data: " + path);
  return img;
}

}  // namespace bezbot
