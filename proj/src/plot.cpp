#include "riskcast/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "riskcast/common.hpp"

namespace riskcast::plot {

namespace {

constexpr int kWidth = 800;
constexpr int kHeight = 400;
constexpr int kMarginLeft = 52;
constexpr int kMarginRight = 16;
constexpr int kMarginTop = 28;
constexpr int kMarginBottom = 40;

struct Layout {
  int frames;
  double x_of(int frame) const {
    const double span = kWidth - kMarginLeft - kMarginRight;
    return kMarginLeft + span * (frames > 1 ? static_cast<double>(frame) / (frames - 1) : 0.5);
  }
  double y_of(double score) const {
    const double span = kHeight - kMarginTop - kMarginBottom;
    return kMarginTop + span * (1.0 - score);
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

void write_svg(const std::string& path, const std::string& title,
               const Eigen::VectorXd& scores, double threshold, int tau) {
  const Layout lay{static_cast<int>(scores.size())};
  std::ofstream out(path);
  if (!out) throw InputError("cannot write image: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << kMarginLeft << "\" y=\"18\" font-family=\"monospace\" font-size=\"13\">"
      << title << "</text>\n";
  // Axes.
  out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << fmt(lay.y_of(0.0)) << "\" x2=\""
      << kWidth - kMarginRight << "\" y2=\"" << fmt(lay.y_of(0.0))
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << fmt(lay.y_of(0.0)) << "\" x2=\""
      << kMarginLeft << "\" y2=\"" << fmt(lay.y_of(1.0))
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double s = tick / 4.0;
    out << "<text x=\"8\" y=\"" << fmt(lay.y_of(s) + 4) << "\" font-family=\"monospace\" "
        << "font-size=\"11\">" << fmt(s) << "</text>\n";
  }
  out << "<text x=\"" << (kWidth / 2 - 20) << "\" y=\"" << kHeight - 10
      << "\" font-family=\"monospace\" font-size=\"11\">frame</text>\n";
  // Threshold line.
  out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << fmt(lay.y_of(threshold)) << "\" x2=\""
      << kWidth - kMarginRight << "\" y2=\"" << fmt(lay.y_of(threshold))
      << "\" stroke=\"#1f77b4\" stroke-width=\"1\" stroke-dasharray=\"6,4\"/>\n";
  // Accident-frame marker (tau is 1-based).
  if (tau >= 1 && tau <= lay.frames) {
    out << "<line x1=\"" << fmt(lay.x_of(tau - 1)) << "\" y1=\"" << fmt(lay.y_of(0.0))
        << "\" x2=\"" << fmt(lay.x_of(tau - 1)) << "\" y2=\"" << fmt(lay.y_of(1.0))
        << "\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n";
  }
  // Risk curve.
  out << "<polyline fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"2\" points=\"";
  for (int f = 0; f < lay.frames; ++f) {
    if (f) out << " ";
    out << fmt(lay.x_of(f)) << "," << fmt(lay.y_of(std::clamp(scores[f], 0.0, 1.0)));
  }
  out << "\"/>\n</svg>\n";
  if (!out) throw InputError("write failed: " + path);
}

// --- minimal PNG encoder (stored deflate blocks) ---------------------------

std::uint32_t crc32_of(const unsigned char* data, std::size_t len, std::uint32_t seed) {
  static std::uint32_t table[256];
  static bool ready = false;
  if (!ready) {
    for (std::uint32_t n = 0; n < 256; ++n) {
      std::uint32_t c = n;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      table[n] = c;
    }
    ready = true;
  }
  std::uint32_t c = seed ^ 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xff] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

void put_be32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

void chunk(std::vector<unsigned char>& out, const char* type,
           const std::vector<unsigned char>& payload) {
  put_be32(out, static_cast<std::uint32_t>(payload.size()));
  std::vector<unsigned char> body(type, type + 4);
  body.insert(body.end(), payload.begin(), payload.end());
  out.insert(out.end(), body.begin(), body.end());
  put_be32(out, crc32_of(body.data(), body.size(), 0));
}

class Raster {
 public:
  Raster(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h * 3, 255) {}

  void set(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    const std::size_t i = (static_cast<std::size_t>(y) * w_ + x) * 3;
    px_[i] = r;
    px_[i + 1] = g;
    px_[i + 2] = b;
  }

  void line(int x0, int y0, int x1, int y1, unsigned char r, unsigned char g, unsigned char b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, r, g, b);
      set(x0 + 1, y0, r, g, b);  // 2px stroke
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void write_png(const std::string& path) const {
    // Raw scanlines with filter byte 0.
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<std::size_t>(h_) * (w_ * 3 + 1));
    for (int y = 0; y < h_; ++y) {
      raw.push_back(0);
      const unsigned char* row = px_.data() + static_cast<std::size_t>(y) * w_ * 3;
      raw.insert(raw.end(), row, row + w_ * 3);
    }
    // zlib stream with stored (uncompressed) deflate blocks.
    std::vector<unsigned char> z;
    z.push_back(0x78);
    z.push_back(0x01);
    std::size_t at = 0;
    while (at < raw.size()) {
      const std::size_t n = std::min<std::size_t>(65535, raw.size() - at);
      const bool last = at + n == raw.size();
      z.push_back(last ? 1 : 0);
      z.push_back(static_cast<unsigned char>(n & 0xff));
      z.push_back(static_cast<unsigned char>(n >> 8));
      z.push_back(static_cast<unsigned char>(~n & 0xff));
      z.push_back(static_cast<unsigned char>((~n >> 8) & 0xff));
      z.insert(z.end(), raw.begin() + at, raw.begin() + at + n);
      at += n;
    }
    std::uint32_t a = 1, b = 0;
    for (unsigned char c : raw) {
      a = (a + c) % 65521;
      b = (b + a) % 65521;
    }
    put_be32(z, (b << 16) | a);

    std::vector<unsigned char> png = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<unsigned char> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(w_));
    put_be32(ihdr, static_cast<std::uint32_t>(h_));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    chunk(png, "IHDR", ihdr);
    chunk(png, "IDAT", z);
    chunk(png, "IEND", {});

    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write image: " + path);
    out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
    if (!out) throw InputError("write failed: " + path);
  }

 private:
  int w_, h_;
  std::vector<unsigned char> px_;
};

void write_png_curve(const std::string& path, const Eigen::VectorXd& scores, double threshold,
                     int tau) {
  const Layout lay{static_cast<int>(scores.size())};
  Raster img(kWidth, kHeight);
  // Axes.
  img.line(kMarginLeft, static_cast<int>(lay.y_of(0.0)), kWidth - kMarginRight,
           static_cast<int>(lay.y_of(0.0)), 0, 0, 0);
  img.line(kMarginLeft, static_cast<int>(lay.y_of(0.0)), kMarginLeft,
           static_cast<int>(lay.y_of(1.0)), 0, 0, 0);
  // Threshold (dashed).
  const int ty = static_cast<int>(lay.y_of(threshold));
  for (int x = kMarginLeft; x < kWidth - kMarginRight; x += 10)
    img.line(x, ty, std::min(x + 5, kWidth - kMarginRight), ty, 31, 119, 180);
  if (tau >= 1 && tau <= lay.frames) {
    const int tx = static_cast<int>(lay.x_of(tau - 1));
    img.line(tx, static_cast<int>(lay.y_of(0.0)), tx, static_cast<int>(lay.y_of(1.0)), 214, 39, 40);
  }
  for (int f = 0; f + 1 < lay.frames; ++f) {
    img.line(static_cast<int>(lay.x_of(f)),
             static_cast<int>(lay.y_of(std::clamp(scores[f], 0.0, 1.0))),
             static_cast<int>(lay.x_of(f + 1)),
             static_cast<int>(lay.y_of(std::clamp(scores[f + 1], 0.0, 1.0))), 44, 160, 44);
  }
  img.write_png(path);
}

}  // namespace

void write_curve(const std::string& path, const std::string& title,
                 const Eigen::VectorXd& scores, double threshold, int tau) {
  if (scores.size() == 0) throw InputError("write_curve: empty score sequence");
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".png") {
    write_png_curve(path, scores, threshold, tau);
  } else if (path.size() >= 4 && path.substr(path.size() - 4) == ".svg") {
    write_svg(path, title, scores, threshold, tau);
  } else {
    throw InputError("write_curve: unsupported image extension (use .svg or .png): " + path);
  }
}

}  // namespace riskcast::plot
