#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

#include "ffloor/errors.hpp"
#include "ffloor/visualize.hpp"

namespace ffloor {

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string general(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

std::string rgb(const Rgb& c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // Degenerate or empty ranges are widened so the mapping stays finite.
  Range padded() const {
    Range r = *this;
    if (!std::isfinite(r.lo)) {
      r.lo = 0.0;
      r.hi = 1.0;
    } else if (r.hi - r.lo <= 0.0) {
      const double pad = std::max(0.5, std::abs(r.lo) * 0.1);
      r.lo -= pad;
      r.hi += pad;
    }
    const double m = (r.hi - r.lo) * 0.04;
    r.lo -= m;
    r.hi += m;
    return r;
  }
  double unit(double v) const { return (v - lo) / (hi - lo); }
};

struct Frame {
  double left, top, width, height;
  double px(double u) const { return left + u * width; }
  double py(double u) const { return top + (1.0 - u) * height; }
};

void header(std::string& s, const SvgOptions& o) {
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(o.width) +
       "\" height=\"" + std::to_string(o.height) + "\" viewBox=\"0 0 " +
       std::to_string(o.width) + " " + std::to_string(o.height) +
       "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(o.width) + "\" height=\"" +
       std::to_string(o.height) + "\" fill=\"white\"/>\n";
}

void text(std::string& s, double x, double y, const std::string& t,
          const char* anchor = "middle", const char* extra = "") {
  s += "<text x=\"" + fixed(x) + "\" y=\"" + fixed(y) + "\" text-anchor=\"" + anchor +
       "\"" + extra + ">" + escape(t) + "</text>\n";
}

void line(std::string& s, double x1, double y1, double x2, double y2,
          const char* stroke = "black", const char* cls = "axis") {
  s += "<line class=\"" + std::string(cls) + "\" x1=\"" + fixed(x1) + "\" y1=\"" + fixed(y1) +
       "\" x2=\"" + fixed(x2) + "\" y2=\"" + fixed(y2) + "\" stroke=\"" + stroke + "\"/>\n";
}

void point(std::string& s, double x, double y, const Rgb& c, double r = 2.2) {
  s += "<circle class=\"pt\" cx=\"" + fixed(x) + "\" cy=\"" + fixed(y) + "\" r=\"" +
       fixed(r, 1) + "\" fill=\"" + rgb(c) + "\" fill-opacity=\"0.75\"/>\n";
}

void annotations(std::string& s, const PlotBundle& b, const SvgOptions& o) {
  std::string title = b.title;
  if (b.gov) title += "  (GOV R² = " + fixed(*b.gov, 3) + ")";
  text(s, o.width / 2.0, 18, title, "middle", " font-size=\"13\"");
  double y = 34;
  for (const auto& [name, color] : b.legend) {
    s += "<rect class=\"legend\" x=\"" + fixed(o.width - 120.0) + "\" y=\"" + fixed(y - 8) +
         "\" width=\"9\" height=\"9\" fill=\"" + rgb(color) + "\"/>\n";
    text(s, o.width - 106.0, y, name, "start");
    y += 14;
  }
  double ny = o.height - 6.0;
  for (auto it = b.notes.rbegin(); it != b.notes.rend(); ++it) {
    text(s, 6, ny, *it, "start", " font-size=\"9\" fill=\"#555555\"");
    ny -= 11;
  }
}

void axes_2d(std::string& s, const Frame& f, const Range& xr, const Range& yr,
             const std::string& xl, const std::string& yl) {
  line(s, f.left, f.top + f.height, f.left + f.width, f.top + f.height);
  line(s, f.left, f.top, f.left, f.top + f.height);
  for (int t = 0; t <= 4; ++t) {
    const double u = t / 4.0;
    const double xv = xr.lo + u * (xr.hi - xr.lo);
    const double yv = yr.lo + u * (yr.hi - yr.lo);
    line(s, f.px(u), f.top + f.height, f.px(u), f.top + f.height + 4);
    text(s, f.px(u), f.top + f.height + 15, general(xv));
    line(s, f.left - 4, f.py(u), f.left, f.py(u));
    text(s, f.left - 6, f.py(u) + 3, general(yv), "end");
  }
  text(s, f.left + f.width / 2.0, f.top + f.height + 32, xl);
  const double cx = 14;
  const double cy = f.top + f.height / 2.0;
  s += "<text x=\"" + fixed(cx) + "\" y=\"" + fixed(cy) +
       "\" text-anchor=\"middle\" transform=\"rotate(-90 " + fixed(cx) + " " + fixed(cy) +
       ")\">" + escape(yl) + "</text>\n";
}

void render_scatter(std::string& s, const PlotBundle& b, const SvgOptions& o) {
  const Frame f{70.0, 40.0, o.width - 110.0, o.height - 100.0};
  Range xr, yr;
  for (const auto& p : b.points) {
    xr.add(p.x);
    yr.add(p.y);
  }
  for (const auto& p : b.overlay) yr.add(p.y);
  xr = xr.padded();
  yr = yr.padded();
  axes_2d(s, f, xr, yr, b.x_label, b.y_label);
  if (yr.lo < 0 && yr.hi > 0)
    line(s, f.left, f.py(yr.unit(0)), f.left + f.width, f.py(yr.unit(0)), "#bbbbbb", "zero");
  for (const auto& p : b.points) point(s, f.px(xr.unit(p.x)), f.py(yr.unit(p.y)), p.color);
  if (!b.overlay.empty()) {
    std::vector<std::size_t> order(b.overlay.size());
    for (std::size_t t = 0; t < order.size(); ++t) order[t] = t;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
      return b.overlay[a].x < b.overlay[c].x;
    });
    s += "<polyline class=\"fit\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"";
    for (std::size_t t = 0; t < order.size(); ++t) {
      const auto& p = b.overlay[order[t]];
      if (t) s += ' ';
      s += fixed(f.px(xr.unit(p.x))) + "," + fixed(f.py(yr.unit(p.y)));
    }
    s += "\"/>\n";
  }
}

void render_simplex(std::string& s, const PlotBundle& b, const SvgOptions& o) {
  const double side = std::min(o.width - 120.0, (o.height - 100.0) * 2.0 / std::sqrt(3.0));
  const double left = (o.width - side) / 2.0;
  const double bottom = o.height - 50.0;
  auto px = [&](double x) { return left + x * side; };
  auto py = [&](double y) { return bottom - y * side; };
  const double h = std::sqrt(3.0) / 2.0;
  s += "<polygon class=\"axis\" fill=\"none\" stroke=\"black\" points=\"" + fixed(px(0)) + "," +
       fixed(py(0)) + " " + fixed(px(1)) + "," + fixed(py(0)) + " " + fixed(px(0.5)) + "," +
       fixed(py(h)) + "\"/>\n";
  text(s, px(0) - 4, py(0) + 14, b.x_label, "end");
  text(s, px(1) + 4, py(0) + 14, b.y_label, "start");
  text(s, px(0.5), py(h) - 6, b.z_label);
  for (const auto& p : b.points) point(s, px(p.x), py(p.y), p.color, 1.8);
  if (b.base_marker) {
    const double cx = px((*b.base_marker)[0]);
    const double cy = py((*b.base_marker)[1]);
    line(s, cx - 6, cy - 6, cx + 6, cy + 6, "blue", "base");
    line(s, cx - 6, cy + 6, cx + 6, cy - 6, "blue", "base");
  }
}

void render_3d(std::string& s, const PlotBundle& b, const SvgOptions& o) {
  Range xr, yr, zr;
  for (const auto& p : b.points) {
    xr.add(p.x);
    yr.add(p.y);
    zr.add(p.z);
  }
  for (const auto& p : b.overlay) zr.add(p.z);
  xr = xr.padded();
  yr = yr.padded();
  zr = zr.padded();
  const double az = o.azimuth_deg * std::numbers::pi / 180.0;
  const double el = o.elevation_deg * std::numbers::pi / 180.0;
  const double scale = std::min(o.width, o.height) * 0.28;
  const double cx = o.width / 2.0;
  const double cy = o.height / 2.0 + 10;
  // Orthographic view: rotate about the vertical axis, then tilt.
  auto project = [&](double x, double y, double z) {
    const double u = 2 * xr.unit(x) - 1;
    const double v = 2 * yr.unit(y) - 1;
    const double w = 2 * zr.unit(z) - 1;
    const double rx = u * std::cos(az) - v * std::sin(az);
    const double ry = u * std::sin(az) + v * std::cos(az);
    const double sy = w * std::cos(el) - ry * std::sin(el);
    return std::array<double, 2>{cx + scale * rx, cy - scale * sy};
  };
  const auto o0 = project(xr.lo, yr.lo, zr.lo);
  const auto ox = project(xr.hi, yr.lo, zr.lo);
  const auto oy = project(xr.lo, yr.hi, zr.lo);
  const auto oz = project(xr.lo, yr.lo, zr.hi);
  line(s, o0[0], o0[1], ox[0], ox[1]);
  line(s, o0[0], o0[1], oy[0], oy[1]);
  line(s, o0[0], o0[1], oz[0], oz[1]);
  text(s, ox[0], ox[1] + 14, b.x_label + " [" + general(xr.lo) + ", " + general(xr.hi) + "]");
  text(s, oy[0], oy[1] + 14, b.y_label + " [" + general(yr.lo) + ", " + general(yr.hi) + "]");
  text(s, oz[0], oz[1] - 6, b.z_label + " [" + general(zr.lo) + ", " + general(zr.hi) + "]");
  for (const auto& p : b.overlay) {
    const auto q = project(p.x, p.y, p.z);
    s += "<rect class=\"fit\" x=\"" + fixed(q[0] - 1) + "\" y=\"" + fixed(q[1] - 1) +
         "\" width=\"2\" height=\"2\" fill=\"#999999\"/>\n";
  }
  for (const auto& p : b.points) {
    const auto q = project(p.x, p.y, p.z);
    point(s, q[0], q[1], p.color, 1.8);
  }
  text(s, o.width - 8.0, o.height - 8.0,
       "azimuth " + fixed(o.azimuth_deg, 0) + ", elevation " + fixed(o.elevation_deg, 0), "end",
       " font-size=\"9\"");
}

}  // namespace

std::string render_svg_string(const PlotBundle& bundle, const SvgOptions& options) {
  std::string s;
  header(s, options);
  s += "<!-- kind: " + std::string(to_string(bundle.kind)) + ", points: " +
       std::to_string(bundle.points.size()) + " -->\n";
  switch (bundle.kind) {
    case PlotKind::main_effect:
    case PlotKind::aligned_class: render_scatter(s, bundle, options); break;
    case PlotKind::simplex: render_simplex(s, bundle, options); break;
    case PlotKind::interaction3d: render_3d(s, bundle, options); break;
  }
  annotations(s, bundle, options);
  s += "</svg>\n";
  return s;
}

void render_svg(const PlotBundle& bundle, const std::string& path, const SvgOptions& options) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write SVG '" + path + "'");
  out << render_svg_string(bundle, options);
  if (!out) throw IoError("write failed for SVG '" + path + "'");
}

void write_bundle_csv(const PlotBundle& bundle, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "row_id,series,x,y,z,r,g,b,fit\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  const bool three_d = bundle.kind == PlotKind::interaction3d;
  for (std::size_t t = 0; t < bundle.points.size(); ++t) {
    const auto& p = bundle.points[t];
    out << p.row << ',' << p.series << ',' << num(p.x) << ',' << num(p.y) << ','
        << num(p.z) << ',' << int(p.color.r) << ',' << int(p.color.g) << ','
        << int(p.color.b) << ',';
    if (t < bundle.overlay.size())
      out << num(three_d ? bundle.overlay[t].z : bundle.overlay[t].y);
    else
      out << "NA";
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace ffloor
