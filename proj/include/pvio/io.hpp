#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pvio/eval.hpp"
#include "pvio/image.hpp"
#include "pvio/imu.hpp"

namespace pvio {

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};
struct IoFailure : std::runtime_error {
  explicit IoFailure(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Config: `[section]` headers, `key = value` entries, `#` comments.

struct ConfigSection {
  std::string name;
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
    return nullptr;
  }
};

struct ConfigFile {
  std::vector<ConfigSection> sections;

  const ConfigSection* find(const std::string& name) const {
    for (const ConfigSection& s : sections)
      if (s.name == name) return &s;
    return nullptr;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline ConfigFile parse_config(std::istream& in) {
  ConfigFile cfg;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = detail::trim(raw);
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = detail::trim(line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ParseError("config line " + std::to_string(lineno) + ": malformed section header");
      cfg.sections.push_back({detail::trim(line.substr(1, line.size() - 2)), {}});
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
    if (cfg.sections.empty())
      throw ParseError("config line " + std::to_string(lineno) + ": entry before any [section]");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ParseError("config line " + std::to_string(lineno) + ": empty key or value");
    cfg.sections.back().entries.push_back({key, val});
  }
  return cfg;
}

inline ConfigFile parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open config " + path);
  return parse_config(in);
}

inline double config_double(const std::string& v) {
  size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ParseError("not a number: '" + v + "'");
  }
  if (used != v.size()) throw ParseError("not a number: '" + v + "'");
  return d;
}

inline int config_int(const std::string& v) {
  size_t used = 0;
  int i = 0;
  try {
    i = std::stoi(v, &used);
  } catch (const std::exception&) {
    throw ParseError("not an integer: '" + v + "'");
  }
  if (used != v.size()) throw ParseError("not an integer: '" + v + "'");
  return i;
}

inline bool config_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ParseError("not a boolean (expected true/false): '" + v + "'");
}

// ---------------------------------------------------------------------------
// TUM trajectory files: `timestamp tx ty tz qx qy qz qw` per line.

inline void write_tum(std::ostream& out, const Trajectory& traj) {
  char buf[256];
  for (const TrajectoryPose& p : traj) {
    Eigen::Quaterniond q(p.pose.rotation());
    if (q.w() < 0) q.coeffs() = -q.coeffs();  // one representative per rotation
    std::snprintf(buf, sizeof(buf), "%.9f %.6f %.6f %.6f %.9f %.9f %.9f %.9f\n", p.t,
                  p.pose.translation().x(), p.pose.translation().y(), p.pose.translation().z(),
                  q.x(), q.y(), q.z(), q.w());
    out << buf;
  }
}

inline void write_tum_file(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!out) throw IoFailure("cannot write " + path);
  write_tum(out, traj);
}

inline Trajectory read_tum(std::istream& in, const std::string& origin = "trajectory") {
  Trajectory traj;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    std::istringstream ls(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw ParseError(origin + " line " + std::to_string(lineno) + ": expected 8 fields");
    std::string extra;
    if (ls >> extra)
      throw ParseError(origin + " line " + std::to_string(lineno) + ": trailing fields");
    if (!traj.empty() && t <= traj.back().t)
      throw ParseError(origin + " line " + std::to_string(lineno) +
                       ": timestamps not strictly increasing");
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (q.norm() < 1e-9)
      throw ParseError(origin + " line " + std::to_string(lineno) + ": zero quaternion");
    q.normalize();
    traj.push_back({t, Pose(q.toRotationMatrix(), Vec3(tx, ty, tz))});
  }
  return traj;
}

inline Trajectory read_tum_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path);
  return read_tum(in, path);
}

// ---------------------------------------------------------------------------
// IMU stream CSV.

inline constexpr const char* kImuCsvHeader = "t,gx,gy,gz,ax,ay,az";

inline void write_imu_csv(std::ostream& out, const std::vector<ImuSample>& samples) {
  out << kImuCsvHeader << "\n";
  char buf[256];
  for (const ImuSample& s : samples) {
    std::snprintf(buf, sizeof(buf), "%.9f,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f\n", s.timestamp,
                  s.gyro.x(), s.gyro.y(), s.gyro.z(), s.accel.x(), s.accel.y(), s.accel.z());
    out << buf;
  }
}

inline void write_imu_csv_file(const std::string& path, const std::vector<ImuSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + path);
  write_imu_csv(out, samples);
}

inline std::vector<ImuSample> read_imu_csv(std::istream& in,
                                           const std::string& origin = "imu stream") {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kImuCsvHeader)
    throw ParseError(origin + ": missing header '" + kImuCsvHeader + "'");
  std::vector<ImuSample> samples;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty()) continue;
    double f[7];
    std::istringstream ls(line);
    std::string field;
    for (int i = 0; i < 7; ++i) {
      if (!std::getline(ls, field, ','))
        throw ParseError(origin + " line " + std::to_string(lineno) + ": expected 7 fields");
      f[i] = config_double(detail::trim(field));
    }
    if (std::getline(ls, field, ','))
      throw ParseError(origin + " line " + std::to_string(lineno) + ": trailing fields");
    ImuSample s;
    s.timestamp = f[0];
    s.gyro = Vec3(f[1], f[2], f[3]);
    s.accel = Vec3(f[4], f[5], f[6]);
    samples.push_back(s);
  }
  return samples;
}

inline std::vector<ImuSample> read_imu_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path);
  return read_imu_csv(in, path);
}

// ---------------------------------------------------------------------------
// PGM images (binary P5). Intensities live on the [0, 255] scale; a 16-bit
// maxval stores them at 1/257 of a gray level, which keeps quantization well
// below the photometric noise floor.

inline void write_pgm(std::ostream& out, const RasterImage& img, int maxval = 255) {
  out << "P5\n" << img.width() << " " << img.height() << "\n" << maxval << "\n";
  const double scale = maxval / 255.0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const long v = std::lround(std::clamp(img.at(x, y), 0.0, 255.0) * scale);
      if (maxval > 255) out.put(static_cast<char>((v >> 8) & 0xff));  // big-endian
      out.put(static_cast<char>(v & 0xff));
    }
}

inline void write_pgm_file(const std::string& path, const RasterImage& img, int maxval = 255) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + path);
  write_pgm(out, img, maxval);
}

inline RasterImage read_pgm(std::istream& in, const std::string& origin = "pgm") {
  std::string magic;
  in >> magic;
  if (magic != "P5") throw ParseError(origin + ": expected binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (!in || w <= 0 || h <= 0 || (maxval != 255 && maxval != 65535))
    throw ParseError(origin + ": malformed PGM header");
  in.get();  // single whitespace byte after maxval
  const int bytes = maxval > 255 ? 2 : 1;
  const double scale = 255.0 / maxval;
  RasterImage img(w, h);
  std::vector<unsigned char> row(static_cast<size_t>(w) * bytes);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw ParseError(origin + ": truncated pixel data");
    for (int x = 0; x < w; ++x) {
      const int v = bytes == 2 ? (row[2 * x] << 8) | row[2 * x + 1] : row[x];
      img.at(x, y) = v * scale;
    }
  }
  return img;
}

inline RasterImage read_pgm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path);
  return read_pgm(in, path);
}

}  // namespace pvio
