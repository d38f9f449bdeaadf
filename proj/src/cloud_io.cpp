#include "buildiff/cloud_io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "buildiff/error.hpp"

namespace buildiff {

namespace {

// Shortest text that round-trips the f32 value.
std::string float_text(double v) {
  const float f = static_cast<float>(v);
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), f);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = {}) {
  std::ofstream os(path, mode | std::ios::trunc);
  if (!os) throw InputError("cannot write " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = {}) {
  std::ifstream is(path, mode);
  if (!is) throw InputError("cannot open " + path.string());
  return is;
}

}  // namespace

void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  auto os = open_out(path);
  os << "ply\nformat ascii 1.0\n";
  if (!cloud.meta().empty()) os << "comment source " << cloud.meta() << "\n";
  os << "element vertex " << cloud.size() << "\n"
     << "property float x\nproperty float y\nproperty float z\nend_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.point(i);
    os << float_text(p[0]) << ' ' << float_text(p[1]) << ' ' << float_text(p[2]) << '\n';
  }
  if (!os) throw InputError("failed writing " + path.string());
}

PointCloud read_ply(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::string line;
  if (!std::getline(is, line) || line != "ply") throw InputError(path.string() + ": not a PLY file");
  std::size_t count = 0;
  bool ascii = false, have_vertex = false;
  std::vector<std::string> props;
  std::string meta;
  bool in_vertex = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (word == "comment") {
      std::string tag;
      if (ls >> tag && tag == "source") std::getline(ls >> std::ws, meta);
    } else if (word == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) {
        ls >> count;
        have_vertex = true;
      }
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  if (!ascii) throw InputError(path.string() + ": only ASCII PLY is supported");
  if (!have_vertex) throw InputError(path.string() + ": no vertex element");
  std::ptrdiff_t ix = -1, iy = -1, iz = -1;
  for (std::size_t k = 0; k < props.size(); ++k) {
    if (props[k] == "x") ix = static_cast<std::ptrdiff_t>(k);
    if (props[k] == "y") iy = static_cast<std::ptrdiff_t>(k);
    if (props[k] == "z") iz = static_cast<std::ptrdiff_t>(k);
  }
  if (ix < 0 || iy < 0 || iz < 0) throw InputError(path.string() + ": missing x/y/z properties");
  std::vector<double> xyz;
  xyz.reserve(count * 3);
  std::vector<double> row(props.size());
  for (std::size_t i = 0; i < count; ++i) {
    for (auto& v : row)
      if (!(is >> v)) throw InputError(path.string() + ": truncated vertex data");
    xyz.push_back(row[static_cast<std::size_t>(ix)]);
    xyz.push_back(row[static_cast<std::size_t>(iy)]);
    xyz.push_back(row[static_cast<std::size_t>(iz)]);
  }
  return PointCloud(std::move(xyz), meta);
}

void write_bpc(const std::filesystem::path& path, const PointCloud& cloud) {
  static_assert(std::endian::native == std::endian::little);
  auto os = open_out(path, std::ios::binary);
  os.write("BPC1", 4);
  const auto n = static_cast<std::uint32_t>(cloud.size());
  os.write(reinterpret_cast<const char*>(&n), 4);
  for (double v : cloud.flat()) {
    const float f = static_cast<float>(v);
    os.write(reinterpret_cast<const char*>(&f), 4);
  }
  if (!os) throw InputError("failed writing " + path.string());
}

PointCloud read_bpc(const std::filesystem::path& path) {
  auto is = open_in(path, std::ios::binary);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "BPC1", 4) != 0)
    throw InputError(path.string() + ": bad BPC1 magic");
  std::uint32_t n = 0;
  if (!is.read(reinterpret_cast<char*>(&n), 4)) throw InputError(path.string() + ": truncated");
  std::vector<float> raw(static_cast<std::size_t>(n) * 3);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4)))
    throw InputError(path.string() + ": truncated point data");
  return PointCloud(std::vector<double>(raw.begin(), raw.end()));
}

void write_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  auto os = open_out(path);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.point(i);
    os << float_text(p[0]) << ' ' << float_text(p[1]) << ' ' << float_text(p[2]) << '\n';
  }
  if (!os) throw InputError("failed writing " + path.string());
}

PointCloud read_xyz(const std::filesystem::path& path) {
  auto is = open_in(path);
  std::vector<double> xyz;
  double v;
  while (is >> v) xyz.push_back(v);
  if (!is.eof() || xyz.size() % 3 != 0) throw InputError(path.string() + ": malformed XYZ data");
  return PointCloud(std::move(xyz));
}

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  const auto ext = path.extension().string();
  if (ext == ".ply") return write_ply(path, cloud);
  if (ext == ".bpc") return write_bpc(path, cloud);
  if (ext == ".xyz") return write_xyz(path, cloud);
  throw InputError("unknown point cloud extension '" + ext + "' for " + path.string());
}

PointCloud read_cloud(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".ply") return read_ply(path);
  if (ext == ".bpc") return read_bpc(path);
  if (ext == ".xyz") return read_xyz(path);
  throw InputError("unknown point cloud extension '" + ext + "' for " + path.string());
}

}  // namespace buildiff
