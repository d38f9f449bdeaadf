#include "buildiff/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "buildiff/cloud_io.hpp"
#include "buildiff/error.hpp"
#include "buildiff/image_io.hpp"
#include "buildiff/rng.hpp"

namespace buildiff {

using nlohmann::json;

std::string to_string(RoofType r) {
  switch (r) {
    case RoofType::kFlat: return "flat";
    case RoofType::kGable: return "gable";
    case RoofType::kHip: return "hip";
  }
  return "?";
}

RoofType parse_roof_type(const std::string& s) {
  if (s == "flat") return RoofType::kFlat;
  if (s == "gable") return RoofType::kGable;
  if (s == "hip") return RoofType::kHip;
  throw std::invalid_argument("unknown roof type '" + s + "'");
}

std::string to_string(FootprintShape f) {
  return f == FootprintShape::kRectangle ? "rectangle" : "l-shape";
}

FootprintShape parse_footprint(const std::string& s) {
  if (s == "rectangle") return FootprintShape::kRectangle;
  if (s == "l-shape") return FootprintShape::kLShape;
  throw std::invalid_argument("unknown footprint '" + s + "'");
}

std::string to_string(RoofClass r) { return r == RoofClass::kFlat ? "flat" : "gable"; }

void BuildingSpec::validate() const {
  if (!(width > 0.0 && depth > 0.0 && wall_height > 0.0))
    throw std::invalid_argument("building: dimensions must be positive");
  if (roof_pitch < 0.0) throw std::invalid_argument("building: negative roof pitch");
  if (roof == RoofType::kFlat && roof_pitch != 0.0)
    throw std::invalid_argument("building: flat roofs have pitch 0");
  if (roof != RoofType::kFlat && roof_pitch <= 0.0)
    throw std::invalid_argument("building: pitched roof needs a positive pitch");
  if (footprint == FootprintShape::kLShape) {
    if (!(notch_width > 0.0 && notch_width < width && notch_depth > 0.0 && notch_depth < depth))
      throw std::invalid_argument("building: degenerate L-shaped footprint");
    if (roof != RoofType::kFlat)
      throw std::invalid_argument("building: L-shaped footprints support flat roofs only");
  }
  if (roof == RoofType::kHip && width < depth)
    throw std::invalid_argument("building: hip roofs need width >= depth");
}

double Mesh::face_area(std::size_t f) const {
  const auto& a = vertices[faces[f][0]];
  const auto& b = vertices[faces[f][1]];
  const auto& c = vertices[faces[f][2]];
  const Point3 u{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const Point3 v{c[0] - a[0], c[1] - a[1], c[2] - a[2]};
  const Point3 n{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
  return 0.5 * std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
}

double Mesh::area() const {
  double s = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) s += face_area(f);
  return s;
}

namespace {

// Floor, flat roof and walls for a counter-clockwise footprint polygon with
// a given triangulation.
Mesh extrude(const std::vector<std::array<double, 2>>& poly,
             const std::vector<std::array<std::size_t, 3>>& tris, double height) {
  Mesh m;
  const std::size_t n = poly.size();
  for (const auto& p : poly) m.vertices.push_back({p[0], p[1], 0.0});
  for (const auto& p : poly) m.vertices.push_back({p[0], p[1], height});
  for (const auto& t : tris) {
    m.faces.push_back({t[0], t[2], t[1]});
    m.faces.push_back({n + t[0], n + t[1], n + t[2]});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    m.faces.push_back({i, j, n + j});
    m.faces.push_back({i, n + j, n + i});
  }
  return m;
}

Mesh gable(const BuildingSpec& s) {
  const double w = s.width, d = s.depth, h = s.wall_height;
  const double top = h + s.roof_pitch * d / 2.0;
  Mesh m;
  m.vertices = {{0, 0, 0}, {w, 0, 0}, {w, d, 0}, {0, d, 0},     // b0..b3
                {0, 0, h}, {w, 0, h}, {w, d, h}, {0, d, h},     // t0..t3
                {0, d / 2, top}, {w, d / 2, top}};              // r0, r1
  enum { b0, b1, b2, b3, t0, t1, t2, t3, r0, r1 };
  m.faces = {{b0, b2, b1}, {b0, b3, b2},                        // floor
             {b0, b1, t1}, {b0, t1, t0}, {b2, b3, t3}, {b2, t3, t2},  // eave walls
             {b1, b2, t2}, {b1, t2, t1}, {t1, t2, r1},          // gable end x = w
             {b3, b0, t0}, {b3, t0, t3}, {t3, t0, r0},          // gable end x = 0
             {t0, t1, r1}, {t0, r1, r0}, {t2, t3, r0}, {t2, r0, r1}};  // slopes
  return m;
}

Mesh hip(const BuildingSpec& s) {
  const double w = s.width, d = s.depth, h = s.wall_height;
  const double top = h + s.roof_pitch * d / 2.0;
  Mesh m;
  m.vertices = {{0, 0, 0}, {w, 0, 0}, {w, d, 0}, {0, d, 0}, {0, 0, h}, {w, 0, h}, {w, d, h}, {0, d, h}};
  enum { b0, b1, b2, b3, t0, t1, t2, t3 };
  m.faces = {{b0, b2, b1}, {b0, b3, b2}};
  const std::size_t corners[4][2] = {{b0, b1}, {b1, b2}, {b2, b3}, {b3, b0}};
  for (const auto& e : corners) {
    m.faces.push_back({e[0], e[1], e[1] + 4});
    m.faces.push_back({e[0], e[1] + 4, e[0] + 4});
  }
  if (w - d < 1e-9) {
    // Square footprint: pyramid with a single apex.
    m.vertices.push_back({w / 2, d / 2, top});
    const std::size_t apex = 8;
    m.faces.insert(m.faces.end(), {{t0, t1, apex}, {t1, t2, apex}, {t2, t3, apex}, {t3, t0, apex}});
    return m;
  }
  m.vertices.push_back({d / 2, d / 2, top});
  m.vertices.push_back({w - d / 2, d / 2, top});
  const std::size_t r0 = 8, r1 = 9;
  m.faces.insert(m.faces.end(), {{t0, t1, r1}, {t0, r1, r0},    // front trapezoid
                                 {t2, t3, r0}, {t2, r0, r1},    // back trapezoid
                                 {t1, t2, r1}, {t3, t0, r0}});  // hip ends
  return m;
}

}  // namespace

Mesh generate_building(const BuildingSpec& spec) {
  spec.validate();
  const double w = spec.width, d = spec.depth;
  switch (spec.roof) {
    case RoofType::kGable: return gable(spec);
    case RoofType::kHip: return hip(spec);
    case RoofType::kFlat: break;
  }
  if (spec.footprint == FootprintShape::kRectangle)
    return extrude({{0, 0}, {w, 0}, {w, d}, {0, d}}, {{0, 1, 2}, {0, 2, 3}}, spec.wall_height);
  const double w1 = w - spec.notch_width, d1 = d - spec.notch_depth;
  // Fan from the reflex corner (index 3).
  return extrude({{0, 0}, {w, 0}, {w, d1}, {w1, d1}, {w1, d}, {0, d}},
                 {{3, 4, 5}, {3, 5, 0}, {3, 0, 1}, {3, 1, 2}}, spec.wall_height);
}

bool is_watertight(const Mesh& mesh) {
  std::map<std::pair<std::size_t, std::size_t>, int> directed;
  for (const auto& f : mesh.faces)
    for (int k = 0; k < 3; ++k) ++directed[{f[k], f[(k + 1) % 3]}];
  for (const auto& [edge, count] : directed) {
    if (count != 1) return false;
    auto it = directed.find({edge.second, edge.first});
    if (it == directed.end() || it->second != 1) return false;
  }
  return !mesh.faces.empty();
}

SurfaceSample sample_surface_raw(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample_surface: need at least one point");
  if (mesh.faces.empty()) throw std::invalid_argument("sample_surface: empty mesh");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += mesh.face_area(f);
    cumulative[f] = total;
  }
  if (!(total > 0.0)) throw std::invalid_argument("sample_surface: mesh has zero area");

  Rng rng(seed);
  SurfaceSample out;
  std::vector<double> xyz;
  xyz.reserve(3 * n);
  out.faces.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = rng.uniform() * total;
    auto f = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), r) -
                                      cumulative.begin());
    f = std::min(f, mesh.faces.size() - 1);
    double u = rng.uniform(), v = rng.uniform();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const auto& a = mesh.vertices[mesh.faces[f][0]];
    const auto& b = mesh.vertices[mesh.faces[f][1]];
    const auto& c = mesh.vertices[mesh.faces[f][2]];
    for (int k = 0; k < 3; ++k) xyz.push_back(a[k] + u * (b[k] - a[k]) + v * (c[k] - a[k]));
    out.faces.push_back(f);
  }
  out.points = PointCloud(std::move(xyz));
  return out;
}

PointCloud sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
  return normalize_unit_cube(sample_surface_raw(mesh, n, seed).points).cloud;
}

SilhouetteImage render_silhouette(const Mesh& mesh, const ViewDirection& view,
                                  std::size_t resolution) {
  if (resolution < 8) throw std::invalid_argument("render_silhouette: resolution must be >= 8");
  if (mesh.faces.empty()) throw std::invalid_argument("render_silhouette: empty mesh");
  const double az = view.azimuth_deg * std::numbers::pi / 180.0;
  const double el = view.elevation_deg * std::numbers::pi / 180.0;
  // Direction towards the camera, image right and image up.
  const Point3 dir{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
  const Point3 right{-std::sin(az), std::cos(az), 0.0};
  const Point3 up{dir[1] * right[2] - dir[2] * right[1], dir[2] * right[0] - dir[0] * right[2],
                  dir[0] * right[1] - dir[1] * right[0]};

  std::vector<std::array<double, 2>> proj;
  double lo_u = 1e300, hi_u = -1e300, lo_v = 1e300, hi_v = -1e300;
  for (const auto& p : mesh.vertices) {
    const double u = p[0] * right[0] + p[1] * right[1] + p[2] * right[2];
    const double v = p[0] * up[0] + p[1] * up[1] + p[2] * up[2];
    proj.push_back({u, v});
    lo_u = std::min(lo_u, u);
    hi_u = std::max(hi_u, u);
    lo_v = std::min(lo_v, v);
    hi_v = std::max(hi_v, v);
  }
  const double extent = std::max(hi_u - lo_u, hi_v - lo_v);
  const double res = static_cast<double>(resolution);
  const double px_per_unit = extent > 0.0 ? 0.9 * res / extent : 1.0;
  const double cu = 0.5 * (lo_u + hi_u), cv = 0.5 * (lo_v + hi_v);
  for (auto& q : proj) {
    q[0] = (q[0] - cu) * px_per_unit + 0.5 * res;
    q[1] = 0.5 * res - (q[1] - cv) * px_per_unit;  // image y grows downwards
  }

  constexpr std::size_t kSub = 4;
  std::vector<unsigned char> covered(resolution * resolution * kSub * kSub, 0);
  auto edge = [](const std::array<double, 2>& a, const std::array<double, 2>& b, double x, double y) {
    return (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
  };
  for (const auto& f : mesh.faces) {
    const auto& a = proj[f[0]];
    const auto& b = proj[f[1]];
    const auto& c = proj[f[2]];
    const double area = edge(a, b, c[0], c[1]);
    if (std::abs(area) < 1e-12) continue;  // edge-on face
    const auto x0 = static_cast<std::ptrdiff_t>(std::floor(std::min({a[0], b[0], c[0]})));
    const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(std::max({a[0], b[0], c[0]})));
    const auto y0 = static_cast<std::ptrdiff_t>(std::floor(std::min({a[1], b[1], c[1]})));
    const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(std::max({a[1], b[1], c[1]})));
    const auto last = static_cast<std::ptrdiff_t>(resolution) - 1;
    for (auto py = std::max<std::ptrdiff_t>(0, y0); py <= std::min(last, y1); ++py)
      for (auto px = std::max<std::ptrdiff_t>(0, x0); px <= std::min(last, x1); ++px)
        for (std::size_t sy = 0; sy < kSub; ++sy)
          for (std::size_t sx = 0; sx < kSub; ++sx) {
            const double x = static_cast<double>(px) + (static_cast<double>(sx) + 0.5) / kSub;
            const double y = static_cast<double>(py) + (static_cast<double>(sy) + 0.5) / kSub;
            const double e0 = edge(a, b, x, y), e1 = edge(b, c, x, y), e2 = edge(c, a, x, y);
            const bool inside = area > 0 ? (e0 >= 0 && e1 >= 0 && e2 >= 0)
                                         : (e0 <= 0 && e1 <= 0 && e2 <= 0);
            if (inside)
              covered[((static_cast<std::size_t>(py) * resolution + static_cast<std::size_t>(px)) *
                           kSub + sy) * kSub + sx] = 1;
          }
  }
  std::vector<double> pixels(resolution * resolution);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    std::size_t hits = 0;
    for (std::size_t s = 0; s < kSub * kSub; ++s) hits += covered[i * kSub * kSub + s];
    pixels[i] = static_cast<double>(hits) / static_cast<double>(kSub * kSub);
  }
  return SilhouetteImage(resolution, resolution, std::move(pixels));
}

// ---- dataset -----------------------------------------------------------

std::vector<const ManifestEntry*> DatasetManifest::split(const std::string& name) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == name) out.push_back(&e);
  return out;
}

BuildingSpec draw_building_spec(const DatasetConfig& config, std::size_t index) {
  Rng rng = Rng::derive(config.seed, index);
  BuildingSpec s;
  s.seed = rng.engine()();
  const double r = rng.uniform();
  s.roof = r < config.gable_fraction                          ? RoofType::kGable
           : r < config.gable_fraction + config.hip_fraction ? RoofType::kHip
                                                              : RoofType::kFlat;
  s.width = rng.uniform(0.9, 1.6);
  s.depth = rng.uniform(0.6, 1.0) * s.width;
  // Walls stay low relative to the footprint so the roof keeps a large share
  // of the surface area.
  s.wall_height = rng.uniform(0.45, 0.85) * s.width * s.depth / (s.width + s.depth);
  s.view.azimuth_deg = rng.uniform(0.0, 360.0);
  s.view.elevation_deg = rng.uniform(15.0, 45.0);
  const bool l_shape = rng.uniform() < config.l_shape_fraction;
  switch (s.roof) {
    case RoofType::kGable: s.roof_pitch = rng.uniform(0.8, 1.2); break;
    case RoofType::kHip: s.roof_pitch = rng.uniform(0.5, 0.9); break;
    case RoofType::kFlat:
      s.roof_pitch = 0.0;
      if (l_shape) {
        s.footprint = FootprintShape::kLShape;
        s.notch_width = rng.uniform(0.3, 0.6) * s.width;
        s.notch_depth = rng.uniform(0.3, 0.6) * s.depth;
      }
      break;
  }
  return s;
}

namespace {

json spec_to_json(const BuildingSpec& s) {
  return json{{"footprint", to_string(s.footprint)},
              {"width", s.width},
              {"depth", s.depth},
              {"notch_width", s.notch_width},
              {"notch_depth", s.notch_depth},
              {"wall_height", s.wall_height},
              {"roof_type", to_string(s.roof)},
              {"roof_pitch", s.roof_pitch},
              {"view_azimuth", s.view.azimuth_deg},
              {"view_elevation", s.view.elevation_deg},
              {"seed", s.seed}};
}

BuildingSpec spec_from_json(const json& j) {
  BuildingSpec s;
  s.footprint = parse_footprint(j.at("footprint").get<std::string>());
  s.width = j.at("width").get<double>();
  s.depth = j.at("depth").get<double>();
  s.notch_width = j.at("notch_width").get<double>();
  s.notch_depth = j.at("notch_depth").get<double>();
  s.wall_height = j.at("wall_height").get<double>();
  s.roof = parse_roof_type(j.at("roof_type").get<std::string>());
  s.roof_pitch = j.at("roof_pitch").get<double>();
  s.view.azimuth_deg = j.at("view_azimuth").get<double>();
  s.view.elevation_deg = j.at("view_elevation").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

std::string building_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "b%05zu", index);
  return buf;
}

}  // namespace

DatasetManifest build_dataset(const DatasetConfig& config, const std::filesystem::path& root) {
  if (config.train_count < 1 || config.test_count < 1)
    throw std::invalid_argument("build_dataset: train and test counts must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(root / "clouds", ec);
  if (!ec) std::filesystem::create_directories(root / "silhouettes", ec);
  if (ec) throw InputError("cannot create dataset directory " + root.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.seed = config.seed;
  manifest.points = config.points;
  manifest.image_size = config.image_size;
  const std::size_t total = config.train_count + config.test_count;
  manifest.entries.resize(total);
  std::exception_ptr failure;
  const auto count = static_cast<std::ptrdiff_t>(total);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      const auto idx = static_cast<std::size_t>(i);
      ManifestEntry e;
      e.id = building_id(idx);
      e.split = idx < config.train_count ? "train" : "test";
      e.spec = draw_building_spec(config, idx);
      e.cloud = "clouds/" + e.id + ".bpc";
      e.silhouette = "silhouettes/" + e.id + ".pgm";
      const auto mesh = generate_building(e.spec);
      auto cloud = sample_surface(mesh, config.points, e.spec.seed);
      write_bpc(root / e.cloud, cloud);
      write_pgm(root / e.silhouette, render_silhouette(mesh, e.spec.view, config.image_size));
      manifest.entries[idx] = std::move(e);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  save_manifest(root / "manifest.json", manifest);
  return manifest;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  json entries = json::array();
  for (const auto& e : manifest.entries)
    entries.push_back({{"id", e.id},
                       {"split", e.split},
                       {"cloud", e.cloud},
                       {"silhouette", e.silhouette},
                       {"spec", spec_to_json(e.spec)}});
  const json j{{"version", 1},
               {"seed", manifest.seed},
               {"points", manifest.points},
               {"image_size", manifest.image_size},
               {"entries", entries}};
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write manifest " + path.string());
  os << j.dump(2) << '\n';
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open manifest " + path.string());
  DatasetManifest m;
  try {
    const auto j = json::parse(is);
    m.seed = j.at("seed").get<std::uint64_t>();
    m.points = j.at("points").get<std::size_t>();
    m.image_size = j.at("image_size").get<std::size_t>();
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("id").get<std::string>(), e.at("split").get<std::string>(),
                           e.at("cloud").get<std::string>(), e.at("silhouette").get<std::string>(),
                           spec_from_json(e.at("spec"))});
    }
  } catch (const json::exception& ex) {
    throw InputError("malformed manifest " + path.string() + ": " + ex.what());
  }
  return m;
}

RoofClass roof_oracle(const PointCloud& cloud) {
  if (cloud.size() < 20)
    throw std::invalid_argument("roof_oracle: need at least 20 points, got " +
                                std::to_string(cloud.size()));
  std::vector<double> z(cloud.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = cloud.flat()[3 * i + 2];
  std::vector<double> sorted = z;
  const auto k = static_cast<std::size_t>(kRoofPercentile * static_cast<double>(z.size() - 1));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
  const double threshold = sorted[k];
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (double v : z)
    if (v >= threshold) {
      sum += v;
      sq += v * v;
      ++n;
    }
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
  return std::sqrt(var) < kFlatRoofStd ? RoofClass::kFlat : RoofClass::kGable;
}

}  // namespace buildiff
