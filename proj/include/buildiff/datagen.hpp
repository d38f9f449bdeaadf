#pragma once

// Procedural buildings: parametric meshes, uniform surface sampling,
// silhouette rendering, dataset manifests and a geometric roof classifier.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "buildiff/conditioner.hpp"
#include "buildiff/geometry.hpp"

namespace buildiff {

enum class RoofType { kFlat, kGable, kHip };
enum class FootprintShape { kRectangle, kLShape };

std::string to_string(RoofType r);
RoofType parse_roof_type(const std::string& s);
std::string to_string(FootprintShape f);
FootprintShape parse_footprint(const std::string& s);

struct ViewDirection {
  double azimuth_deg = 0.0;
  double elevation_deg = 30.0;
};

// Footprint spans [0, width] x [0, depth]. An L-shape removes the
// (notch_width x notch_depth) corner at (width, depth). Gable ridges run
// along x, so the roof rise is pitch * depth / 2.
struct BuildingSpec {
  FootprintShape footprint = FootprintShape::kRectangle;
  double width = 1.0;
  double depth = 1.0;
  double notch_width = 0.0;
  double notch_depth = 0.0;
  double wall_height = 0.5;
  RoofType roof = RoofType::kFlat;
  double roof_pitch = 0.0;
  ViewDirection view;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Mesh {
  std::vector<Point3> vertices;
  std::vector<std::array<std::size_t, 3>> faces;  // outward (counter-clockwise) winding

  double face_area(std::size_t f) const;
  double area() const;
};

Mesh generate_building(const BuildingSpec& spec);

// Every undirected edge is used by exactly two faces, once in each direction.
bool is_watertight(const Mesh& mesh);

struct SurfaceSample {
  PointCloud points;                // mesh coordinates
  std::vector<std::size_t> faces;   // face hit by each point
};

// Area-weighted face choice plus uniform barycentric coordinates.
SurfaceSample sample_surface_raw(const Mesh& mesh, std::size_t n, std::uint64_t seed);
// As above, normalized into [-1, 1]^3.
PointCloud sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed);

// Orthographic soft-coverage silhouette; the building is centered and its
// larger projected extent fills 90% of the frame.
SilhouetteImage render_silhouette(const Mesh& mesh, const ViewDirection& view,
                                  std::size_t resolution);

struct DatasetConfig {
  std::size_t train_count = 200;
  std::size_t test_count = 50;
  double gable_fraction = 0.5;
  double hip_fraction = 0.0;
  double l_shape_fraction = 0.2;  // applied to flat roofs only
  std::size_t points = 2048;
  std::size_t image_size = 32;
  std::uint64_t seed = 1;
};

struct ManifestEntry {
  std::string id;
  std::string split;       // "train" | "test"
  std::string cloud;       // path relative to the dataset root
  std::string silhouette;  // path relative to the dataset root
  BuildingSpec spec;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::size_t points = 0;
  std::size_t image_size = 0;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(const std::string& name) const;
};

// Spec for building number `index` drawn from the config's distributions.
BuildingSpec draw_building_spec(const DatasetConfig& config, std::size_t index);

// Writes clouds/<id>.bpc, silhouettes/<id>.pgm and manifest.json under root.
DatasetManifest build_dataset(const DatasetConfig& config, const std::filesystem::path& root);

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

enum class RoofClass { kFlat, kGable };
std::string to_string(RoofClass r);

inline constexpr double kRoofPercentile = 0.8;
inline constexpr double kFlatRoofStd = 0.05;

// Points at or above the 80th z-percentile; flat when their z standard
// deviation is below 0.05. Needs at least 20 points.
RoofClass roof_oracle(const PointCloud& cloud);

}  // namespace buildiff
