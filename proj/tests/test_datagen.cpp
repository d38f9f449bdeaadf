#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "buildiff/cloud_io.hpp"
#include "buildiff/datagen.hpp"
#include "buildiff/error.hpp"
#include "buildiff/image_io.hpp"

using namespace buildiff;
namespace fs = std::filesystem;

namespace {

BuildingSpec box(double w, double d, double h) {
  BuildingSpec s;
  s.width = w;
  s.depth = d;
  s.wall_height = h;
  return s;
}

BuildingSpec gable(double w, double d, double h, double pitch) {
  auto s = box(w, d, h);
  s.roof = RoofType::kGable;
  s.roof_pitch = pitch;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

TEST(Mesh, BoxHasTwelveTrianglesAndArea) {
  const auto m = generate_building(box(2, 1, 0.5));
  EXPECT_EQ(m.faces.size(), 12u);
  EXPECT_EQ(m.vertices.size(), 8u);
  EXPECT_NEAR(m.area(), 2 * (2 * 1 + 2 * 0.5 + 1 * 0.5), 1e-12);
  EXPECT_TRUE(is_watertight(m));
}

TEST(Mesh, GableRidgeHeight) {
  const auto s = gable(2, 1, 0.5, 1.0);
  const auto m = generate_building(s);
  double zmax = 0;
  for (const auto& v : m.vertices) zmax = std::max(zmax, v[2]);
  EXPECT_DOUBLE_EQ(zmax, 0.5 + 1.0 * 1 / 2.0);
  EXPECT_TRUE(is_watertight(m));
}

TEST(Mesh, AllVariantsWatertight) {
  auto hip = gable(2, 1, 0.5, 0.7);
  hip.roof = RoofType::kHip;
  auto pyramid = hip;
  pyramid.depth = 2;
  auto ell = box(2, 1.5, 0.5);
  ell.footprint = FootprintShape::kLShape;
  ell.notch_width = 0.8;
  ell.notch_depth = 0.6;
  for (const auto& s : {box(1, 1, 1), gable(1.5, 1, 0.4, 1.1), hip, pyramid, ell}) {
    const auto m = generate_building(s);
    EXPECT_TRUE(is_watertight(m)) << to_string(s.roof) << " " << to_string(s.footprint);
    for (std::size_t f = 0; f < m.faces.size(); ++f) EXPECT_GT(m.face_area(f), 0.0);
  }
  EXPECT_NEAR(generate_building(ell).area(),
              2 * (2 * 1.5 - 0.8 * 0.6) + 0.5 * 2 * (2 + 1.5), 1e-12);
}

TEST(Mesh, OpenMeshIsNotWatertight) {
  auto m = generate_building(box(1, 1, 1));
  m.faces.pop_back();
  EXPECT_FALSE(is_watertight(m));
}

TEST(Mesh, RejectsInvalidSpecs) {
  EXPECT_THROW(generate_building(box(0, 1, 1)), std::invalid_argument);
  EXPECT_THROW(generate_building(gable(1, 1, 1, 0.0)), std::invalid_argument);
  auto ell = gable(2, 2, 1, 1);
  ell.footprint = FootprintShape::kLShape;
  ell.notch_width = ell.notch_depth = 0.5;
  EXPECT_THROW(generate_building(ell), std::invalid_argument);
  auto hip = gable(1, 2, 1, 1);
  hip.roof = RoofType::kHip;
  EXPECT_THROW(generate_building(hip), std::invalid_argument);
}

TEST(Surface, PointsLieOnTheirFaces) {
  const auto m = generate_building(gable(2, 1.2, 0.6, 0.9));
  const auto s = sample_surface_raw(m, 2000, 4);
  ASSERT_EQ(s.points.size(), 2000u);
  for (std::size_t i = 0; i < 2000; ++i) {
    const auto& f = m.faces[s.faces[i]];
    const auto &a = m.vertices[f[0]], &b = m.vertices[f[1]], &c = m.vertices[f[2]];
    const auto p = s.points.point(i);
    // Area of the three sub-triangles sums to the face area iff p is inside.
    auto tri = [](const Point3& x, const Point3& y, const Point3& z) {
      const double u[3] = {y[0] - x[0], y[1] - x[1], y[2] - x[2]};
      const double v[3] = {z[0] - x[0], z[1] - x[1], z[2] - x[2]};
      const double cx = u[1] * v[2] - u[2] * v[1], cy = u[2] * v[0] - u[0] * v[2],
                   cz = u[0] * v[1] - u[1] * v[0];
      return 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
    };
    EXPECT_NEAR(tri(p, b, c) + tri(a, p, c) + tri(a, b, p), tri(a, b, c), 1e-9);
  }
}

TEST(Surface, AreaProportionalFaceChoice) {
  const auto m = generate_building(box(3, 1, 0.5));
  const std::size_t n = 60000;
  const auto s = sample_surface_raw(m, n, 9);
  std::vector<double> hits(m.faces.size(), 0.0);
  for (auto f : s.faces) hits[f] += 1.0;
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    const double p = m.face_area(f) / m.area();
    EXPECT_NEAR(hits[f] / n, p, 4 * std::sqrt(p * (1 - p) / n) + 1e-9) << f;
  }
}

TEST(Surface, NormalizedAndDeterministic) {
  const auto m = generate_building(box(2, 1, 0.5));
  const auto a = sample_surface(m, 500, 3);
  EXPECT_TRUE(a.is_normalized());
  EXPECT_EQ(a, sample_surface(m, 500, 3));
  EXPECT_NE(a, sample_surface(m, 500, 4));
}

TEST(Silhouette, NadirBoxIsFilledRectangle) {
  auto s = box(2, 1, 0.5);
  s.view = {0.0, 90.0};
  const auto img = render_silhouette(generate_building(s), s.view, 40);
  EXPECT_EQ(img.width(), 40u);
  double total = 0;
  for (double p : img.pixels()) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    total += p;
  }
  // The long side spans 90% of the frame, the short side half of that.
  EXPECT_NEAR(total, 36.0 * 18.0, 40.0);
  EXPECT_EQ(img.at(20, 20), 1.0);
  EXPECT_EQ(img.at(0, 0), 0.0);
  EXPECT_EQ(img.at(2, 20) + img.at(20, 2), 1.0);
}

TEST(Silhouette, GableSideViewShowsRidge) {
  // Looking along the ridge, the gable end is a pentagon: the top row near
  // the centre is covered, its corners are not.
  auto s = gable(1, 1, 0.5, 1.0);
  s.view = {0.0, 0.0};
  const auto img = render_silhouette(generate_building(s), s.view, 32);
  std::size_t top = 32;
  for (std::size_t y = 0; y < 32 && top == 32; ++y)
    for (std::size_t x = 0; x < 32; ++x)
      if (img.at(x, y) > 0.5) {
        top = y;
        break;
      }
  ASSERT_LT(top, 32u);
  EXPECT_GT(img.at(16, top + 1), 0.5);
  EXPECT_LT(img.at(4, top + 1), 0.5);
  auto flat = box(1, 1, 1.0);
  flat.view = s.view;
  const auto fimg = render_silhouette(generate_building(flat), flat.view, 32);
  EXPECT_NE(fimg, img);
}

TEST(Dataset, DeterministicDisjointAndComplete) {
  const auto root = fs::temp_directory_path() / "buildiff_ds";
  fs::remove_all(root);
  DatasetConfig c;
  c.train_count = 12;
  c.test_count = 5;
  c.points = 300;
  c.image_size = 16;
  c.seed = 21;
  const auto m = build_dataset(c, root / "a");
  build_dataset(c, root / "b");
  EXPECT_EQ(slurp(root / "a" / "manifest.json"), slurp(root / "b" / "manifest.json"));
  ASSERT_EQ(m.entries.size(), 17u);
  EXPECT_EQ(m.split("train").size(), 12u);
  EXPECT_EQ(m.split("test").size(), 5u);
  std::set<std::string> ids;
  for (const auto& e : m.entries) {
    ids.insert(e.id);
    EXPECT_EQ(slurp(root / "a" / e.cloud), slurp(root / "b" / e.cloud));
    const auto cloud = read_cloud(root / "a" / e.cloud);
    EXPECT_EQ(cloud.size(), 300u);
    EXPECT_TRUE(cloud.is_normalized());
    EXPECT_EQ(read_pgm(root / "a" / e.silhouette).width(), 16u);
  }
  EXPECT_EQ(ids.size(), 17u);
  const auto loaded = load_manifest(root / "a" / "manifest.json");
  EXPECT_EQ(loaded.entries.size(), 17u);
  EXPECT_EQ(loaded.entries[3].spec.width, m.entries[3].spec.width);
  EXPECT_EQ(loaded.entries[3].spec.seed, m.entries[3].spec.seed);
  c.seed = 22;
  build_dataset(c, root / "c");
  EXPECT_NE(slurp(root / "a" / "manifest.json"), slurp(root / "c" / "manifest.json"));
  fs::remove_all(root);
  EXPECT_THROW(load_manifest(root / "missing.json"), InputError);
}

TEST(Dataset, RoofMixFollowsFractions) {
  DatasetConfig c;
  c.gable_fraction = 0.3;
  c.hip_fraction = 0.2;
  std::size_t g = 0, h = 0, l = 0;
  for (std::size_t i = 0; i < 4000; ++i) {
    const auto s = draw_building_spec(c, i);
    EXPECT_NO_THROW(s.validate());
    g += s.roof == RoofType::kGable;
    h += s.roof == RoofType::kHip;
    l += s.footprint == FootprintShape::kLShape;
    if (s.footprint == FootprintShape::kLShape) EXPECT_EQ(s.roof, RoofType::kFlat);
  }
  EXPECT_NEAR(g / 4000.0, 0.3, 0.03);
  EXPECT_NEAR(h / 4000.0, 0.2, 0.03);
  EXPECT_NEAR(l / 4000.0, 0.5 * 0.2, 0.02);
}

TEST(Oracle, SimpleShapes) {
  const auto flat = sample_surface(generate_building(box(1.5, 1, 0.4)), 2048, 1);
  const auto peaked = sample_surface(generate_building(gable(1.5, 1, 0.4, 1.0)), 2048, 1);
  EXPECT_EQ(roof_oracle(flat), RoofClass::kFlat);
  EXPECT_EQ(roof_oracle(peaked), RoofClass::kGable);
  EXPECT_THROW(roof_oracle(PointCloud(std::vector<double>(3 * 19, 0.0))), std::invalid_argument);
}

TEST(Oracle, AgreesWithGroundTruthOnGeneratedData) {
  DatasetConfig c;
  c.gable_fraction = 0.5;
  std::size_t ok = 0;
  const std::size_t n = 1000;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = draw_building_spec(c, i);
    const auto cloud = sample_surface(generate_building(s), 256, s.seed);
    ok += (roof_oracle(cloud) == RoofClass::kGable) == (s.roof == RoofType::kGable);
  }
  EXPECT_GE(ok, 990u);
}
