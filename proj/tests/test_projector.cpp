#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "wrt/parallel.hpp"
#include "wrt/projector.hpp"

using namespace wrt;

namespace {

ViewGeometry small_geometry(std::size_t n, std::size_t nz, std::size_t views, std::size_t cols) {
  ViewGeometry g;
  g.volume = {n, n, nz};
  g.detector_rows = nz;
  g.detector_cols = cols;
  g.angles_deg = ViewGeometry::uniform_angles(0.0, 180.0, views);
  return g;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Joseph weights evaluated voxel by voxel from the ray equation: the ray
// crosses each plane of the major axis once, and the voxel on that plane gets
// step * max(0, 1 - |distance along the minor axis| / pitch).
std::vector<double> dense_joseph(const ViewGeometry& g) {
  const std::size_t n = g.volume.nx;
  const double dv = g.voxel_pitch_um;
  const double c0 = 0.5 * static_cast<double>(n - 1);
  const double ccol = 0.5 * static_cast<double>(g.detector_cols - 1);
  std::vector<double> A(g.measurements() * g.volume.size(), 0.0);
  for (std::size_t v = 0; v < g.num_views(); ++v) {
    const double phi = g.angles_deg[v] * std::numbers::pi / 180.0;
    const double c = std::cos(phi), s = std::sin(phi);
    for (std::size_t col = 0; col < g.detector_cols; ++col) {
      const double u = (static_cast<double>(col) - ccol) * g.pixel_pitch_um;
      const std::size_t row_idx = v * g.detector_cols + col;  // single detector row
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
          const double x = (static_cast<double>(i) - c0) * dv;
          const double y = (static_cast<double>(j) - c0) * dv;
          double w = 0.0;
          if (std::abs(c) >= std::abs(s)) {
            // Ray point on the plane y: x_r = (u - y s) / c.
            const double xr = (u - y * s) / c;
            w = std::max(0.0, 1.0 - std::abs(xr - x) / dv) * dv / std::abs(c);
          } else {
            const double yr = (u - x * c) / s;
            w = std::max(0.0, 1.0 - std::abs(yr - y) / dv) * dv / std::abs(s);
          }
          A[row_idx * g.volume.size() + j * n + i] = w;
        }
    }
  }
  return A;
}

}  // namespace

TEST_CASE("forward projection of a single voxel along an axis-aligned ray equals the voxel pitch") {
  ViewGeometry g = small_geometry(5, 1, 2, 5);
  g.angles_deg = {0.0, 90.0};
  const SystemModel model(g);
  std::vector<double> vol(g.volume.size(), 0.0);
  vol[g.volume.index(2, 2, 0)] = 1.0;  // centre voxel
  const auto sino = model.forward(vol);
  // Central detector column for both views; ray-box intersection length is 50 um.
  CHECK(sino[0 * 5 + 2] == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(sino[1 * 5 + 2] == doctest::Approx(50.0).epsilon(1e-12));
  // Neighbouring columns miss the voxel entirely.
  CHECK(sino[1] == doctest::Approx(0.0));
  CHECK(sino[3] == doctest::Approx(0.0));
}

TEST_CASE("projector matches the rasterized Joseph system matrix on an 8x8x1 grid") {
  const ViewGeometry g = small_geometry(8, 1, 13, 11);
  const SystemModel model(g);
  const auto A = dense_joseph(g);
  const std::size_t N = g.volume.size(), M = g.measurements();

  // Columns via forward projection of one-hot volumes.
  double max_err = 0.0;
  for (std::size_t j = 0; j < N; ++j) {
    std::vector<double> e(N, 0.0);
    e[j] = 1.0;
    const auto col = model.forward(e);
    for (std::size_t i = 0; i < M; ++i) max_err = std::max(max_err, std::abs(col[i] - A[i * N + j]));
  }
  CHECK(max_err < 1e-9);

  // Rows via back projection of one-hot sinograms.
  max_err = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    std::vector<double> e(M, 0.0);
    e[i] = 1.0;
    const auto row = model.back(e);
    for (std::size_t j = 0; j < N; ++j) max_err = std::max(max_err, std::abs(row[j] - A[i * N + j]));
  }
  CHECK(max_err < 1e-9);
}

TEST_CASE("adjoint identity holds for random pairs") {
  ViewGeometry g = small_geometry(16, 4, 17, 21);
  g.pixel_pitch_um = 40.0;  // detector rows straddle slices
  for (int ss : {1, 2}) {
    const SystemModel model(g, ss);
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> f(model.volume_size()), s(model.sinogram_size());
      for (auto& x : f) x = U(rng);
      for (auto& x : s) x = U(rng);
      const double lhs = dot(model.forward(f), s);
      const double rhs = dot(f, model.back(s));
      CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(std::abs(lhs), 1.0));
    }
  }
}

TEST_CASE("projection is linear and maps zero to zero") {
  const ViewGeometry g = small_geometry(12, 3, 9, 15);
  const SystemModel model(g);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> a(model.volume_size()), b(model.volume_size()), c(model.volume_size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = U(rng);
    b[i] = U(rng);
    c[i] = 2.5 * a[i] + b[i];
  }
  const auto pa = model.forward(a), pb = model.forward(b), pc = model.forward(c);
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pc[i] == doctest::Approx(2.5 * pa[i] + pb[i]).epsilon(1e-12));
  const auto z = model.forward(std::vector<double>(model.volume_size(), 0.0));
  for (double x : z) CHECK(x == 0.0);
  const auto zb = model.back(std::vector<double>(model.sinogram_size(), 0.0));
  for (double x : zb) CHECK(x == 0.0);
}

TEST_CASE("centrosymmetric phantom projects to mirrored rows at opposite angles") {
  ViewGeometry g = small_geometry(16, 2, 2, 16);
  g.angles_deg = {25.0, 205.0};
  const SystemModel model(g);
  std::vector<double> f(model.volume_size());
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  // f(x, y) = f(-x, -y) in every slice.
  for (std::size_t z = 0; z < 2; ++z)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) {
        if (f[g.volume.index(x, y, z)] != 0.0) continue;
        const double v = U(rng);
        f[g.volume.index(x, y, z)] = v;
        f[g.volume.index(15 - x, 15 - y, z)] = v;
      }
  const auto s = model.forward(f);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 16; ++c)
      CHECK(s[0 * 32 + r * 16 + c] == doctest::Approx(s[1 * 32 + r * 16 + (15 - c)]).epsilon(1e-5));
}

TEST_CASE("uniform cylinder: central ray integral is mu times the diameter") {
  const std::size_t n = 64;
  const ViewGeometry g = small_geometry(n, 1, 8, n);
  const SystemModel model(g, 1);
  const double mu = 1e-4, R = 20.0;  // radius in voxels
  std::vector<double> f(model.volume_size(), 0.0);
  const double c0 = 0.5 * (n - 1);
  // 8x8 supersampled coverage of each voxel.
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      int inside = 0;
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
          const double px = x - c0 + (a + 0.5) / 8 - 0.5, py = y - c0 + (b + 0.5) / 8 - 0.5;
          inside += px * px + py * py <= R * R;
        }
      f[y * n + x] = mu * inside / 64.0;
    }
  const auto s = model.forward(f);
  const double D = 2 * R * g.voxel_pitch_um;
  // Even column count: average the two central pixels, whose rays sit half a pixel off-centre.
  const double off = 0.5 * g.pixel_pitch_um, Rum = R * g.voxel_pitch_um;
  const double expected = mu * 2 * std::sqrt(Rum * Rum - off * off);
  for (std::size_t v = 0; v < g.num_views(); ++v) {
    const double centre = 0.5 * (s[v * n + n / 2 - 1] + s[v * n + n / 2]);
    CHECK(std::abs(centre - expected) <= 0.01 * mu * D);
  }
}

TEST_CASE("FBP of a noiseless uniform cylinder is within 2% in the interior") {
  const std::size_t n = 64;
  ViewGeometry g = small_geometry(n, 1, 180, n);
  const SystemModel model(g);
  const double mu = 1e-4, R = 24.0 * g.voxel_pitch_um;
  const double ccol = 0.5 * (n - 1);
  // Analytic chord lengths, averaged over 16 sub-positions per detector pixel.
  std::vector<double> p(model.sinogram_size());
  for (std::size_t v = 0; v < g.num_views(); ++v)
    for (std::size_t c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 16; ++k) {
        const double u = (c - ccol + (k + 0.5) / 16 - 0.5) * g.pixel_pitch_um;
        acc += u * u < R * R ? 2.0 * mu * std::sqrt(R * R - u * u) : 0.0;
      }
      p[v * n + c] = acc / 16;
    }
  for (FbpFilter filter : {FbpFilter::ramlak}) {
    const auto f = fbp_filter_backproject(p, model, filter);
    double worst = 0.0;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double dx = x - ccol, dy = y - ccol;
        if (std::sqrt(dx * dx + dy * dy) * g.voxel_pitch_um > 0.8 * R) continue;
        worst = std::max(worst, std::abs(f[y * n + x] - mu) / mu);
      }
    CHECK(worst < 0.02);
  }
}

TEST_CASE("FBP rejects counts and tiny view sets; zero input gives zero output") {
  ViewGeometry g = small_geometry(8, 1, 4, 8);
  const SystemModel model(g);
  HyperSinogram counts{SinogramKind::counts, 1, 4, 1, 8, 500.0, std::vector<float>(32, 500.0f)};
  CHECK_THROWS_AS(fbp_reconstruct(counts, 0, model), InvalidArgument);
  const auto z = fbp_filter_backproject(std::vector<double>(32, 0.0), model);
  for (double x : z) CHECK(x == 0.0);
  ViewGeometry g1 = small_geometry(8, 1, 1, 8);
  const SystemModel one(g1);
  CHECK_THROWS_AS(fbp_filter_backproject(std::vector<double>(8, 0.0), one), InvalidArgument);
  CHECK(fbp_filter_from_string("hamming") == FbpFilter::hamming);
  CHECK_THROWS_AS(fbp_filter_from_string("shepp"), InvalidArgument);
}

TEST_CASE("dimension mismatches are rejected") {
  const SystemModel model(small_geometry(8, 2, 4, 8));
  CHECK_THROWS_AS(model.forward(std::vector<double>(10)), InvalidArgument);
  CHECK_THROWS_AS(model.back(std::vector<double>(10)), InvalidArgument);
}

TEST_CASE("projection results do not depend on the worker count") {
  const SystemModel model(small_geometry(24, 6, 20, 30));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> f(model.volume_size()), s(model.sinogram_size());
  for (auto& x : f) x = U(rng);
  for (auto& x : s) x = U(rng);
  set_worker_count(1);
  const auto a1 = model.forward(f), b1 = model.back(s);
  set_worker_count(4);
  const auto a4 = model.forward(f), b4 = model.back(s);
  set_worker_count(0);
  CHECK(a1 == a4);
  CHECK(b1 == b4);
}
