#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "wrt/parallel.hpp"
#include "wrt/random.hpp"
#include "wrt/signature.hpp"

namespace wrt {

namespace {

struct SpectrumHash {
  const HyperVolume* hv;
  std::size_t operator()(std::size_t voxel) const {
    std::uint64_t h = 0x51ed2701a3c4f00dULL;
    for (std::size_t k = 0; k < hv->channels; ++k) {
      const float v = hv->data[k * hv->channel_size() + voxel];
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = splitmix64(h ^ bits);
    }
    return static_cast<std::size_t>(h);
  }
};

struct SpectrumEqual {
  const HyperVolume* hv;
  bool operator()(std::size_t a, std::size_t b) const {
    for (std::size_t k = 0; k < hv->channels; ++k)
      if (hv->data[k * hv->channel_size() + a] != hv->data[k * hv->channel_size() + b]) return false;
    return true;
  }
};

std::size_t distinct_spectra_at_least(const HyperVolume& hv, std::size_t wanted) {
  std::unordered_set<std::size_t, SpectrumHash, SpectrumEqual> seen(16, SpectrumHash{&hv}, SpectrumEqual{&hv});
  for (std::size_t i = 0; i < hv.channel_size() && seen.size() < wanted; ++i) seen.insert(i);
  return seen.size();
}

}  // namespace

LabelVolume kmeans_segment(const HyperVolume& hv, const KmeansParams& params) {
  const std::size_t C = params.n_classes;
  if (C < 2) throw InvalidArgument("kmeans: n_classes must be >= 2");
  if (params.max_iterations < 1) throw InvalidArgument("kmeans: max_iterations must be >= 1");
  const std::size_t N = hv.channel_size();
  const std::size_t K = hv.channels;
  if (N == 0 || K == 0 || hv.data.size() != N * K) throw InvalidArgument("kmeans: empty or malformed volume");
  if (distinct_spectra_at_least(hv, C) < C)
    throw InvalidArgument("kmeans: fewer distinct spectra than n_classes");

  // Voxel-major copy of the spectra.
  std::vector<double> x(N * K);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < N; ++i) x[i * K + k] = hv.data[k * N + i];

  auto dist2 = [&](std::size_t i, const double* c) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double d = x[i * K + k] - c[k];
      s += d * d;
    }
    return s;
  };

  // k-means++ seeding.
  SplitMix64 rng(params.seed);
  std::vector<double> centroids(C * K);
  std::size_t first = static_cast<std::size_t>(rng.next_u64() % N);
  std::copy_n(&x[first * K], K, &centroids[0]);
  std::vector<double> d2(N);
  for (std::size_t i = 0; i < N; ++i) d2[i] = dist2(i, &centroids[0]);
  for (std::size_t c = 1; c < C; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform(0.0, total);
      double acc = 0.0;
      pick = N - 1;
      for (std::size_t i = 0; i < N; ++i) {
        acc += d2[i];
        if (acc >= target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      while (d2[pick] == 0.0 && pick > 0) --pick;
    }
    std::copy_n(&x[pick * K], K, &centroids[c * K]);
    for (std::size_t i = 0; i < N; ++i) d2[i] = std::min(d2[i], dist2(i, &centroids[c * K]));
  }

  std::vector<std::int32_t> assign(N, -1);
  for (int it = 0; it < params.max_iterations; ++it) {
    std::size_t changed = 0;
#pragma omp parallel for reduction(+ : changed) num_threads(worker_count())
    for (std::size_t i = 0; i < N; ++i) {
      std::int32_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < C; ++c) {
        const double d = dist2(i, &centroids[c * K]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<std::int32_t>(c);
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        ++changed;
      }
    }
    if (changed == 0) break;
    std::vector<double> sums(C * K, 0.0);
    std::vector<std::size_t> counts(C, 0);
    for (std::size_t i = 0; i < N; ++i) {
      const auto c = static_cast<std::size_t>(assign[i]);
      ++counts[c];
      for (std::size_t k = 0; k < K; ++k) sums[c * K + k] += x[i * K + k];
    }
    for (std::size_t c = 0; c < C; ++c)
      if (counts[c] > 0)
        for (std::size_t k = 0; k < K; ++k) centroids[c * K + k] = sums[c * K + k] / static_cast<double>(counts[c]);
  }

  std::vector<double> norms(C);
  for (std::size_t c = 0; c < C; ++c)
    norms[c] = std::sqrt(std::inner_product(&centroids[c * K], &centroids[c * K] + K, &centroids[c * K], 0.0));
  std::vector<std::size_t> order(C);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] < norms[b]; });
  std::vector<std::int32_t> relabel(C);
  for (std::size_t r = 0; r < C; ++r) relabel[order[r]] = static_cast<std::int32_t>(r);

  LabelVolume out;
  out.shape = hv.shape;
  out.count = static_cast<std::int32_t>(C);
  out.labels.resize(N);
  for (std::size_t i = 0; i < N; ++i) out.labels[i] = relabel[static_cast<std::size_t>(assign[i])];
  return out;
}

LabelVolume connected_components_3d(const LabelVolume& classes, std::int32_t foreground_class, int connectivity,
                                    std::size_t min_voxels) {
  if (connectivity != 6 && connectivity != 18 && connectivity != 26)
    throw InvalidArgument("connectivity must be 6, 18 or 26");
  const auto& s = classes.shape;
  if (classes.labels.size() != s.size()) throw InvalidArgument("label volume size does not match its shape");

  std::vector<std::array<int, 3>> offsets;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int m = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (m == 0) continue;
        if (connectivity == 6 && m > 1) continue;
        if (connectivity == 18 && m > 2) continue;
        offsets.push_back({dx, dy, dz});
      }

  LabelVolume out;
  out.shape = s;
  out.labels.assign(s.size(), 0);
  std::vector<std::int32_t> provisional(s.size(), 0);
  std::vector<std::size_t> sizes{0};
  std::vector<std::size_t> stack;
  std::int32_t next = 0;
  for (std::size_t z = 0; z < s.nz; ++z)
    for (std::size_t y = 0; y < s.ny; ++y)
      for (std::size_t x = 0; x < s.nx; ++x) {
        const std::size_t seed = s.index(x, y, z);
        if (classes.labels[seed] != foreground_class || provisional[seed] != 0) continue;
        ++next;
        std::size_t size = 0;
        provisional[seed] = next;
        stack.push_back(seed);
        while (!stack.empty()) {
          const std::size_t v = stack.back();
          stack.pop_back();
          ++size;
          const long vx = static_cast<long>(v % s.nx);
          const long vy = static_cast<long>((v / s.nx) % s.ny);
          const long vz = static_cast<long>(v / (s.nx * s.ny));
          for (const auto& o : offsets) {
            const long nx = vx + o[0], ny = vy + o[1], nz = vz + o[2];
            if (nx < 0 || ny < 0 || nz < 0 || nx >= static_cast<long>(s.nx) || ny >= static_cast<long>(s.ny) ||
                nz >= static_cast<long>(s.nz))
              continue;
            const std::size_t n = s.index(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny),
                                          static_cast<std::size_t>(nz));
            if (classes.labels[n] == foreground_class && provisional[n] == 0) {
              provisional[n] = next;
              stack.push_back(n);
            }
          }
        }
        sizes.push_back(size);
      }

  std::vector<std::int32_t> final_id(sizes.size(), 0);
  std::int32_t kept = 0;
  for (std::size_t c = 1; c < sizes.size(); ++c)
    if (sizes[c] >= min_voxels) final_id[c] = ++kept;
  for (std::size_t i = 0; i < s.size(); ++i) out.labels[i] = final_id[static_cast<std::size_t>(provisional[i])];
  out.count = kept;
  return out;
}

std::vector<AnomalyComponent> connected_components_2d(const BraggMapStack& bragg, const std::vector<double>& angles_deg,
                                                      std::size_t min_area) {
  if (bragg.data.size() != bragg.channels * bragg.channel_size())
    throw InvalidArgument("Bragg map size does not match its shape");
  if (angles_deg.size() != bragg.views) throw InvalidArgument("angle count does not match the Bragg map views");
  const std::size_t R = bragg.rows, Cn = bragg.cols;
  std::vector<AnomalyComponent> out;
  std::vector<std::uint8_t> seen(R * Cn);
  std::vector<std::size_t> stack;
  for (std::size_t k = 0; k < bragg.channels; ++k) {
    const auto ch = bragg.channel(k);
    for (std::size_t v = 0; v < bragg.views; ++v) {
      const auto img = ch.subspan(v * bragg.view_size(), bragg.view_size());
      std::fill(seen.begin(), seen.end(), 0);
      for (std::size_t p = 0; p < img.size(); ++p) {
        if (img[p] > 1) throw InvalidArgument("Bragg map must be binary");
        if (!img[p] || seen[p]) continue;
        AnomalyComponent comp;
        comp.view = v;
        comp.view_deg = angles_deg[v];
        comp.channel = k;
        seen[p] = 1;
        stack.push_back(p);
        while (!stack.empty()) {
          const std::size_t q = stack.back();
          stack.pop_back();
          comp.pixels.push_back(static_cast<std::uint32_t>(q));
          const long r = static_cast<long>(q / Cn), c = static_cast<long>(q % Cn);
          for (long dr = -1; dr <= 1; ++dr)
            for (long dc = -1; dc <= 1; ++dc) {
              const long nr = r + dr, nc = c + dc;
              if ((dr == 0 && dc == 0) || nr < 0 || nc < 0 || nr >= static_cast<long>(R) ||
                  nc >= static_cast<long>(Cn))
                continue;
              const auto n = static_cast<std::size_t>(nr) * Cn + static_cast<std::size_t>(nc);
              if (img[n] && !seen[n]) {
                seen[n] = 1;
                stack.push_back(n);
              }
            }
        }
        if (comp.area() < min_area) continue;
        std::sort(comp.pixels.begin(), comp.pixels.end());
        out.push_back(std::move(comp));
      }
    }
  }
  return out;
}

}  // namespace wrt
