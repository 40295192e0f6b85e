#include <algorithm>

#include "wrt/parallel.hpp"
#include "wrt/signature.hpp"

namespace wrt {

std::vector<std::uint8_t> project_and_binarize(std::span<const std::uint8_t> mask, const SystemModel& model,
                                               std::size_t view, double binarize_fraction) {
  if (mask.size() != model.volume_size()) throw InvalidArgument("mask size does not match the model volume");
  if (view >= model.geometry().num_views()) throw InvalidArgument("view index out of range");
  std::vector<double> vol(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 1) throw InvalidArgument("mask must be binary");
    vol[i] = mask[i];
  }
  std::vector<double> img(model.view_size());
  model.forward_view(vol, view, img);
  const double cut = binarize_fraction * model.geometry().voxel_pitch_um;
  std::vector<std::uint8_t> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = img[i] > cut ? 1 : 0;
  return out;
}

double correlation_score(std::span<const std::uint8_t> p, std::span<const std::uint8_t> q) {
  if (p.size() != q.size()) throw InvalidArgument("correlation_score: image sizes differ");
  std::size_t np = 0, nq = 0, p_only = 0, q_only = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] != 0, b = q[i] != 0;
    np += a;
    nq += b;
    p_only += a && !b;
    q_only += b && !a;
  }
  if (np + nq == 0) throw InvalidArgument("correlation_score: both images are empty");
  return 1.0 - static_cast<double>(p_only + q_only) / static_cast<double>(np + nq);
}

SignatureResult match_signatures(const LabelVolume& domains, const std::vector<AnomalyComponent>& anomalies,
                                 const SystemModel& model, std::size_t channels, const SignatureParams& params) {
  if (!(params.score_threshold > 0.0 && params.score_threshold < 1.0))
    throw InvalidArgument("score threshold must lie in (0, 1)");
  if (!(params.binarize_fraction > 0.0 && params.binarize_fraction < 1.0))
    throw InvalidArgument("binarize fraction must lie in (0, 1)");
  if (domains.labels.size() != model.volume_size()) throw InvalidArgument("domain volume does not match the model");
  const std::size_t V = model.geometry().num_views();
  const std::size_t P = static_cast<std::size_t>(std::max(domains.count, 0));
  const std::size_t npix = model.view_size();
  for (const auto& a : anomalies) {
    if (a.view >= V || a.channel >= channels) throw InvalidArgument("anomaly index outside the acquisition");
    if (!a.pixels.empty() && a.pixels.back() >= npix) throw InvalidArgument("anomaly pixel outside the detector");
  }

  // Binarised projection of every domain at every view: (domain, view, pixel).
  std::vector<std::uint8_t> proj(P * V * npix);
  std::vector<std::size_t> proj_count(P * V);
  for (std::size_t d = 0; d < P; ++d) {
    std::vector<std::uint8_t> mask(domains.labels.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = domains.labels[i] == static_cast<std::int32_t>(d + 1);
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (std::size_t v = 0; v < V; ++v) {
      const auto img = project_and_binarize(mask, model, v, params.binarize_fraction);
      std::copy(img.begin(), img.end(), proj.begin() + static_cast<std::ptrdiff_t>((d * V + v) * npix));
      proj_count[d * V + v] = static_cast<std::size_t>(std::count(img.begin(), img.end(), 1));
    }
  }

  SignatureResult out;
  out.records.resize(anomalies.size());
#pragma omp parallel for schedule(dynamic, 16) num_threads(worker_count())
  for (std::size_t a = 0; a < anomalies.size(); ++a) {
    const auto& comp = anomalies[a];
    MatchRecord rec;
    rec.anomaly = a;
    for (std::size_t d = 0; d < P; ++d) {
      const std::uint8_t* p = &proj[(d * V + comp.view) * npix];
      std::size_t overlap = 0;
      for (auto px : comp.pixels) overlap += p[px];
      const std::size_t total = proj_count[d * V + comp.view] + comp.area();
      // With q the component padded to the full frame, the score reduces to
      // twice the overlap over the total count.
      const double s = total == 0 ? 0.0 : 2.0 * static_cast<double>(overlap) / static_cast<double>(total);
      if (rec.domain_id == 0 || s > rec.score) {
        rec.domain_id = static_cast<std::int32_t>(d + 1);
        rec.score = s;
      }
    }
    rec.accepted = rec.domain_id != 0 && rec.score >= params.score_threshold;
    out.records[a] = rec;
  }

  out.signatures.resize(P);
  for (std::size_t d = 0; d < P; ++d) {
    auto& sig = out.signatures[d];
    sig.domain_id = static_cast<std::int32_t>(d + 1);
    sig.views = V;
    sig.channels = channels;
    sig.matrix.assign(V * channels, 0);
    sig.scores.assign(V * channels, 0.0f);
  }
  for (const auto& rec : out.records) {
    if (!rec.accepted) continue;
    const auto& comp = anomalies[rec.anomaly];
    auto& sig = out.signatures[static_cast<std::size_t>(rec.domain_id - 1)];
    const std::size_t cell = comp.view * channels + comp.channel;
    sig.matrix[cell] = 1;
    sig.scores[cell] = std::max(sig.scores[cell], static_cast<float>(rec.score));
  }
  return out;
}

}  // namespace wrt
