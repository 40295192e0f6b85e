#include "wrt/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace wrt {

namespace {

template <class T>
double nrmse_impl(std::span<const T> recon, std::span<const T> truth) {
  if (recon.size() != truth.size()) throw InvalidArgument("nrmse: sizes differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = static_cast<double>(recon[i]) - static_cast<double>(truth[i]);
    num += d * d;
    den += static_cast<double>(truth[i]) * static_cast<double>(truth[i]);
  }
  if (den == 0.0) throw InvalidArgument("nrmse: truth is all zero");
  return std::sqrt(num / den);
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

double nrmse(std::span<const float> recon, std::span<const float> truth) { return nrmse_impl(recon, truth); }
double nrmse(std::span<const double> recon, std::span<const double> truth) { return nrmse_impl(recon, truth); }

BinaryRates binary_rates(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) throw InvalidArgument("binary_rates: sizes differ");
  BinaryRates r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] > 1 || truth[i] > 1) throw InvalidArgument("binary_rates: masks must be binary");
    const bool p = predicted[i] != 0, t = truth[i] != 0;
    if (p && t) ++r.tp;
    else if (p) ++r.fp;
    else if (t) ++r.fn;
    else ++r.tn;
  }
  if (r.tp + r.fn > 0) r.tpr = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  if (r.fp + r.tn > 0) r.fpr = static_cast<double>(r.fp) / static_cast<double>(r.fp + r.tn);
  if (r.tp + r.fp > 0) r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  return r;
}

nlohmann::json to_json(const BinaryRates& r) {
  return {{"tp", r.tp},         {"fp", r.fp},
          {"tn", r.tn},         {"fn", r.fn},
          {"tpr", optional_json(r.tpr)}, {"fpr", optional_json(r.fpr)},
          {"precision", optional_json(r.precision)}, {"recall", optional_json(r.recall())}};
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  auto& ch = j["channels"] = nlohmann::json::array();
  for (const auto& c : channels) {
    nlohmann::json e{{"channel", c.channel},
                     {"wavelength", c.wavelength},
                     {"affected_fraction", c.affected_fraction},
                     {"affected", c.affected},
                     {"nrmse_rmbir", optional_json(c.nrmse_rmbir)},
                     {"nrmse_fbp", optional_json(c.nrmse_fbp)}};
    e["bragg"] = c.bragg ? wrt::to_json(*c.bragg) : nlohmann::json();
    ch.push_back(std::move(e));
  }
  auto& gr = j["grains"] = nlohmann::json::array();
  for (const auto& g : grains) {
    nlohmann::json e{{"grain", g.grain}, {"voxels", g.voxels}, {"domain", g.domain}, {"overlap", g.overlap}};
    e["signature"] = g.signature ? wrt::to_json(*g.signature) : nlohmann::json();
    gr.push_back(std::move(e));
  }
  j["domain_count"] = domain_count;
  j["runtime"] = runtime;
  return j;
}

EvalReport evaluate(const EvalInputs& in) {
  EvalReport rep;
  const std::size_t K = in.grid.size();
  auto check_channels = [&](std::size_t c, const char* what) {
    if (c != K) throw InvalidArgument(std::string(what) + " channel count does not match the wavelength grid");
  };
  if (in.truth) check_channels(in.truth->channels, "truth volume");
  if (in.rmbir) check_channels(in.rmbir->channels, "R-MBIR volume");
  if (in.fbp) check_channels(in.fbp->channels, "FBP volume");
  if (in.bragg_truth) check_channels(in.bragg_truth->channels, "truth Bragg map");
  if (in.bragg_predicted) check_channels(in.bragg_predicted->channels, "Bragg map");

  rep.channels.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto& c = rep.channels[k];
    c.channel = k;
    c.wavelength = in.grid[k];
    if (in.truth && in.rmbir) c.nrmse_rmbir = nrmse(in.rmbir->channel(k), in.truth->channel(k));
    if (in.truth && in.fbp) c.nrmse_fbp = nrmse(in.fbp->channel(k), in.truth->channel(k));
    if (in.bragg_truth) {
      const auto t = in.bragg_truth->channel(k);
      std::size_t n = 0;
      for (auto v : t) n += v != 0;
      c.affected_fraction = t.empty() ? 0.0 : static_cast<double>(n) / static_cast<double>(t.size());
      c.affected = c.affected_fraction >= in.affected_threshold;
      if (in.bragg_predicted) c.bragg = binary_rates(in.bragg_predicted->channel(k), t);
    }
  }

  if (in.domains) rep.domain_count = static_cast<std::size_t>(std::max(in.domains->count, 0));
  if (in.truth_labels) {
    const auto& tl = *in.truth_labels;
    const std::size_t G = static_cast<std::size_t>(std::max(tl.count, 0));
    const auto sizes = tl.sizes();
    std::vector<std::size_t> overlap;
    const std::size_t D = rep.domain_count;
    if (in.domains) {
      if (in.domains->labels.size() != tl.labels.size())
        throw InvalidArgument("domain and truth label volumes differ in size");
      overlap.assign((G + 1) * (D + 1), 0);
      for (std::size_t i = 0; i < tl.labels.size(); ++i)
        ++overlap[static_cast<std::size_t>(tl.labels[i]) * (D + 1) + static_cast<std::size_t>(in.domains->labels[i])];
    }
    for (std::size_t g = 1; g <= G; ++g) {
      GrainReport r;
      r.grain = static_cast<std::int32_t>(g);
      r.voxels = g < sizes.size() ? sizes[g] : 0;
      for (std::size_t d = 1; d <= D; ++d) {
        const std::size_t o = overlap[g * (D + 1) + d];
        if (o > r.overlap) {
          r.overlap = o;
          r.domain = static_cast<std::int32_t>(d);
        }
      }
      if (!in.signature_truth.empty() && G > 0) {
        if (in.signature_truth.size() % G != 0)
          throw InvalidArgument("signature truth size is not a multiple of the grain count");
        const std::size_t cells = in.signature_truth.size() / G;
        const auto truth = in.signature_truth.subspan((g - 1) * cells, cells);
        if (r.domain != 0 && in.signatures) {
          const auto& sig = in.signatures->at(static_cast<std::size_t>(r.domain - 1));
          if (sig.matrix.size() != cells) throw InvalidArgument("signature truth does not match the signature shape");
          r.signature = binary_rates(sig.matrix, truth);
        } else if (in.signatures) {
          // An undetected grain has an empty signature.
          const std::vector<std::uint8_t> none(cells, 0);
          r.signature = binary_rates(none, truth);
        }
      }
      rep.grains.push_back(r);
    }
  }
  return rep;
}

}  // namespace wrt
