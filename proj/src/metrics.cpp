#include "cascade/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "cascade/kernels.hpp"

namespace cascade::metrics {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
  }
}

void require_same(const std::vector<Tensor>& a, const std::vector<Tensor>& b, const char* what) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": length mismatch");
  if (a.empty()) throw std::invalid_argument(std::string(what) + ": empty sequences");
  for (std::size_t i = 0; i < a.size(); ++i) require_same(a[i], b[i], what);
}

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double sq_err(const Tensor& a, const Tensor& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    e += d * d;
  }
  return e;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
  require_same(a, b, "psnr");
  if (a.empty()) throw std::invalid_argument("psnr: empty input");
  return psnr_from_mse(sq_err(a, b) / a.size());
}

double psnr(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  require_same(a, b, "psnr");
  double e = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    e += sq_err(a[i], b[i]);
    n += a[i].size();
  }
  return psnr_from_mse(e / n);
}

double ssim(const Tensor& a, const Tensor& b, int window, double data_range) {
  require_same(a, b, "ssim");
  const Shape s = a.shape();
  if (s.h < window || s.w < window) throw std::invalid_argument("ssim: image smaller than window");
  double acc = 0.0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      acc += kernels::ssim_plane(a.plane(n, c), b.plane(n, c), s.h, s.w, window, data_range);
    }
  return acc / (s.n * s.c);
}

double ssim(const std::vector<Tensor>& a, const std::vector<Tensor>& b, int window,
            double data_range) {
  require_same(a, b, "ssim");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += ssim(a[i], b[i], window, data_range);
  return acc / a.size();
}

std::pair<int, int> transition_window(int n_frames, const EditPlan& plan, int margin) {
  if (plan.output_length != n_frames) {
    throw std::invalid_argument("f_ssim: sequence length does not match the edit plan");
  }
  const int start = plan.generated_begin();
  const int end = plan.anchor_after_output() - 1;  // start - 1 for a delete
  if (start < 1 || plan.anchor_after_output() > n_frames - 1) {
    throw std::invalid_argument("f_ssim: interval outside the sequence");
  }
  return {std::max(0, start - margin), std::min(n_frames - 1, end + margin)};
}

std::vector<int> transition_pairs(int n_frames, const EditPlan& plan, int margin) {
  const auto [lo, hi] = transition_window(n_frames, plan, margin);
  std::vector<int> ks;
  for (int k = std::max(0, lo - 1); k <= std::min(n_frames - 2, hi); ++k) ks.push_back(k);
  return ks;
}

double f_ssim(const std::vector<Tensor>& frames, const EditPlan& plan, int margin) {
  const auto ks = transition_pairs(static_cast<int>(frames.size()), plan, margin);
  if (ks.empty()) throw std::invalid_argument("f_ssim: no frame pairs in the window");
  double acc = 0.0;
  for (int k : ks) acc += ssim(frames[k], frames[k + 1]);
  return acc / ks.size();
}

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  constexpr double kTiny = 1e-12;
  if (sxx <= kTiny * std::max(1.0, mx * mx) * n || syy <= kTiny * std::max(1.0, my * my) * n) {
    return {0.0, true};
  }
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

Correlation sync_corr(const std::vector<Tensor>& frames, const std::vector<float>& envelope,
                      Rect mouth_roi) {
  if (frames.size() != envelope.size()) throw std::invalid_argument("sync_corr: length mismatch");
  if (frames.size() < 3) throw std::invalid_argument("sync_corr: need at least 3 frames");
  std::vector<double> ap, env(envelope.begin(), envelope.end());
  for (const auto& f : frames) ap.push_back(aperture_from_frame(f, mouth_roi));
  return pearson(ap, env);
}

double latent_dist(const Tensor& a, const Tensor& b, const AutoEncoder& ae) {
  require_same(a, b, "latent_dist");
  const Tensor za = ae.encode(a), zb = ae.encode(b);
  return std::sqrt(sq_err(za, zb) / za.size());
}

double latent_dist(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                   const AutoEncoder& ae) {
  require_same(a, b, "latent_dist");
  return latent_dist(concat_batch(a), concat_batch(b), ae);
}

MetricReport evaluate(const std::vector<Tensor>& edited, const std::vector<Tensor>& reference,
                      const EditPlan& plan, const std::vector<float>& envelope,
                      const AutoEncoder& ae, Rect mouth_roi) {
  if (edited.size() != reference.size() || envelope.size() != edited.size()) {
    throw std::invalid_argument("evaluate: edited, reference and envelope lengths differ");
  }
  const int n = static_cast<int>(edited.size());
  MetricReport r;
  int q0, q1;
  if (plan.bs > 0) {
    q0 = plan.generated_begin();
    q1 = q0 + plan.bs - 1;
  } else {
    std::tie(q0, q1) = transition_window(n, plan);
  }
  const std::vector<Tensor> e(edited.begin() + q0, edited.begin() + q1 + 1);
  const std::vector<Tensor> ref(reference.begin() + q0, reference.begin() + q1 + 1);
  r.psnr = psnr(e, ref);
  r.ssim = ssim(e, ref);
  r.latent_dist = latent_dist(e, ref, ae);
  r.f_ssim = f_ssim(edited, plan);
  if (plan.bs >= 3) {
    const Correlation c = sync_corr(
        e, std::vector<float>(envelope.begin() + q0, envelope.begin() + q1 + 1), mouth_roi);
    r.sync_r = c.r;
    r.sync_degenerate = c.degenerate;
  } else {
    r.sync_degenerate = true;
  }
  r.config = {{"op", to_string(plan.op)},
              {"quality_frames", {q0, q1}},
              {"transition_pairs", transition_pairs(n, plan)}};
  return r;
}

nlohmann::json to_json(const MetricReport& r) {
  return {{"psnr", r.psnr},
          {"ssim", r.ssim},
          {"f_ssim", r.f_ssim},
          {"sync_r", r.sync_r},
          {"sync_degenerate", r.sync_degenerate},
          {"latent_dist", r.latent_dist},
          {"per_edit", r.per_edit},
          {"config", r.config}};
}

MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.psnr = j.at("psnr");
  r.ssim = j.at("ssim");
  r.f_ssim = j.at("f_ssim");
  r.sync_r = j.at("sync_r");
  r.sync_degenerate = j.at("sync_degenerate");
  r.latent_dist = j.at("latent_dist");
  r.per_edit = j.at("per_edit").get<std::vector<nlohmann::json>>();
  r.config = j.at("config");
  return r;
}

MetricReport aggregate(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
  MetricReport out;
  int sync_n = 0;
  for (const auto& r : reports) {
    out.psnr += r.psnr;
    out.ssim += r.ssim;
    out.f_ssim += r.f_ssim;
    out.latent_dist += r.latent_dist;
    if (!r.sync_degenerate) {
      out.sync_r += r.sync_r;
      ++sync_n;
    }
    nlohmann::json e = to_json(r);
    e.erase("per_edit");
    out.per_edit.push_back(std::move(e));
  }
  const double n = static_cast<double>(reports.size());
  out.psnr /= n;
  out.ssim /= n;
  out.f_ssim /= n;
  out.latent_dist /= n;
  if (sync_n > 0) {
    out.sync_r /= sync_n;
  } else {
    out.sync_degenerate = true;
  }
  return out;
}

std::string format_table(const MetricReport& r) {
  char buf[256];
  std::string s;
  std::snprintf(buf, sizeof buf, "%-10s %8s %8s %11s %8s\n", "SyncProxy", "PSNR", "SSIM",
                "LatentDist", "F-SSIM");
  s += buf;
  std::snprintf(buf, sizeof buf, "%-10.4f %8.3f %8.4f %11.4f %8.4f\n", r.sync_r, r.psnr, r.ssim,
                r.latent_dist, r.f_ssim);
  s += buf;
  return s;
}

}  // namespace cascade::metrics
