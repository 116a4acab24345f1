#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cascade/edit_plan.hpp"
#include "cascade/landmarks.hpp"
#include "cascade/latent_ae.hpp"
#include "cascade/tensor.hpp"

namespace cascade::metrics {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all values, capped at 99 dB.
double psnr(const Tensor& a, const Tensor& b);
double psnr(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

/// Mean local SSIM over window x window blocks, averaged over channels.
double ssim(const Tensor& a, const Tensor& b, int window = 8, double data_range = 1.0);
/// Mean of per-frame SSIM.
double ssim(const std::vector<Tensor>& a, const std::vector<Tensor>& b, int window = 8,
            double data_range = 1.0);

/// First indices k of the consecutive pairs (k, k+1) that have at least one
/// frame in [interval_start - margin, interval_end + margin], where the
/// interval is the generated segment in output indices (empty for a delete,
/// in which case it sits between the two anchors).
std::vector<int> transition_pairs(int n_frames, const EditPlan& plan, int margin = 2);
/// Frames covered by the transition window, clipped to the sequence.
std::pair<int, int> transition_window(int n_frames, const EditPlan& plan, int margin = 2);

/// Mean SSIM over transition_pairs.
double f_ssim(const std::vector<Tensor>& frames, const EditPlan& plan, int margin = 2);

/// Pearson correlation; degenerate is set (and r = 0) when either series
/// has zero variance.
struct Correlation {
  double r = 0.0;
  bool degenerate = false;
};
Correlation pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Correlation between the mouth aperture read off each frame and the
/// envelope. Needs equal lengths >= 3.
Correlation sync_corr(const std::vector<Tensor>& frames, const std::vector<float>& envelope,
                      Rect mouth_roi);

/// Root mean squared difference of the autoencoder latents.
double latent_dist(const Tensor& a, const Tensor& b, const AutoEncoder& ae);
double latent_dist(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                   const AutoEncoder& ae);

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double f_ssim = 0.0;
  double sync_r = 0.0;
  bool sync_degenerate = false;
  double latent_dist = 0.0;
  std::vector<nlohmann::json> per_edit;
  nlohmann::json config;
};

/// Quality metrics over the generated frames (over the transition window for
/// deletes), F-SSIM over the transition window, sync over the generated
/// frames against the envelope.
MetricReport evaluate(const std::vector<Tensor>& edited, const std::vector<Tensor>& reference,
                      const EditPlan& plan, const std::vector<float>& envelope,
                      const AutoEncoder& ae, Rect mouth_roi);

/// Means over several reports; each input becomes one per_edit entry.
MetricReport aggregate(const std::vector<MetricReport>& reports);

nlohmann::json to_json(const MetricReport& r);
MetricReport report_from_json(const nlohmann::json& j);
/// Plain-text table: SyncProxy, PSNR, SSIM, LatentDist, F-SSIM.
std::string format_table(const MetricReport& r);

}  // namespace cascade::metrics
