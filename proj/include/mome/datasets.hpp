#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mome/rng.hpp"
#include "mome/tensor.hpp"

namespace mome {

// Summary statistics of one (x_in, x_out) window pair; the text templates
// and consistency flipping operate on these rather than the raw series.
struct MetricsRecord {
  double narrative_near = 0.0;  // mean(x_out) - mean(tail of x_in)
  double sigma = 0.0;           // robust scale of x_in, floored at 1e-9
  double z_past = 0.0;          // slope(x_in) / sigma
  double residual_vol = 0.0;    // stddev of detrended x_in / sigma
  double r2 = 0.0;              // fit quality of the x_in trend line
  double nmad = 0.0;            // mean |consecutive diff| / sigma
  double z_future = 0.0;        // slope(x_out) / sigma, 0 if len < 2
};

struct WindowPair {
  std::vector<double> x_in;
  std::vector<double> x_out;
};

// Index lists are 0-based; position k corresponds to window number k+1 in
// 1-based terms. gap = max(L_in, L_out) windows are skipped between the
// last training window and the first test window.
struct SplitPlan {
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  std::size_t gap = 0;
};

struct MultiModalSample {
  std::vector<double> x_in;
  std::vector<double> x_out;
  std::string text;
  int consistency = 1;
  MetricsRecord metrics;
  std::optional<int> trend_label;
  std::optional<int> trend_label_past;  // weather only
  std::string id;
};

enum class Domain { finance, weather };

// Contiguous, adjacent windows starting at offsets 0, s, 2s, ... while the
// full L_in + L_out span fits.
std::vector<WindowPair> slide_windows(const std::vector<double>& x,
                                      std::size_t L_in, std::size_t L_out,
                                      std::size_t stride);

// First floor(0.8 N) windows train; test resumes max(L_in, L_out) windows
// later. Throws DataError when the test side comes out empty.
SplitPlan split_with_gap(std::size_t N, std::size_t L_in, std::size_t L_out);

// Quantile with linear interpolation between order statistics (the common
// "type 7" rule). v need not be sorted.
double quantile(std::vector<double> v, double p);

// Median of {sample stddev, IQR/1.349, MAD*1.4826}, floored at 1e-9.
double robust_sigma(const std::vector<double>& x);

// Requires len(x_in) >= 3 and len(x_out) >= 1.
MetricsRecord compute_metrics(const std::vector<double>& x_in,
                              const std::vector<double>& x_out);

// Negates the three signed, direction-carrying fields.
MetricsRecord flip_metrics(const MetricsRecord& m);

// With probability p_c the metrics pass through unchanged (flag 1);
// otherwise they are flipped (flag 0).
std::pair<MetricsRecord, int> flip_consistency(const MetricsRecord& m,
                                               double p_c, RandomStream& rng);

const std::vector<std::string>& default_blocklist();

// Removes every sentence containing a blocklisted term (case-insensitive).
// Idempotent.
std::string keyword_blocking(const std::string& text);
std::string keyword_blocking(const std::string& text,
                             const std::vector<std::string>& blocklist);

// Deterministic domain-flavored bulletin built from categorical buckets of
// the metrics. Never contains digits or blocklisted terms.
std::string render_bulletin(const MetricsRecord& m, Domain domain,
                            RandomStream& rng);

// Phrase lookups used by render_bulletin, exposed so tests and the routing
// report can check text/metrics coherence.
std::string past_tendency_phrase(double z_past);
std::string near_term_phrase(double narrative_near, double sigma);
std::string future_pressure_phrase(double z_future);

// 5-way classes 0..4: Bearish, Warning, Neutral, Growth, Bullish over the
// relative change (y_end - y_start) / y_start. 3-way merges the outer pairs
// to Negative(0) / Neutral(1) / Positive(2).
int finance_trend_label(const std::vector<double>& y, int n_way);
const char* finance_label_name(int label, int n_way);

// Daily means are taken over consecutive groups of points_per_day samples
// (a trailing partial day counts, with its own mean). Past label bins the
// slope of the input daily means at +-0.25; future bins the difference
// between the mean output daily mean and the last input daily mean at +-1.5.
std::pair<int, int> weather_trend_labels(const std::vector<double>& x_in,
                                         const std::vector<double>& x_out,
                                         std::size_t points_per_day);
const char* weather_label_name(int label);

std::vector<double> daily_means(const std::vector<double>& x,
                                std::size_t points_per_day);

// ---------------------------------------------------------------------------
// Sample assembly, file formats, and synthetic generators.

struct SynthSpec {
  Domain domain = Domain::finance;
  std::size_t series_len = 400;
  std::size_t L_in = 56;
  std::size_t L_out = 8;
  std::size_t stride = 1;
  std::size_t points_per_day = 8;  // weather daily-mean resampling rate
  double p_c = 0.8;                // consistency probability
  int n_way = 3;                   // finance label granularity
};

// Metrics -> flip -> bulletin -> labels, with a per-sample RNG stream
// derived from (seed, index).
MultiModalSample make_sample(const WindowPair& w, const SynthSpec& spec,
                             std::uint64_t seed, std::size_t index,
                             const std::string& id);

std::vector<double> gen_finance_series(std::size_t T, RandomStream& rng);
std::vector<double> gen_weather_series(std::size_t T,
                                       std::size_t points_per_day,
                                       RandomStream& rng);

struct SynthResult {
  std::vector<MultiModalSample> all;
  SplitPlan split;
};

// Generates one series, windows it, splits with the leakage gap, and builds
// a sample per window.
SynthResult synth_dataset(const SynthSpec& spec, std::uint64_t seed);

// Independent level-shift windows where x_in is stationary noise and the
// sign/size of the coming shift appears only in the text. p_c is forced
// to 1 (no flips), so the context is always faithful.
std::vector<MultiModalSample> gen_cue_dataset(std::size_t n, std::size_t L_in,
                                              std::size_t L_out,
                                              std::uint64_t seed);

void save_samples_jsonl(const std::vector<MultiModalSample>& samples,
                        const std::string& path);
std::vector<MultiModalSample> load_samples_jsonl(const std::string& path);

// Headerless CSV, one row per timestep, one column per channel.
Tensor load_series_csv(const std::string& path);

}  // namespace mome
