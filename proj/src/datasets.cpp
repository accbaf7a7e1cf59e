#include "mome/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mome/error.hpp"
#include "mome/tensor_ops.hpp"

namespace mome {

namespace {

using nlohmann::json;

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

double sample_stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  if (n == 0) return 0.0;
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Least-squares line fit against t = 0, 1, ..., n-1.
void fit_line(const std::vector<double>& v, double& slope, double& intercept) {
  slope = linear_slope(v);
  double tbar = 0.5 * static_cast<double>(v.size() - 1);
  intercept = mean_of(v) - slope * tbar;
}

std::string lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::vector<WindowPair> slide_windows(const std::vector<double>& x,
                                      std::size_t L_in, std::size_t L_out,
                                      std::size_t stride) {
  if (L_in < 1 || L_out < 1) {
    throw ConfigError("slide_windows: window lengths must be >= 1");
  }
  if (stride < 1) throw ConfigError("slide_windows: stride must be >= 1");
  std::size_t span = L_in + L_out;
  if (x.size() < span) {
    throw DataError("slide_windows: series length " +
                    std::to_string(x.size()) + " below window span " +
                    std::to_string(span));
  }
  std::vector<WindowPair> out;
  for (std::size_t start = 0; start + span <= x.size(); start += stride) {
    WindowPair w;
    w.x_in.assign(x.begin() + start, x.begin() + start + L_in);
    w.x_out.assign(x.begin() + start + L_in, x.begin() + start + span);
    out.push_back(std::move(w));
  }
  return out;
}

SplitPlan split_with_gap(std::size_t N, std::size_t L_in, std::size_t L_out) {
  std::size_t gap = std::max(L_in, L_out);
  if (N <= gap) {
    throw DataError("split_with_gap: " + std::to_string(N) +
                    " windows cannot absorb a gap of " + std::to_string(gap));
  }
  std::size_t c = static_cast<std::size_t>(
      std::floor(0.8 * static_cast<double>(N)));
  SplitPlan plan;
  plan.gap = gap;
  for (std::size_t i = 0; i < c; ++i) plan.train_idx.push_back(i);
  // 1-based window c+gap is 0-based index c+gap-1
  for (std::size_t i = c + gap - 1; i < N; ++i) plan.test_idx.push_back(i);
  if (plan.train_idx.empty() || plan.test_idx.empty()) {
    throw DataError("split_with_gap: empty side (N=" + std::to_string(N) +
                    ", gap=" + std::to_string(gap) + ")");
  }
  return plan;
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw DataError("quantile of empty data");
  if (p < 0.0 || p > 1.0) throw ConfigError("quantile p outside [0,1]");
  std::sort(v.begin(), v.end());
  double pos = p * static_cast<double>(v.size() - 1);
  std::size_t i = static_cast<std::size_t>(std::floor(pos));
  double frac = pos - static_cast<double>(i);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + frac * (v[i + 1] - v[i]);
}

double robust_sigma(const std::vector<double>& x) {
  double sd = sample_stddev(x);
  double iqr = (quantile(x, 0.75) - quantile(x, 0.25)) / 1.349;
  std::vector<double> dev;
  double med = median_of(x);
  dev.reserve(x.size());
  for (double v : x) dev.push_back(std::abs(v - med));
  double mad = median_of(dev) * 1.4826;
  double sigma = median_of({sd, iqr, mad});
  return std::max(sigma, 1e-9);
}

MetricsRecord compute_metrics(const std::vector<double>& x_in,
                              const std::vector<double>& x_out) {
  if (x_in.size() < 3) {
    throw DataError("compute_metrics: need len(x_in) >= 3, got " +
                    std::to_string(x_in.size()));
  }
  if (x_out.empty()) {
    throw DataError("compute_metrics: x_out is empty");
  }

  MetricsRecord m;
  std::size_t tail = (x_in.size() + 3) / 4;  // ceil(len/4)
  std::vector<double> tail_vals(x_in.end() - static_cast<long>(tail),
                                x_in.end());
  m.narrative_near = mean_of(x_out) - mean_of(tail_vals);

  m.sigma = robust_sigma(x_in);
  m.z_past = linear_slope(x_in) / m.sigma;

  double slope, intercept;
  fit_line(x_in, slope, intercept);
  std::vector<double> residuals(x_in.size());
  double ss_res = 0.0, ss_tot = 0.0;
  double xbar = mean_of(x_in);
  for (std::size_t t = 0; t < x_in.size(); ++t) {
    residuals[t] = x_in[t] - (intercept + slope * static_cast<double>(t));
    ss_res += residuals[t] * residuals[t];
    ss_tot += (x_in[t] - xbar) * (x_in[t] - xbar);
  }
  m.residual_vol = sample_stddev(residuals) / m.sigma;
  if (ss_tot < 1e-18) {
    m.r2 = 1.0;  // a constant series is its own perfect trend line
  } else {
    m.r2 = std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
  }

  double abs_diff_acc = 0.0;
  for (std::size_t t = 1; t < x_in.size(); ++t) {
    abs_diff_acc += std::abs(x_in[t] - x_in[t - 1]);
  }
  m.nmad = abs_diff_acc / static_cast<double>(x_in.size() - 1) / m.sigma;

  m.z_future = x_out.size() >= 2 ? linear_slope(x_out) / m.sigma : 0.0;
  return m;
}

MetricsRecord flip_metrics(const MetricsRecord& m) {
  MetricsRecord out = m;
  out.narrative_near = -m.narrative_near;
  out.z_past = -m.z_past;
  out.z_future = -m.z_future;
  return out;
}

std::pair<MetricsRecord, int> flip_consistency(const MetricsRecord& m,
                                               double p_c, RandomStream& rng) {
  if (p_c < 0.0 || p_c > 1.0) {
    throw ConfigError("flip_consistency: p_c outside [0,1]");
  }
  if (rng.bernoulli(p_c)) return {m, 1};
  return {flip_metrics(m), 0};
}

const std::vector<std::string>& default_blocklist() {
  static const std::vector<std::string> list = {
      "will",  "forecast", "expected to", "predict",
      "next week", "tomorrow", "outlook",
  };
  return list;
}

std::string keyword_blocking(const std::string& text) {
  return keyword_blocking(text, default_blocklist());
}

std::string keyword_blocking(const std::string& text,
                             const std::vector<std::string>& blocklist) {
  std::vector<std::string> lowered;
  lowered.reserve(blocklist.size());
  for (const std::string& term : blocklist) lowered.push_back(lower(term));

  std::string out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find_first_of(".!?", start);
    std::size_t stop = end == std::string::npos ? text.size() : end + 1;
    std::string sentence = text.substr(start, stop - start);
    std::string probe = lower(sentence);
    bool blocked = false;
    for (const std::string& term : lowered) {
      if (probe.find(term) != std::string::npos) {
        blocked = true;
        break;
      }
    }
    if (!blocked) {
      // trim leading space left over from the previous sentence
      std::size_t ws = sentence.find_first_not_of(" \t\n");
      if (ws == std::string::npos) ws = sentence.size();
      std::string trimmed = sentence.substr(ws);
      if (!trimmed.empty()) {
        if (!out.empty()) out += " ";
        out += trimmed;
      }
    }
    start = stop;
  }
  return out;
}

std::string past_tendency_phrase(double z) {
  if (z > 1.5) return "a steep upward climb";
  if (z > 0.5) return "a persistent upward drift";
  if (z >= -0.5) return "a broadly flat background";
  if (z >= -1.5) return "a persistent downward drift";
  return "a steep downward slide";
}

std::string near_term_phrase(double narrative_near, double sigma) {
  double a = narrative_near / std::max(sigma, 1e-9);
  if (a > 2.0) return "levels running dramatically above the recent base";
  if (a > 0.5) return "levels running notably above the recent base";
  if (a >= -0.5) return "levels holding close to the recent base";
  if (a >= -2.0) return "levels running notably below the recent base";
  return "levels running dramatically below the recent base";
}

std::string future_pressure_phrase(double z) {
  if (z > 1.5) return "strong building pressure to the upside";
  if (z > 0.5) return "mild pressure to the upside";
  if (z >= -0.5) return "no clear directional pressure";
  if (z >= -1.5) return "mild pressure to the downside";
  return "strong building pressure to the downside";
}

namespace {

std::string variability_phrase(const MetricsRecord& m) {
  if (m.residual_vol > 1.2) return "choppy and noisy swings";
  if (m.residual_vol < 0.8) return "smooth and orderly movement";
  return "moderate fluctuation";
}

}  // namespace

std::string render_bulletin(const MetricsRecord& m, Domain domain,
                            RandomStream& rng) {
  const char* opener =
      domain == Domain::finance
          ? (rng.bernoulli(0.5) ? "The trading period showed"
                                : "Market activity over the period showed")
          : (rng.bernoulli(0.5) ? "The observation period recorded"
                                : "Station readings over the period recorded");
  const char* subject =
      domain == Domain::finance ? "price action" : "temperature movement";

  std::ostringstream out;
  out << opener << " " << past_tendency_phrase(m.z_past) << " in " << subject
      << ", with " << variability_phrase(m) << ". ";
  out << "Most recent readings sit at " << near_term_phrase(m.narrative_near, m.sigma)
      << ". ";
  out << "Current momentum indicates " << future_pressure_phrase(m.z_future)
      << ".";
  return keyword_blocking(out.str());
}

int finance_trend_label(const std::vector<double>& y, int n_way) {
  if (n_way != 3 && n_way != 5) {
    throw ConfigError("finance_trend_label: n_way must be 3 or 5");
  }
  if (y.size() < 2) {
    throw DataError("finance_trend_label: need at least 2 points");
  }
  double y_start = y.front();
  if (y_start == 0.0) {
    throw DataError("finance_trend_label: undefined for y_start == 0");
  }
  double delta = (y.back() - y_start) / y_start;
  int five;
  if (delta <= -0.04) {
    five = 0;  // Bearish
  } else if (delta <= -0.02) {
    five = 1;  // Warning
  } else if (delta < 0.02) {
    five = 2;  // Neutral
  } else if (delta < 0.04) {
    five = 3;  // Growth
  } else {
    five = 4;  // Bullish
  }
  if (n_way == 5) return five;
  if (five <= 1) return 0;  // Negative
  if (five == 2) return 1;  // Neutral
  return 2;                 // Positive
}

const char* finance_label_name(int label, int n_way) {
  static const char* five[] = {"Bearish", "Warning", "Neutral", "Growth",
                               "Bullish"};
  static const char* three[] = {"Negative", "Neutral", "Positive"};
  if (n_way == 5 && label >= 0 && label < 5) return five[label];
  if (n_way == 3 && label >= 0 && label < 3) return three[label];
  throw ConfigError("finance_label_name: bad label/n_way");
}

std::vector<double> daily_means(const std::vector<double>& x,
                                std::size_t points_per_day) {
  if (points_per_day < 1) {
    throw ConfigError("daily_means: points_per_day must be >= 1");
  }
  std::vector<double> out;
  for (std::size_t start = 0; start < x.size(); start += points_per_day) {
    std::size_t stop = std::min(start + points_per_day, x.size());
    double acc = 0.0;
    for (std::size_t i = start; i < stop; ++i) acc += x[i];
    out.push_back(acc / static_cast<double>(stop - start));
  }
  return out;
}

std::pair<int, int> weather_trend_labels(const std::vector<double>& x_in,
                                         const std::vector<double>& x_out,
                                         std::size_t points_per_day) {
  std::vector<double> past_days = daily_means(x_in, points_per_day);
  if (past_days.size() < 2) {
    throw DataError("weather_trend_labels: need >= 2 input daily means, got " +
                    std::to_string(past_days.size()));
  }
  if (x_out.empty()) {
    throw DataError("weather_trend_labels: x_out is empty");
  }
  double past_slope = linear_slope(past_days);
  int past;
  if (past_slope < -0.25) {
    past = 0;
  } else if (past_slope <= 0.25) {
    past = 1;
  } else {
    past = 2;
  }

  double last_day_mean = past_days.back();
  double diff = mean_of(daily_means(x_out, points_per_day)) - last_day_mean;
  int future;
  if (diff < -1.5) {
    future = 0;
  } else if (diff <= 1.5) {
    future = 1;
  } else {
    future = 2;
  }
  return {past, future};
}

const char* weather_label_name(int label) {
  static const char* names[] = {"Negative", "Neutral", "Positive"};
  if (label < 0 || label > 2) throw ConfigError("weather_label_name: bad label");
  return names[label];
}

MultiModalSample make_sample(const WindowPair& w, const SynthSpec& spec,
                             std::uint64_t seed, std::size_t index,
                             const std::string& id) {
  RandomStream rng = RandomStream::derive(seed, index);
  MultiModalSample s;
  s.x_in = w.x_in;
  s.x_out = w.x_out;
  s.id = id;
  MetricsRecord raw = compute_metrics(w.x_in, w.x_out);
  auto [metrics, flag] = flip_consistency(raw, spec.p_c, rng);
  s.metrics = metrics;
  s.consistency = flag;
  s.text = render_bulletin(metrics, spec.domain, rng);
  if (spec.domain == Domain::finance) {
    s.trend_label = finance_trend_label(w.x_out, spec.n_way);
  } else {
    auto [past, future] =
        weather_trend_labels(w.x_in, w.x_out, spec.points_per_day);
    s.trend_label = future;
    s.trend_label_past = past;
  }
  return s;
}

std::vector<double> gen_finance_series(std::size_t T, RandomStream& rng) {
  // geometric random walk with regime-switching drift, always positive
  std::vector<double> x;
  x.reserve(T);
  double level = 80.0 + 40.0 * rng.uniform();
  double drift = rng.normal(0.0, 0.002);
  for (std::size_t t = 0; t < T; ++t) {
    if (t % 48 == 0) drift = rng.normal(0.0, 0.004);
    level *= std::exp(drift + rng.normal(0.0, 0.01));
    x.push_back(level);
  }
  return x;
}

std::vector<double> gen_weather_series(std::size_t T,
                                       std::size_t points_per_day,
                                       RandomStream& rng) {
  // diurnal cycle + slow seasonal trend + weather noise
  std::vector<double> x;
  x.reserve(T);
  double base = rng.uniform(5.0, 20.0);
  double season_rate = rng.normal(0.0, 0.5) / static_cast<double>(points_per_day);
  double amp = rng.uniform(3.0, 8.0);
  double noise_state = 0.0;
  double day = static_cast<double>(points_per_day);
  for (std::size_t t = 0; t < T; ++t) {
    double phase = 2.0 * 3.141592653589793 * static_cast<double>(t) / day;
    noise_state = 0.8 * noise_state + rng.normal(0.0, 0.8);
    x.push_back(base + season_rate * static_cast<double>(t) +
                amp * std::sin(phase) + noise_state);
  }
  return x;
}

SynthResult synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
  RandomStream series_rng = RandomStream::derive(seed, 0);
  std::vector<double> series =
      spec.domain == Domain::finance
          ? gen_finance_series(spec.series_len, series_rng)
          : gen_weather_series(spec.series_len, spec.points_per_day,
                               series_rng);
  std::vector<WindowPair> windows =
      slide_windows(series, spec.L_in, spec.L_out, spec.stride);
  SynthResult out;
  out.split = split_with_gap(windows.size(), spec.L_in, spec.L_out);
  const char* domain_name =
      spec.domain == Domain::finance ? "finance" : "weather";
  for (std::size_t i = 0; i < windows.size(); ++i) {
    std::ostringstream id;
    id << domain_name << "-" << seed << "-" << i;
    out.all.push_back(make_sample(windows[i], spec, seed, i + 1, id.str()));
  }
  return out;
}

std::vector<MultiModalSample> gen_cue_dataset(std::size_t n, std::size_t L_in,
                                              std::size_t L_out,
                                              std::uint64_t seed) {
  if (L_in < 3 || L_out < 1) {
    throw ConfigError("gen_cue_dataset: window too short");
  }
  static const double kShifts[] = {-3.0, -1.5, 1.5, 3.0};
  std::vector<MultiModalSample> out;
  SynthSpec spec;
  spec.domain = Domain::finance;
  spec.p_c = 1.0;
  spec.n_way = 3;
  for (std::size_t i = 0; i < n; ++i) {
    RandomStream rng = RandomStream::derive(seed, 1000000 + i);
    double base = rng.uniform(-1.0, 1.0);
    double shift = kShifts[rng.uniform_index(4)];
    WindowPair w;
    w.x_in.reserve(L_in);
    w.x_out.reserve(L_out);
    // input: stationary noise with unit scale, no trace of the shift
    for (std::size_t t = 0; t < L_in; ++t) {
      w.x_in.push_back(base + rng.normal(0.0, 1.0));
    }
    // output: shifted level with much smaller noise
    for (std::size_t t = 0; t < L_out; ++t) {
      w.x_out.push_back(base + shift + rng.normal(0.0, 0.1));
    }
    std::ostringstream id;
    id << "cue-" << seed << "-" << i;
    MultiModalSample s = make_sample(w, spec, seed, 2000000 + i, id.str());
    s.trend_label.reset();  // relative-change labels are not meaningful here
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

json metrics_to_json(const MetricsRecord& m) {
  return json{{"narrative_near", m.narrative_near},
              {"sigma", m.sigma},
              {"z_past", m.z_past},
              {"residual_vol", m.residual_vol},
              {"r2", m.r2},
              {"nmad", m.nmad},
              {"z_future", m.z_future}};
}

MetricsRecord metrics_from_json(const json& j) {
  MetricsRecord m;
  m.narrative_near = j.at("narrative_near").get<double>();
  m.sigma = j.at("sigma").get<double>();
  m.z_past = j.at("z_past").get<double>();
  m.residual_vol = j.at("residual_vol").get<double>();
  m.r2 = j.at("r2").get<double>();
  m.nmad = j.at("nmad").get<double>();
  m.z_future = j.at("z_future").get<double>();
  return m;
}

}  // namespace

void save_samples_jsonl(const std::vector<MultiModalSample>& samples,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file: " + path);
  for (const MultiModalSample& s : samples) {
    json j{{"x_in", s.x_in},
           {"x_out", s.x_out},
           {"text", s.text},
           {"consistency", s.consistency},
           {"metrics", metrics_to_json(s.metrics)},
           {"trend_label",
            s.trend_label ? json(*s.trend_label) : json(nullptr)},
           {"id", s.id}};
    if (s.trend_label_past) j["trend_label_past"] = *s.trend_label_past;
    out << j.dump() << "\n";
  }
}

std::vector<MultiModalSample> load_samples_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  std::vector<MultiModalSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      MultiModalSample s;
      s.x_in = j.at("x_in").get<std::vector<double>>();
      s.x_out = j.at("x_out").get<std::vector<double>>();
      s.text = j.at("text").get<std::string>();
      s.consistency = j.at("consistency").get<int>();
      s.metrics = metrics_from_json(j.at("metrics"));
      if (!j.at("trend_label").is_null()) {
        s.trend_label = j.at("trend_label").get<int>();
      }
      if (j.contains("trend_label_past") && !j["trend_label_past"].is_null()) {
        s.trend_label_past = j["trend_label_past"].get<int>();
      }
      s.id = j.at("id").get<std::string>();
      if (s.consistency != 0 && s.consistency != 1) {
        throw DataError("consistency must be 0 or 1");
      }
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw DataError("dataset parse error at " + path + ":" +
                      std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

Tensor load_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open series file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t cols = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError("bad number '" + cell + "' at " + path + ":" +
                        std::to_string(lineno));
      }
    }
    if (row.empty()) continue;
    if (cols == 0) {
      cols = row.size();
    } else if (row.size() != cols) {
      throw DataError("ragged row at " + path + ":" + std::to_string(lineno));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("empty series file: " + path);
  Tensor out(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = rows[i][j];
  }
  return out;
}

}  // namespace mome
