#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "mome/datasets.hpp"
#include "mome/error.hpp"
#include "mome/rng.hpp"

using namespace mome;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name)
      : path(std::string("/tmp/mome_ds_") + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

bool contains_digit(const std::string& s) {
  return std::any_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace

TEST_CASE("slide_windows counts, adjacency, and errors") {
  std::vector<double> x(10);
  for (std::size_t i = 0; i < 10; ++i) x[i] = static_cast<double>(i + 1);

  auto w = slide_windows(x, 7, 1, 1);
  CHECK(w.size() == 3);
  CHECK(w[0].x_in.front() == 1.0);
  CHECK(w[0].x_in.back() == 7.0);
  CHECK(w[0].x_out.front() == 8.0);  // x_out starts where x_in ends
  CHECK(w[2].x_in.front() == 3.0);
  CHECK(w[2].x_out.front() == 10.0);

  auto one = slide_windows(x, 7, 1, 10);
  CHECK(one.size() == 1);

  auto strided = slide_windows(x, 4, 2, 2);
  CHECK(strided.size() == 3);  // starts 0, 2, 4
  CHECK(strided[1].x_in.front() == 3.0);

  CHECK_THROWS_AS(slide_windows(std::vector<double>(5, 0.0), 7, 1, 1),
                  DataError);
}

TEST_CASE("split_with_gap follows the literal formula") {
  SplitPlan plan = split_with_gap(100, 7, 1);
  CHECK(plan.gap == 7);
  CHECK(plan.train_idx.size() == 80);
  CHECK(plan.train_idx.front() == 0);
  CHECK(plan.train_idx.back() == 79);
  // 1-based window 87 is 0-based 86
  CHECK(plan.test_idx.front() == 86);
  CHECK(plan.test_idx.back() == 99);
  CHECK(plan.test_idx.size() == 14);

  CHECK_THROWS_AS(split_with_gap(10, 9, 1), DataError);  // empty test side
  CHECK_THROWS_AS(split_with_gap(5, 9, 1), DataError);   // N <= gap
}

TEST_CASE("split_with_gap never leaks and keeps the ratio") {
  RandomStream rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t N = 30 + rng.uniform_index(300);
    std::size_t L_in = 1 + rng.uniform_index(10);
    std::size_t L_out = 1 + rng.uniform_index(5);
    SplitPlan plan;
    try {
      plan = split_with_gap(N, L_in, L_out);
    } catch (const DataError&) {
      continue;
    }
    std::set<std::size_t> train(plan.train_idx.begin(), plan.train_idx.end());
    for (std::size_t t : plan.test_idx) CHECK(train.count(t) == 0);
    CHECK(plan.train_idx.back() + plan.gap <= plan.test_idx.front());
    CHECK(plan.train_idx.size() ==
          static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(N))));
  }
}

TEST_CASE("quantile interpolates between order statistics") {
  std::vector<double> v = {0, 1, 2, 3, 4, 5, 6, 7};
  CHECK(quantile(v, 0.25) == doctest::Approx(1.75).epsilon(1e-12));
  CHECK(quantile(v, 0.75) == doctest::Approx(5.25).epsilon(1e-12));
  CHECK(quantile(v, 0.0) == 0.0);
  CHECK(quantile(v, 1.0) == 7.0);
  CHECK(quantile({3.0}, 0.5) == 3.0);
  CHECK_THROWS_AS(quantile({}, 0.5), DataError);
}

TEST_CASE("robust_sigma picks the median estimator") {
  // for 0..7: sample stddev = sqrt(42/7) = 2.449..., IQR/1.349 = 3.5/1.349,
  // MAD*1.4826 = 2*1.4826; the median of the three is the IQR estimate
  std::vector<double> v = {0, 1, 2, 3, 4, 5, 6, 7};
  CHECK(robust_sigma(v) == doctest::Approx(3.5 / 1.349).epsilon(1e-12));
  CHECK(robust_sigma(std::vector<double>(6, 4.2)) == 1e-9);  // floor
}

TEST_CASE("compute_metrics hand-checked example") {
  std::vector<double> x_in = {0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<double> x_out = {10};
  MetricsRecord m = compute_metrics(x_in, x_out);
  CHECK(m.narrative_near == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(m.sigma == doctest::Approx(3.5 / 1.349).epsilon(1e-12));
  CHECK(m.z_past == doctest::Approx(1.349 / 3.5).epsilon(1e-12));
  CHECK(m.residual_vol == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(m.r2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.nmad == doctest::Approx(1.349 / 3.5).epsilon(1e-12));
  CHECK(m.z_future == 0.0);  // single-point output
}

TEST_CASE("compute_metrics degenerate inputs") {
  MetricsRecord flat =
      compute_metrics(std::vector<double>(8, 3.0), std::vector<double>(2, 3.0));
  CHECK(flat.narrative_near == 0.0);
  CHECK(flat.z_past == 0.0);
  CHECK(flat.residual_vol == 0.0);
  CHECK(flat.z_future == 0.0);
  CHECK(flat.r2 == 1.0);
  CHECK(flat.sigma == 1e-9);

  std::vector<double> line = {5, 7, 9, 11, 13, 15};
  MetricsRecord lm = compute_metrics(line, {20, 22});
  CHECK(lm.r2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(lm.residual_vol == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(lm.z_future > 0.0);

  CHECK_THROWS_AS(compute_metrics({1, 2}, {3}), DataError);
  CHECK_THROWS_AS(compute_metrics({1, 2, 3}, {}), DataError);
}

TEST_CASE("flip negates exactly the signed fields and is an involution") {
  std::vector<double> x_in = {0, 1, 2, 3, 4, 5, 6, 7};
  MetricsRecord m = compute_metrics(x_in, {10});
  MetricsRecord f = flip_metrics(m);
  CHECK(f.narrative_near == -m.narrative_near);
  CHECK(f.z_past == -m.z_past);
  CHECK(f.z_future == -m.z_future);
  CHECK(f.sigma == m.sigma);
  CHECK(f.residual_vol == m.residual_vol);
  CHECK(f.r2 == m.r2);
  CHECK(f.nmad == m.nmad);

  MetricsRecord ff = flip_metrics(f);
  CHECK(ff.narrative_near == m.narrative_near);
  CHECK(ff.z_past == m.z_past);
  CHECK(ff.z_future == m.z_future);
}

TEST_CASE("flip_consistency honors the probability") {
  std::vector<double> x_in = {0, 1, 2, 3, 4, 5, 6, 7};
  MetricsRecord m = compute_metrics(x_in, {10});

  RandomStream always(1);
  auto [m1, f1] = flip_consistency(m, 1.0, always);
  CHECK(f1 == 1);
  CHECK(m1.z_past == m.z_past);

  RandomStream never(2);
  auto [m0, f0] = flip_consistency(m, 0.0, never);
  CHECK(f0 == 0);
  CHECK(m0.z_past == -m.z_past);

  RandomStream stream(3);
  int kept = 0;
  const int N = 10000;
  for (int i = 0; i < N; ++i) {
    kept += flip_consistency(m, 0.8, stream).second;
  }
  double fraction = static_cast<double>(kept) / N;
  CHECK(fraction > 0.77);
  CHECK(fraction < 0.83);
}

TEST_CASE("keyword_blocking removes offending sentences") {
  CHECK(keyword_blocking("Rain will come.") == "");
  CHECK(keyword_blocking("Skies stayed gray.") == "Skies stayed gray.");
  CHECK(keyword_blocking("The OUTLOOK is poor. Winds calmed.") ==
        "Winds calmed.");
  CHECK(keyword_blocking("We predict rain. It rained. Tomorrow helps!") ==
        "It rained.");
  CHECK(keyword_blocking("Prices are expected to rise. Volume fell.") ==
        "Volume fell.");

  std::string once = keyword_blocking("A will b. C stays. D forecast e? F.");
  CHECK(once == keyword_blocking(once));  // idempotent
  CHECK(once == "C stays. F.");
}

TEST_CASE("bulletins carry the bucket phrases and never emit digits") {
  RandomStream rng(99);
  std::vector<double> x_in = {0, 1, 2, 3, 4, 5, 6, 7};
  MetricsRecord up = compute_metrics(x_in, {10});
  // z_past = 0.385 -> flat bucket; force a strong trend instead
  up.z_past = 2.0;
  std::string text = render_bulletin(up, Domain::finance, rng);
  CHECK(text.find("a steep upward climb") != std::string::npos);
  CHECK_FALSE(contains_digit(text));

  MetricsRecord down = up;
  down.z_past = -0.9;
  text = render_bulletin(down, Domain::weather, rng);
  CHECK(text.find("a persistent downward drift") != std::string::npos);
  CHECK(text.find("temperature") != std::string::npos);

  // flipped metrics land in the mirrored bucket
  std::string flipped =
      render_bulletin(flip_metrics(up), Domain::finance, rng);
  CHECK(flipped.find("a steep downward slide") != std::string::npos);

  // fuzz: any metrics render clean
  for (int i = 0; i < 50; ++i) {
    MetricsRecord m;
    m.narrative_near = rng.normal(0.0, 3.0);
    m.sigma = std::abs(rng.normal(1.0, 0.5)) + 1e-3;
    m.z_past = rng.normal(0.0, 2.0);
    m.residual_vol = std::abs(rng.normal(1.0, 0.5));
    m.r2 = rng.uniform();
    m.nmad = std::abs(rng.normal(1.0, 0.3));
    m.z_future = rng.normal(0.0, 2.0);
    std::string t = render_bulletin(m, i % 2 ? Domain::finance : Domain::weather,
                                    rng);
    CHECK_FALSE(contains_digit(t));
    CHECK(t == keyword_blocking(t));
    CHECK(t.find(past_tendency_phrase(m.z_past)) != std::string::npos);
    CHECK(t.find(future_pressure_phrase(m.z_future)) != std::string::npos);
  }
}

TEST_CASE("finance labels bin the boundary deltas exactly") {
  auto label5 = [](double delta) {
    return finance_trend_label({100.0, 100.0 * (1.0 + delta)}, 5);
  };
  auto label3 = [](double delta) {
    return finance_trend_label({100.0, 100.0 * (1.0 + delta)}, 3);
  };
  CHECK(label5(-0.05) == 0);  // Bearish
  CHECK(label5(-0.04) == 0);  // boundary belongs to Bearish
  CHECK(label5(-0.03) == 1);  // Warning
  CHECK(label5(-0.02) == 1);  // boundary belongs to Warning
  CHECK(label5(-0.01) == 2);
  CHECK(label5(0.0) == 2);    // Neutral
  CHECK(label5(0.01) == 2);
  CHECK(label5(0.02) == 3);   // boundary belongs to Growth
  CHECK(label5(0.03) == 3);
  CHECK(label5(0.04) == 4);   // boundary belongs to Bullish
  CHECK(label5(0.05) == 4);

  CHECK(label3(-0.05) == 0);
  CHECK(label3(-0.03) == 0);
  CHECK(label3(0.0) == 1);
  CHECK(label3(0.03) == 2);
  CHECK(label3(0.05) == 2);

  CHECK(std::string(finance_label_name(4, 5)) == "Bullish");
  CHECK(std::string(finance_label_name(0, 3)) == "Negative");

  CHECK_THROWS_AS(finance_trend_label({0.0, 1.0}, 5), DataError);
  CHECK_THROWS_AS(finance_trend_label({1.0, 2.0}, 4), ConfigError);
}

TEST_CASE("daily_means groups points with a trailing partial day") {
  std::vector<double> x = {1, 2, 3, 4, 5};
  auto days = daily_means(x, 2);
  REQUIRE(days.size() == 3);
  CHECK(days[0] == doctest::Approx(1.5));
  CHECK(days[1] == doctest::Approx(3.5));
  CHECK(days[2] == doctest::Approx(5.0));
}

TEST_CASE("weather labels bin slope and future difference") {
  // four days of four points each, day means 0, 0.5, 1.0, 1.5
  std::vector<double> rising;
  for (int d = 0; d < 4; ++d) {
    for (int i = 0; i < 4; ++i) rising.push_back(0.5 * d);
  }
  std::vector<double> flat_out(4, 1.5);
  auto [past_pos, fut_neutral] = weather_trend_labels(rising, flat_out, 4);
  CHECK(past_pos == 2);      // slope 0.5 > 0.25
  CHECK(fut_neutral == 1);   // diff 0 within [-1.5, 1.5]

  std::vector<double> flat(16, 10.0);
  auto [past_n, fut_n] = weather_trend_labels(flat, std::vector<double>(4, 10.0), 4);
  CHECK(past_n == 1);
  CHECK(fut_n == 1);

  // future diff exactly -2.0 -> Negative; +-1.5 boundary stays Neutral
  auto [p1, f_neg] = weather_trend_labels(flat, std::vector<double>(4, 8.0), 4);
  CHECK(f_neg == 0);
  auto [p2, f_edge] = weather_trend_labels(flat, std::vector<double>(4, 11.5), 4);
  CHECK(f_edge == 1);
  auto [p3, f_up] = weather_trend_labels(flat, std::vector<double>(4, 11.6), 4);
  CHECK(f_up == 2);
  (void)p1; (void)p2; (void)p3;

  // slope boundary 0.25: day means 0, 0.25, 0.5 -> Neutral
  std::vector<double> edge;
  for (int d = 0; d < 3; ++d) {
    for (int i = 0; i < 2; ++i) edge.push_back(0.25 * d);
  }
  auto [past_edge, f1] = weather_trend_labels(edge, {0.5, 0.5}, 2);
  CHECK(past_edge == 1);
  (void)f1;

  CHECK_THROWS_AS(weather_trend_labels(std::vector<double>(3, 1.0), {1.0}, 4),
                  DataError);  // single daily mean
}

TEST_CASE("synth_dataset is deterministic and structurally sound") {
  SynthSpec spec;
  spec.domain = Domain::finance;
  spec.series_len = 150;
  spec.L_in = 16;
  spec.L_out = 4;
  spec.stride = 1;
  spec.p_c = 0.8;

  SynthResult a = synth_dataset(spec, 7);
  SynthResult b = synth_dataset(spec, 7);
  REQUIRE(a.all.size() == b.all.size());
  CHECK(a.all.size() == 131);  // 150 - 20 + 1 windows
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.all.size(); ++i) {
    CHECK(a.all[i].text == b.all[i].text);
    CHECK(a.all[i].consistency == b.all[i].consistency);
    CHECK(a.all[i].x_in == b.all[i].x_in);
    CHECK(a.all[i].x_in.size() == 16);
    CHECK(a.all[i].x_out.size() == 4);
    CHECK(a.all[i].trend_label.has_value());
    CHECK_FALSE(contains_digit(a.all[i].text));
    ids.insert(a.all[i].id);
  }
  CHECK(ids.size() == a.all.size());

  SynthResult other = synth_dataset(spec, 8);
  CHECK(other.all[0].x_in != a.all[0].x_in);

  // unflipped samples tell the story of their own metrics
  for (const MultiModalSample& s : a.all) {
    if (s.consistency == 1) {
      CHECK(s.text.find(past_tendency_phrase(s.metrics.z_past)) !=
            std::string::npos);
    }
  }
}

TEST_CASE("weather synth emits both labels") {
  SynthSpec spec;
  spec.domain = Domain::weather;
  spec.series_len = 700;
  spec.L_in = 28;
  spec.L_out = 4;
  spec.stride = 4;
  spec.points_per_day = 4;
  SynthResult r = synth_dataset(spec, 21);
  CHECK(r.all.size() > 10);
  for (const MultiModalSample& s : r.all) {
    CHECK(s.trend_label.has_value());
    CHECK(s.trend_label_past.has_value());
    CHECK(s.text.find("temperature") != std::string::npos);
  }
}

TEST_CASE("cue dataset hides the shift from the input window") {
  auto samples = gen_cue_dataset(200, 16, 8, 5);
  REQUIRE(samples.size() == 200);
  int strong_cue = 0;
  for (const MultiModalSample& s : samples) {
    CHECK(s.consistency == 1);  // never flipped
    CHECK(s.x_in.size() == 16);
    CHECK(s.x_out.size() == 8);
    CHECK_FALSE(s.trend_label.has_value());
    CHECK_FALSE(contains_digit(s.text));
    // the text always states its own near-term bucket faithfully
    CHECK(s.text.find(near_term_phrase(s.metrics.narrative_near,
                                       s.metrics.sigma)) !=
          std::string::npos);
    double a = s.metrics.narrative_near / s.metrics.sigma;
    if (std::abs(a) > 0.5) ++strong_cue;
  }
  // nearly all samples put the cue in an outer text bucket
  CHECK(strong_cue > 185);
}

TEST_CASE("dataset JSONL round-trips every field") {
  TempFile f("samples.jsonl");
  SynthSpec spec;
  spec.domain = Domain::weather;
  spec.series_len = 250;
  spec.L_in = 28;
  spec.L_out = 4;
  spec.stride = 1;
  spec.points_per_day = 4;
  SynthResult r = synth_dataset(spec, 13);
  auto cue = gen_cue_dataset(3, 8, 2, 13);  // adds null trend labels
  std::vector<MultiModalSample> all = r.all;
  all.insert(all.end(), cue.begin(), cue.end());

  save_samples_jsonl(all, f.path);
  auto loaded = load_samples_jsonl(f.path);
  REQUIRE(loaded.size() == all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    CHECK(loaded[i].x_in == all[i].x_in);
    CHECK(loaded[i].x_out == all[i].x_out);
    CHECK(loaded[i].text == all[i].text);
    CHECK(loaded[i].consistency == all[i].consistency);
    CHECK(loaded[i].id == all[i].id);
    CHECK(loaded[i].trend_label == all[i].trend_label);
    CHECK(loaded[i].trend_label_past == all[i].trend_label_past);
    CHECK(loaded[i].metrics.sigma == all[i].metrics.sigma);
    CHECK(loaded[i].metrics.z_past == all[i].metrics.z_past);
    CHECK(loaded[i].metrics.z_future == all[i].metrics.z_future);
    CHECK(loaded[i].metrics.narrative_near == all[i].metrics.narrative_near);
  }

  CHECK_THROWS_AS(load_samples_jsonl("/tmp/mome_ds_missing.jsonl"), IoError);
}

TEST_CASE("dataset loader rejects malformed lines") {
  TempFile f("bad.jsonl");
  {
    std::FILE* fp = std::fopen(f.path.c_str(), "w");
    std::fputs("{\"x_in\":[1,2,3]}\n", fp);
    std::fclose(fp);
  }
  CHECK_THROWS_AS(load_samples_jsonl(f.path), DataError);
}

TEST_CASE("series CSV loads rows and channels") {
  TempFile f("series.csv");
  {
    std::FILE* fp = std::fopen(f.path.c_str(), "w");
    std::fputs("1.5,2.0\n3.25,4.0\n-1.0,0.5\n", fp);
    std::fclose(fp);
  }
  Tensor t = load_series_csv(f.path);
  CHECK(t.rows == 3);
  CHECK(t.cols == 2);
  CHECK(t.at(0, 0) == 1.5);
  CHECK(t.at(2, 1) == 0.5);

  {
    std::FILE* fp = std::fopen(f.path.c_str(), "w");
    std::fputs("1,2\n3\n", fp);
    std::fclose(fp);
  }
  CHECK_THROWS_AS(load_series_csv(f.path), DataError);

  {
    std::FILE* fp = std::fopen(f.path.c_str(), "w");
    std::fputs("1,two\n", fp);
    std::fclose(fp);
  }
  CHECK_THROWS_AS(load_series_csv(f.path), DataError);
}
