#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "mome/backbones.hpp"
#include "mome/config.hpp"
#include "mome/context_provider.hpp"
#include "mome/datasets.hpp"
#include "mome/graph.hpp"
#include "mome/moe.hpp"
#include "mome/tensor.hpp"

namespace mome {

// ---------------------------------------------------------------------------
// Losses and metrics. pred/target are flattened time-major vectors.

double mse_loss(const std::vector<double>& pred,
                const std::vector<double>& target);
double mae_metric(const std::vector<double>& pred,
                  const std::vector<double>& target);
// mean(|pred - target| / max(|target|, 1e-8)) * 100.
double mape_metric(const std::vector<double>& pred,
                   const std::vector<double>& target);

// -log softmax(logits)[label] in the shifted (overflow-safe) form.
// logits is a 1 x N_c row.
double cross_entropy_loss(const Tensor& logits, int label);

// Graph node computing the same quantity, for backprop.
Var cross_entropy_node(Graph& g, Var logits, int label);

// Squared coefficient of variation of the per-expert mean routing scores:
// loads = column means of the stacked score rows, cv2 = Var(loads)/Mean^2.
// Differentiable load-balance penalty; an empty score list yields a
// constant zero node.
Var expert_load_cv2(Graph& g, const std::vector<Var>& score_rows);

// ---------------------------------------------------------------------------
// Adam with bias correction. One slot pair per parameter tensor, in the
// order given by named_params().

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t t = 0;

  static AdamState init(const std::vector<NamedParam>& params);
};

void adam_step(const std::vector<NamedParam>& params,
               const std::vector<Tensor>& grads, AdamState& state,
               const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Training loop.

struct TrainResult {
  std::vector<double> train_curve;  // mean per-sample loss by epoch
  std::vector<double> val_curve;    // task loss on the held-out tail
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  std::size_t steps = 0;  // optimizer steps taken
};

// Mini-batch Adam over the sample list. The last 10% of samples (in the
// given, time-ordered sequence) are held out for validation; the parameters
// from the best-validation epoch are restored on return. When the holdout
// rounds down to zero samples the epoch training loss doubles as the
// validation signal. Forecast targets are matched against the model output
// time-major; trend samples must carry a trend_label. Non-finite losses
// abort with epoch/step/batch context. Zero epochs leave the model untouched.
TrainResult train(Backbone& model, const std::vector<MultiModalSample>& data,
                  const ContextProvider* ctx, const TrainConfig& cfg);

// "epoch,train_loss,val_loss" rows.
std::string train_result_to_csv(const TrainResult& r);

// ---------------------------------------------------------------------------
// Evaluation.

struct SampleEval {
  std::string id;
  double mse = 0.0;
  double mae = 0.0;
  double mape = 0.0;
  int label = -1;      // trend truth
  int predicted = -1;  // trend argmax
};

struct EvalReport {
  TaskKind task = TaskKind::forecast;
  double mse = 0.0;       // pooled over all forecast points
  double mae = 0.0;
  double mape = 0.0;
  double accuracy = 0.0;  // % of argmax matches (trend)
  std::vector<SampleEval> samples;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

EvalReport evaluate(Backbone& model, const std::vector<MultiModalSample>& data,
                    const ContextProvider* ctx, TaskKind task);

// ---------------------------------------------------------------------------
// Sparse-vs-dense sweep: one training run per K value, shared seed and
// config. Failing cells record the error and the sweep continues.

struct SweepCell {
  int K = 0;
  double mse = 0.0;
  double mae = 0.0;
  bool ok = false;
  std::string error;
};

struct SweepReport {
  std::vector<SweepCell> cells;
  // "K,MSE,MAE" header; failed cells emit empty metric fields.
  std::string to_csv() const;
};

SweepReport sweep_topk(const BackboneConfig& base, const TrainConfig& tcfg,
                       const std::vector<MultiModalSample>& train_data,
                       const std::vector<MultiModalSample>& test_data,
                       const ContextProvider* ctx,
                       const std::vector<int>& K_values);

// ---------------------------------------------------------------------------
// Routing-dynamics aggregation over TokenRouting traces.

struct RoutingSummary {
  std::size_t tokens = 0;
  std::size_t changed = 0;    // tokens whose Top-K set moved pre -> post
  std::vector<double> load;   // per-expert selection frequency (sums to K)

  double changed_fraction() const {
    return tokens == 0 ? 0.0
                       : static_cast<double>(changed) /
                             static_cast<double>(tokens);
  }
};

RoutingSummary summarize_routing(const std::vector<TokenRouting>& log,
                                 std::size_t experts);

// Builds the model input from a sample: lookback x channels, time-major.
Tensor sample_input(const MultiModalSample& s, const BackboneConfig& cfg);

}  // namespace mome
