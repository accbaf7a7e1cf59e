#include "mome/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mome/error.hpp"
#include "mome/rng.hpp"

namespace mome {

namespace {

void check_pair(const std::vector<double>& pred,
                const std::vector<double>& target, const char* who) {
  if (pred.size() != target.size()) {
    throw DimensionError(std::string(who) + ": " + std::to_string(pred.size()) +
                         " predictions vs " + std::to_string(target.size()) +
                         " targets");
  }
  if (pred.empty()) {
    throw DataError(std::string(who) + ": empty prediction");
  }
}

// Shortest decimal form that round-trips back to the same double.
std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

double mse_loss(const std::vector<double>& pred,
                const std::vector<double>& target) {
  check_pair(pred, target, "mse_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

double mae_metric(const std::vector<double>& pred,
                  const std::vector<double>& target) {
  check_pair(pred, target, "mae_metric");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    acc += std::abs(pred[i] - target[i]);
  }
  return acc / static_cast<double>(pred.size());
}

double mape_metric(const std::vector<double>& pred,
                   const std::vector<double>& target) {
  check_pair(pred, target, "mape_metric");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    acc += std::abs(pred[i] - target[i]) / std::max(std::abs(target[i]), 1e-8);
  }
  return 100.0 * acc / static_cast<double>(pred.size());
}

double cross_entropy_loss(const Tensor& logits, int label) {
  if (logits.rows != 1) {
    throw DimensionError("cross_entropy_loss: expected a 1xN logit row, got " +
                         logits.shape_str());
  }
  if (label < 0 || static_cast<std::size_t>(label) >= logits.cols) {
    throw DataError("cross_entropy_loss: label " + std::to_string(label) +
                    " outside [0, " + std::to_string(logits.cols) + ")");
  }
  double m = *std::max_element(logits.data.begin(), logits.data.end());
  double sum = 0.0;
  for (double v : logits.data) sum += std::exp(v - m);
  return m + std::log(sum) - logits.data[static_cast<std::size_t>(label)];
}

Var cross_entropy_node(Graph& g, Var logits, int label) {
  const Tensor& lv = g.value(logits);
  if (lv.rows != 1) {
    throw DimensionError("cross_entropy_node: expected a 1xN logit row, got " +
                         lv.shape_str());
  }
  if (label < 0 || static_cast<std::size_t>(label) >= lv.cols) {
    throw DataError("cross_entropy_node: label " + std::to_string(label) +
                    " outside [0, " + std::to_string(lv.cols) + ")");
  }
  Var logp = g.log_softmax_rows(logits);
  return g.scale(g.pick(logp, 0, static_cast<std::size_t>(label)), -1.0);
}

Var expert_load_cv2(Graph& g, const std::vector<Var>& score_rows) {
  if (score_rows.empty()) return g.leaf(Tensor::scalar(0.0));
  Var all = score_rows[0];
  for (std::size_t i = 1; i < score_rows.size(); ++i) {
    all = g.concat_rows(all, score_rows[i]);
  }
  Var loads = g.mean_rows(all);  // 1 x E
  std::size_t E = g.value(loads).cols;
  Var mu = g.mean_all(loads);
  Var mu_row = g.scalar_mul(mu, g.leaf(Tensor(1, E, 1.0)));
  Var diff = g.sub(loads, mu_row);
  Var variance = g.mean_all(g.mul(diff, diff));
  Var inv_mu = g.inv(mu);
  return g.scalar_mul(inv_mu, g.scalar_mul(inv_mu, variance));
}

AdamState AdamState::init(const std::vector<NamedParam>& params) {
  AdamState st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const NamedParam& p : params) {
    st.m.emplace_back(p.tensor->rows, p.tensor->cols);
    st.v.emplace_back(p.tensor->rows, p.tensor->cols);
  }
  return st;
}

void adam_step(const std::vector<NamedParam>& params,
               const std::vector<Tensor>& grads, AdamState& state,
               const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) +
                         " params, " + std::to_string(grads.size()) +
                         " grads, " + std::to_string(state.m.size()) +
                         " state slots");
  }
  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = *params[i].tensor;
    const Tensor& grad = grads[i];
    if (!w.same_shape(grad)) {
      throw DimensionError("adam_step: param '" + params[i].name + "' is " +
                           w.shape_str() + " but grad is " + grad.shape_str());
    }
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      double gk = grad.data[k];
      m.data[k] = cfg.beta1 * m.data[k] + (1.0 - cfg.beta1) * gk;
      v.data[k] = cfg.beta2 * v.data[k] + (1.0 - cfg.beta2) * gk * gk;
      double mhat = m.data[k] / bc1;
      double vhat = v.data[k] / bc2;
      w.data[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

Tensor sample_input(const MultiModalSample& s, const BackboneConfig& cfg) {
  std::size_t T = cfg.lookback;
  std::size_t C = cfg.channels;
  if (s.x_in.size() != T * C) {
    throw DataError("sample '" + s.id + "': x_in has " +
                    std::to_string(s.x_in.size()) + " values, model expects " +
                    std::to_string(T) + "x" + std::to_string(C));
  }
  return Tensor::from_rows(T, C, s.x_in);
}

namespace {

// Shared forward + loss construction for the train and validation paths.
struct LossBuilder {
  Backbone& model;
  const std::vector<MultiModalSample>& data;
  const std::vector<Tensor>* H;  // cached context, null when unused
  const TrainConfig& cfg;
  RandomStream* drop_rng;

  Var operator()(Graph& g, std::size_t idx, bool train_mode) const {
    const MultiModalSample& s = data[idx];
    const BackboneConfig& mcfg = model.config();
    Tensor x = sample_input(s, mcfg);

    ForwardOptions fwd;
    std::vector<Var> score_rows;
    bool want_aux = train_mode && cfg.aux_balance_weight != 0.0;
    if (train_mode && mcfg.dropout > 0.0) fwd.dropout_rng = drop_rng;
    if (want_aux) fwd.score_vars = &score_rows;

    const Tensor* Hp = H ? &(*H)[idx] : nullptr;
    Var out = model.build(g, x, Hp, fwd);

    Var loss;
    if (cfg.task == TaskKind::forecast) {
      const Tensor& ov = g.value(out);
      if (ov.size() != s.x_out.size()) {
        throw DimensionError("sample '" + s.id + "': x_out has " +
                             std::to_string(s.x_out.size()) +
                             " values, model emits " + ov.shape_str());
      }
      Tensor target(ov.rows, ov.cols);
      std::copy(s.x_out.begin(), s.x_out.end(), target.data.begin());
      Var diff = g.sub(out, g.leaf(std::move(target)));
      loss = g.mean_all(g.mul(diff, diff));
    } else {
      if (!s.trend_label) {
        throw DataError("sample '" + s.id + "': trend task but no trend label");
      }
      loss = cross_entropy_node(g, out, *s.trend_label);
    }
    if (want_aux) {
      loss = g.add(loss, g.scale(expert_load_cv2(g, score_rows),
                                 cfg.aux_balance_weight));
    }
    return loss;
  }
};

}  // namespace

TrainResult train(Backbone& model, const std::vector<MultiModalSample>& data,
                  const ContextProvider* ctx, const TrainConfig& cfg) {
  if (data.empty()) throw DataError("train: empty dataset");
  if (cfg.lr <= 0.0) throw ConfigError("train: lr must be positive");
  if (cfg.batch < 1) throw ConfigError("train: batch must be at least 1");
  if (cfg.epochs < 0) throw ConfigError("train: negative epoch count");
  const BackboneConfig& mcfg = model.config();
  if (cfg.task != mcfg.task) {
    throw ConfigError(std::string("train: config task '") +
                      task_kind_name(cfg.task) + "' but model was built for '" +
                      task_kind_name(mcfg.task) + "'");
  }
  bool use_ctx = ctx != nullptr && mcfg.modulation;
  if (use_ctx && ctx->dprime() != mcfg.ctx_dim) {
    throw ConfigError("train: context provider emits d'=" +
                      std::to_string(ctx->dprime()) + " but model expects " +
                      std::to_string(mcfg.ctx_dim));
  }

  TrainResult res;
  if (cfg.epochs == 0) return res;

  std::size_t n = data.size();
  std::size_t n_val = n / 10;
  std::size_t n_train = n - n_val;

  std::vector<Tensor> H;
  if (use_ctx) {
    H.reserve(n);
    for (const MultiModalSample& s : data) H.push_back(ctx->context(s.id, s.text));
  }

  std::vector<NamedParam> params = model.named_params();
  AdamState opt = AdamState::init(params);
  std::vector<Tensor> grad_acc;
  grad_acc.reserve(params.size());
  for (const NamedParam& p : params) {
    grad_acc.emplace_back(p.tensor->rows, p.tensor->cols);
  }

  RandomStream drop_rng = RandomStream::derive(cfg.seed, 0x9001);
  LossBuilder build_loss{model, data, use_ctx ? &H : nullptr, cfg, &drop_rng};

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Tensor> best_params;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    RandomStream shuffle_rng =
        RandomStream::derive(cfg.seed, 0x5000 + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t batch_id = 0;
    for (std::size_t b0 = 0; b0 < n_train;
         b0 += static_cast<std::size_t>(cfg.batch), ++batch_id) {
      std::size_t b1 = std::min(b0 + static_cast<std::size_t>(cfg.batch), n_train);
      for (Tensor& acc : grad_acc) {
        std::fill(acc.data.begin(), acc.data.end(), 0.0);
      }
      for (std::size_t k = b0; k < b1; ++k) {
        Graph g;
        Var loss = build_loss(g, order[k], true);
        double lv = g.value(loss).item();
        if (!std::isfinite(lv)) {
          throw TrainingError("non-finite loss at epoch " +
                              std::to_string(epoch + 1) + ", step " +
                              std::to_string(res.steps) + ", batch " +
                              std::to_string(batch_id) + ", sample '" +
                              data[order[k]].id + "'");
        }
        epoch_loss += lv;
        g.backward(loss);
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
          Tensor gp = g.grad_of(*params[pi].tensor);
          for (std::size_t i = 0; i < gp.size(); ++i) {
            grad_acc[pi].data[i] += gp.data[i];
          }
        }
      }
      double inv_b = 1.0 / static_cast<double>(b1 - b0);
      for (Tensor& acc : grad_acc) {
        for (double& v : acc.data) v *= inv_b;
      }
      adam_step(params, grad_acc, opt, cfg);
      ++res.steps;
    }
    epoch_loss /= static_cast<double>(n_train);
    res.train_curve.push_back(epoch_loss);

    double val = epoch_loss;
    if (n_val > 0) {
      val = 0.0;
      for (std::size_t k = n_train; k < n; ++k) {
        Graph g;
        val += g.value(build_loss(g, k, false)).item();
      }
      val /= static_cast<double>(n_val);
    }
    if (!std::isfinite(val)) {
      throw TrainingError("non-finite validation loss after epoch " +
                          std::to_string(epoch + 1));
    }
    res.val_curve.push_back(val);
    if (val < res.best_val) {
      res.best_val = val;
      res.best_epoch = epoch;
      best_params.clear();
      for (const NamedParam& p : params) best_params.push_back(*p.tensor);
    }
  }

  if (res.best_epoch >= 0) {
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      *params[pi].tensor = best_params[pi];
    }
  }
  return res;
}

std::string train_result_to_csv(const TrainResult& r) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss\n";
  for (std::size_t i = 0; i < r.train_curve.size(); ++i) {
    os << (i + 1) << "," << fmt(r.train_curve[i]) << ","
       << fmt(i < r.val_curve.size() ? r.val_curve[i] : 0.0) << "\n";
  }
  return os.str();
}

EvalReport evaluate(Backbone& model, const std::vector<MultiModalSample>& data,
                    const ContextProvider* ctx, TaskKind task) {
  const BackboneConfig& mcfg = model.config();
  if (task != mcfg.task) {
    throw ConfigError(std::string("evaluate: task '") + task_kind_name(task) +
                      "' but model was built for '" +
                      task_kind_name(mcfg.task) + "'");
  }
  bool use_ctx = ctx != nullptr && mcfg.modulation;
  if (use_ctx && ctx->dprime() != mcfg.ctx_dim) {
    throw ConfigError("evaluate: context provider emits d'=" +
                      std::to_string(ctx->dprime()) + " but model expects " +
                      std::to_string(mcfg.ctx_dim));
  }

  EvalReport rep;
  rep.task = task;
  double sum_sq = 0.0, sum_abs = 0.0, sum_ape = 0.0;
  std::size_t n_points = 0, n_correct = 0;

  for (const MultiModalSample& s : data) {
    Tensor x = sample_input(s, mcfg);
    Tensor H;
    const Tensor* Hp = nullptr;
    if (use_ctx) {
      H = ctx->context(s.id, s.text);
      Hp = &H;
    }
    Tensor out = model.predict(x, Hp);

    SampleEval se;
    se.id = s.id;
    if (task == TaskKind::forecast) {
      if (out.size() != s.x_out.size()) {
        throw DimensionError("evaluate: sample '" + s.id + "' expects " +
                             std::to_string(s.x_out.size()) +
                             " values, model emits " + out.shape_str());
      }
      se.mse = mse_loss(out.data, s.x_out);
      se.mae = mae_metric(out.data, s.x_out);
      se.mape = mape_metric(out.data, s.x_out);
      for (std::size_t i = 0; i < out.size(); ++i) {
        double d = out.data[i] - s.x_out[i];
        sum_sq += d * d;
        sum_abs += std::abs(d);
        sum_ape += std::abs(d) / std::max(std::abs(s.x_out[i]), 1e-8);
      }
      n_points += out.size();
    } else {
      if (!s.trend_label) {
        throw DataError("evaluate: sample '" + s.id + "' has no trend label");
      }
      se.label = *s.trend_label;
      se.predicted = static_cast<int>(
          std::max_element(out.data.begin(), out.data.end()) -
          out.data.begin());
      if (se.predicted == se.label) ++n_correct;
    }
    rep.samples.push_back(std::move(se));
  }

  if (task == TaskKind::forecast && n_points > 0) {
    rep.mse = sum_sq / static_cast<double>(n_points);
    rep.mae = sum_abs / static_cast<double>(n_points);
    rep.mape = 100.0 * sum_ape / static_cast<double>(n_points);
  } else if (task == TaskKind::trend && !data.empty()) {
    rep.accuracy =
        100.0 * static_cast<double>(n_correct) / static_cast<double>(data.size());
  }
  return rep;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["task"] = task_kind_name(task);
  j["mse"] = mse;
  j["mae"] = mae;
  j["mape"] = mape;
  j["accuracy"] = accuracy;
  nlohmann::json arr = nlohmann::json::array();
  for (const SampleEval& s : samples) {
    nlohmann::json js;
    js["id"] = s.id;
    js["mse"] = s.mse;
    js["mae"] = s.mae;
    js["mape"] = s.mape;
    js["label"] = s.label;
    js["predicted"] = s.predicted;
    arr.push_back(std::move(js));
  }
  j["samples"] = std::move(arr);
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport rep;
  try {
    rep.task = task_kind_from(j.at("task").get<std::string>());
    rep.mse = j.at("mse").get<double>();
    rep.mae = j.at("mae").get<double>();
    rep.mape = j.at("mape").get<double>();
    rep.accuracy = j.at("accuracy").get<double>();
    for (const nlohmann::json& js : j.at("samples")) {
      SampleEval s;
      s.id = js.at("id").get<std::string>();
      s.mse = js.at("mse").get<double>();
      s.mae = js.at("mae").get<double>();
      s.mape = js.at("mape").get<double>();
      s.label = js.at("label").get<int>();
      s.predicted = js.at("predicted").get<int>();
      rep.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("EvalReport: ") + e.what());
  }
  return rep;
}

std::string SweepReport::to_csv() const {
  std::ostringstream os;
  os << "K,MSE,MAE\n";
  for (const SweepCell& c : cells) {
    os << c.K << ",";
    if (c.ok) {
      os << fmt(c.mse) << "," << fmt(c.mae);
    } else {
      os << ",";
    }
    os << "\n";
  }
  return os.str();
}

SweepReport sweep_topk(const BackboneConfig& base, const TrainConfig& tcfg,
                       const std::vector<MultiModalSample>& train_data,
                       const std::vector<MultiModalSample>& test_data,
                       const ContextProvider* ctx,
                       const std::vector<int>& K_values) {
  SweepReport rep;
  for (int K : K_values) {
    SweepCell cell;
    cell.K = K;
    try {
      BackboneConfig cfg = base;
      cfg.topk = K;
      std::unique_ptr<Backbone> model = make_backbone(cfg, tcfg.seed);
      train(*model, train_data, ctx, tcfg);
      EvalReport er = evaluate(*model, test_data, ctx, tcfg.task);
      cell.mse = er.mse;
      cell.mae = er.mae;
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
    }
    rep.cells.push_back(std::move(cell));
  }
  return rep;
}

RoutingSummary summarize_routing(const std::vector<TokenRouting>& log,
                                 std::size_t experts) {
  RoutingSummary s;
  s.load.assign(experts, 0.0);
  for (const TokenRouting& tr : log) {
    ++s.tokens;
    if (tr.selected_pre != tr.selected_post) ++s.changed;
    for (std::size_t i : tr.selected_post) {
      if (i >= experts) {
        throw DimensionError("summarize_routing: expert index " +
                             std::to_string(i) + " with only " +
                             std::to_string(experts) + " experts");
      }
      s.load[i] += 1.0;
    }
  }
  if (s.tokens > 0) {
    for (double& v : s.load) v /= static_cast<double>(s.tokens);
  }
  return s;
}

}  // namespace mome
