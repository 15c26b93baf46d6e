#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include <json.hpp>

#include "bezbot/errors.hpp"

namespace bezbot {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One observed transition: state and input at t0, state at t0 + horizon,
// with the input held constant over the interval.
struct TransitionSample {
  Vec x0;
  Vec u;
  Vec x1;
};

struct Dataset {
  std::vector<TransitionSample> samples;
};

struct ModelSpec {
  int state_dim = 0;
  int input_dim = 6;
  std::vector<int> hidden = {64, 64};
  bool time_input = false;  // append t to the network input
  double h_step = 0.0125;   // RK4 substep, s
  double horizon = 0.15;    // default prediction interval, s

  int net_input_dim() const { return state_dim + input_dim + (time_input ? 1 : 0); }
};

// Per-dimension z-score statistics, computed from the training split.
struct NormStats {
  Vec x_mean, x_std, u_mean, u_std;

  static NormStats identity(int state_dim, int input_dim) {
    return {Vec::Zero(state_dim), Vec::Ones(state_dim), Vec::Zero(input_dim),
            Vec::Ones(input_dim)};
  }
};

namespace nn {

// Dense tanh network, linear output layer. Weight/bias vectors double as
// gradient and moment accumulators.
struct Mlp {
  std::vector<Mat> w;
  std::vector<Vec> b;

  static Mlp zeros_like(const Mlp& other) {
    Mlp g;
    g.w.reserve(other.w.size());
    g.b.reserve(other.b.size());
    for (const auto& wi : other.w) g.w.push_back(Mat::Zero(wi.rows(), wi.cols()));
    for (const auto& bi : other.b) g.b.push_back(Vec::Zero(bi.size()));
    return g;
  }

  void set_zero() {
    for (auto& wi : w) wi.setZero();
    for (auto& bi : b) bi.setZero();
  }

  // Glorot-uniform hidden layers; the output layer starts at zero so a
  // fresh model predicts a zero rate field.
  void init(const std::vector<int>& sizes, std::mt19937_64& rng) {
    w.clear();
    b.clear();
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const int fan_in = sizes[l], fan_out = sizes[l + 1];
      Mat wi(fan_out, fan_in);
      const bool last = l + 2 == sizes.size();
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (int r = 0; r < fan_out; ++r)
        for (int c = 0; c < fan_in; ++c) wi(r, c) = last ? 0.0 : u(rng);
      w.push_back(std::move(wi));
      b.push_back(Vec::Zero(fan_out));
    }
  }

  struct Cache {
    Vec input;
    std::vector<Vec> post;  // tanh activations per hidden layer
  };

  Vec forward(const Vec& in, Cache* cache = nullptr) const {
    if (cache) {
      cache->input = in;
      cache->post.clear();
    }
    Vec a = in;
    for (std::size_t l = 0; l < w.size(); ++l) {
      Vec z = w[l] * a + b[l];
      if (l + 1 < w.size()) {
        a = z.array().tanh();
        if (cache) cache->post.push_back(a);
      } else {
        a = std::move(z);
      }
    }
    return a;
  }

  // Accumulates parameter gradients into `grads`, returns dL/d(input).
  Vec backward(const Cache& cache, const Vec& g_out, Mlp& grads) const {
    Vec g = g_out;
    for (int l = static_cast<int>(w.size()) - 1; l >= 0; --l) {
      const Vec& a_in = l == 0 ? cache.input : cache.post[l - 1];
      grads.w[l].noalias() += g * a_in.transpose();
      grads.b[l] += g;
      Vec g_prev = w[l].transpose() * g;
      if (l > 0) {
        const Vec& a = cache.post[l - 1];
        g_prev.array() *= 1.0 - a.array().square();
      }
      g = std::move(g_prev);
    }
    return g;
  }
};

}  // namespace nn

struct DynamicsModel {
  ModelSpec spec;
  NormStats norm;
  nn::Mlp net;

  int state_dim() const { return spec.state_dim; }
  int input_dim() const { return spec.input_dim; }

  Vec net_input(const Vec& x, const Vec& u, double t) const {
    Vec in(spec.net_input_dim());
    in.head(spec.state_dim) = (x - norm.x_mean).cwiseQuotient(norm.x_std);
    in.segment(spec.state_dim, spec.input_dim) = (u - norm.u_mean).cwiseQuotient(norm.u_std);
    if (spec.time_input) in[in.size() - 1] = t;
    return in;
  }

  // Rate estimate: network on normalized inputs, output scaled back to
  // state units per second.
  Vec rate(const Vec& x, const Vec& u, double t = 0.0, nn::Mlp::Cache* cache = nullptr) const {
    if (x.size() != spec.state_dim || u.size() != spec.input_dim)
      throw DomainError("dynamics model input dimension mismatch");
    return net.forward(net_input(x, u, t), cache).cwiseProduct(norm.x_std);
  }

  // dL/dx for a recorded rate evaluation; parameter gradients accumulate
  // into `grads`.
  Vec rate_vjp(const nn::Mlp::Cache& cache, const Vec& g_rate, nn::Mlp& grads) const {
    const Vec g_out = g_rate.cwiseProduct(norm.x_std);
    const Vec g_in = net.backward(cache, g_out, grads);
    return g_in.head(spec.state_dim).cwiseQuotient(norm.x_std);
  }

  int substeps(double t0, double t_plus) const {
    const double span = t_plus - t0;
    return std::max(1, static_cast<int>(std::llround(span / spec.h_step)));
  }

  // Fixed-step RK4 with u held constant over [t0, t_plus].
  Vec integrate(const Vec& x0, const Vec& u, double t0, double t_plus) const {
    if (t_plus < t0) throw DomainError("integration interval reversed");
    if (t_plus == t0) return x0;
    const int n = substeps(t0, t_plus);
    const double h = (t_plus - t0) / n;
    Vec x = x0;
    double t = t0;
    for (int i = 0; i < n; ++i) {
      const Vec k1 = rate(x, u, t);
      const Vec k2 = rate(x + 0.5 * h * k1, u, t + 0.5 * h);
      const Vec k3 = rate(x + 0.5 * h * k2, u, t + 0.5 * h);
      const Vec k4 = rate(x + h * k3, u, t + h);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      t += h;
      if (!x.allFinite()) throw DivergedIntegration("non-finite state during integration");
    }
    return x;
  }
};

namespace nn {

struct StepTape {
  Mlp::Cache c1, c2, c3, c4;
};

// Forward RK4 recording every rate evaluation, then reverse through the
// tape. Returns the prediction; `tape` must outlive the reverse pass.
inline Vec integrate_traced(const DynamicsModel& m, const Vec& x0, const Vec& u, double t0,
                            double t_plus, std::vector<StepTape>& tape) {
  const int n = m.substeps(t0, t_plus);
  const double h = (t_plus - t0) / n;
  tape.resize(n);
  Vec x = x0;
  double t = t0;
  for (int i = 0; i < n; ++i) {
    auto& s = tape[i];
    const Vec k1 = m.rate(x, u, t, &s.c1);
    const Vec k2 = m.rate(x + 0.5 * h * k1, u, t + 0.5 * h, &s.c2);
    const Vec k3 = m.rate(x + 0.5 * h * k2, u, t + 0.5 * h, &s.c3);
    const Vec k4 = m.rate(x + h * k3, u, t + h, &s.c4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += h;
    if (!x.allFinite()) throw DivergedIntegration("non-finite state during training rollout");
  }
  return x;
}

inline Vec integrate_vjp(const DynamicsModel& m, const std::vector<StepTape>& tape,
                         double t0, double t_plus, const Vec& g_pred, Mlp& grads) {
  const int n = static_cast<int>(tape.size());
  const double h = (t_plus - t0) / n;
  Vec lam = g_pred;
  for (int i = n - 1; i >= 0; --i) {
    const auto& s = tape[i];
    const Vec gk4 = (h / 6.0) * lam;
    const Vec gx4 = m.rate_vjp(s.c4, gk4, grads);
    const Vec gk3 = (2.0 * h / 6.0) * lam + h * gx4;
    const Vec gx3 = m.rate_vjp(s.c3, gk3, grads);
    const Vec gk2 = (2.0 * h / 6.0) * lam + 0.5 * h * gx3;
    const Vec gx2 = m.rate_vjp(s.c2, gk2, grads);
    const Vec gk1 = (h / 6.0) * lam + 0.5 * h * gx2;
    const Vec gx1 = m.rate_vjp(s.c1, gk1, grads);
    lam += gx1 + gx2 + gx3 + gx4;
  }
  return lam;
}

}  // namespace nn

// Mean squared prediction error over the batch, raw state units.
inline double loss(const DynamicsModel& model, const std::vector<TransitionSample>& batch) {
  if (batch.empty()) throw DomainError("loss over empty batch");
  double acc = 0.0;
  for (const auto& s : batch) {
    const Vec pred = model.integrate(s.x0, s.u, 0.0, model.spec.horizon);
    acc += (pred - s.x1).squaredNorm();
  }
  return acc / static_cast<double>(batch.size());
}

inline double loss_and_grad(const DynamicsModel& model,
                            const std::vector<const TransitionSample*>& batch,
                            nn::Mlp& grads) {
  double acc = 0.0;
  std::vector<nn::StepTape> tape;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const TransitionSample* s : batch) {
    const Vec pred = nn::integrate_traced(model, s->x0, s->u, 0.0, model.spec.horizon, tape);
    const Vec err = pred - s->x1;
    acc += err.squaredNorm();
    nn::integrate_vjp(model, tape, 0.0, model.spec.horizon, 2.0 * inv_b * err, grads);
  }
  return acc * inv_b;
}

struct TrainHyper {
  int epochs = 600;
  int batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 1;
  double val_frac = 0.1;
};

struct TrainReport {
  std::vector<double> train_loss;  // index 0 is the untrained model
  std::vector<double> val_loss;
  int best_epoch = 0;
};

namespace detail {

inline NormStats stats_from(const std::vector<const TransitionSample*>& samples) {
  const int sd = static_cast<int>(samples.front()->x0.size());
  const int id = static_cast<int>(samples.front()->u.size());
  NormStats st;
  st.x_mean = Vec::Zero(sd);
  st.u_mean = Vec::Zero(id);
  for (const auto* s : samples) {
    st.x_mean += s->x0;
    st.u_mean += s->u;
  }
  const double n = static_cast<double>(samples.size());
  st.x_mean /= n;
  st.u_mean /= n;
  Vec xv = Vec::Zero(sd), uv = Vec::Zero(id);
  for (const auto* s : samples) {
    xv += (s->x0 - st.x_mean).cwiseAbs2();
    uv += (s->u - st.u_mean).cwiseAbs2();
  }
  st.x_std = (xv / n).cwiseSqrt().cwiseMax(1e-8);
  st.u_std = (uv / n).cwiseSqrt().cwiseMax(1e-8);
  return st;
}

struct Adam {
  nn::Mlp m, v;
  int t = 0;

  explicit Adam(const nn::Mlp& shape)
      : m(nn::Mlp::zeros_like(shape)), v(nn::Mlp::zeros_like(shape)) {}

  void update(nn::Mlp& params, const nn::Mlp& g, const TrainHyper& hy) {
    ++t;
    const double bc1 = 1.0 - std::pow(hy.beta1, t);
    const double bc2 = 1.0 - std::pow(hy.beta2, t);
    for (std::size_t l = 0; l < params.w.size(); ++l) {
      m.w[l] = hy.beta1 * m.w[l] + (1.0 - hy.beta1) * g.w[l];
      v.w[l] = hy.beta2 * v.w[l] + (1.0 - hy.beta2) * g.w[l].cwiseAbs2();
      params.w[l].array() -=
          hy.lr * (m.w[l].array() / bc1) / ((v.w[l].array() / bc2).sqrt() + hy.adam_eps);
      m.b[l] = hy.beta1 * m.b[l] + (1.0 - hy.beta1) * g.b[l];
      v.b[l] = hy.beta2 * v.b[l] + (1.0 - hy.beta2) * g.b[l].cwiseAbs2();
      params.b[l].array() -=
          hy.lr * (m.b[l].array() / bc1) / ((v.b[l].array() / bc2).sqrt() + hy.adam_eps);
    }
  }
};

}  // namespace detail

struct TrainResult {
  DynamicsModel model;
  TrainReport report;
};

// Discretize-then-optimize: Adam on the squared prediction error through
// the unrolled RK4 rollout. Deterministic for a fixed seed; batches sum in
// ascending sample-index order. Returns the best-validation parameters.
inline TrainResult train(const Dataset& dataset, const ModelSpec& spec, const TrainHyper& hy) {
  const int n = static_cast<int>(dataset.samples.size());
  if (n < 10) throw DomainError("training needs at least 10 samples");
  for (const auto& s : dataset.samples)
    if (s.x0.size() != spec.state_dim || s.u.size() != spec.input_dim ||
        s.x1.size() != spec.state_dim)
      throw DomainError("dataset dimensions do not match model spec");

  std::mt19937_64 rng(hy.seed);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  const int n_val = std::min(n - 1, static_cast<int>(std::lround(hy.val_frac * n)));
  std::vector<const TransitionSample*> val, tr;
  for (int i = 0; i < n; ++i) {
    const TransitionSample* s = &dataset.samples[order[i]];
    (i < n_val ? val : tr).push_back(s);
  }
  std::vector<int> tr_idx(tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) tr_idx[i] = static_cast<int>(i);

  TrainResult out;
  out.model.spec = spec;
  out.model.norm = detail::stats_from(tr);
  std::vector<int> sizes{spec.net_input_dim()};
  for (int hdim : spec.hidden) sizes.push_back(hdim);
  sizes.push_back(spec.state_dim);
  out.model.net.init(sizes, rng);

  auto eval_loss = [](const DynamicsModel& m, const std::vector<const TransitionSample*>& set) {
    if (set.empty()) return 0.0;
    double acc = 0.0;
    for (const auto* s : set) acc += (m.integrate(s->x0, s->u, 0.0, m.spec.horizon) - s->x1).squaredNorm();
    return acc / static_cast<double>(set.size());
  };

  TrainReport& report = out.report;
  report.train_loss.push_back(eval_loss(out.model, tr));
  report.val_loss.push_back(eval_loss(out.model, val));
  if (!std::isfinite(report.train_loss[0]))
    throw TrainingDiverged(0, "non-finite loss at epoch 0");

  nn::Mlp best = out.model.net;
  double best_val = report.val_loss[0];
  report.best_epoch = 0;

  detail::Adam adam(out.model.net);
  nn::Mlp grads = nn::Mlp::zeros_like(out.model.net);
  std::vector<const TransitionSample*> batch;

  for (int epoch = 1; epoch <= hy.epochs; ++epoch) {
    std::shuffle(tr_idx.begin(), tr_idx.end(), rng);
    double epoch_acc = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < tr_idx.size(); start += hy.batch_size) {
      const std::size_t stop = std::min(tr_idx.size(), start + hy.batch_size);
      std::vector<int> ids(tr_idx.begin() + start, tr_idx.begin() + stop);
      std::sort(ids.begin(), ids.end());  // fixed reduction order
      batch.clear();
      for (int id : ids) batch.push_back(tr[id]);
      grads.set_zero();
      const double l = loss_and_grad(out.model, batch, grads);
      if (!std::isfinite(l)) throw TrainingDiverged(epoch, "non-finite training loss");
      adam.update(out.model.net, grads, hy);
      epoch_acc += l * static_cast<double>(batch.size());
      seen += batch.size();
    }
    report.train_loss.push_back(epoch_acc / static_cast<double>(seen));
    const double vl = eval_loss(out.model, val);
    if (!std::isfinite(vl)) throw TrainingDiverged(epoch, "non-finite validation loss");
    report.val_loss.push_back(vl);
    if (!val.empty() && vl < best_val) {
      best_val = vl;
      best = out.model.net;
      report.best_epoch = epoch;
    }
  }
  if (!val.empty())
    out.model.net = best;
  else
    report.best_epoch = hy.epochs;
  return out;
}

// -------- model file I/O (versioned JSON container) --------

inline void save_model(const DynamicsModel& m, const std::string& path) {
  nlohmann::json j;
  j["format"] = "bezbot-model";
  j["version"] = 1;
  j["state_dim"] = m.spec.state_dim;
  j["input_dim"] = m.spec.input_dim;
  j["hidden"] = m.spec.hidden;
  j["time_input"] = m.spec.time_input;
  j["h_step"] = m.spec.h_step;
  j["horizon"] = m.spec.horizon;
  auto vec_to_json = [](const Vec& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  j["norm"] = {{"x_mean", vec_to_json(m.norm.x_mean)},
               {"x_std", vec_to_json(m.norm.x_std)},
               {"u_mean", vec_to_json(m.norm.u_mean)},
               {"u_std", vec_to_json(m.norm.u_std)}};
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < m.net.w.size(); ++l) {
    nlohmann::json layer;
    layer["rows"] = m.net.w[l].rows();
    layer["cols"] = m.net.w[l].cols();
    std::vector<double> wflat;
    wflat.reserve(m.net.w[l].size());
    for (int r = 0; r < m.net.w[l].rows(); ++r)
      for (int c = 0; c < m.net.w[l].cols(); ++c) wflat.push_back(m.net.w[l](r, c));
    layer["w"] = wflat;
    layer["b"] = vec_to_json(m.net.b[l]);
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(1) << "\n";
}

inline DynamicsModel load_model(const std::string& path, int expect_state_dim = -1) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError("malformed or truncated model file " + path + ": " + e.what());
  }
  try {
    if (j.at("format") != "bezbot-model" || j.at("version") != 1)
      throw ModelFormatError("unsupported model format/version in " + path);
    DynamicsModel m;
    m.spec.state_dim = j.at("state_dim");
    m.spec.input_dim = j.at("input_dim");
    m.spec.hidden = j.at("hidden").get<std::vector<int>>();
    m.spec.time_input = j.at("time_input");
    m.spec.h_step = j.at("h_step");
    m.spec.horizon = j.at("horizon");
    if (expect_state_dim >= 0 && m.spec.state_dim != expect_state_dim)
      throw ModelFormatError("model state_dim " + std::to_string(m.spec.state_dim) +
                             " does not match expected " + std::to_string(expect_state_dim));
    auto vec_from = [](const nlohmann::json& a) {
      Vec v(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
      return v;
    };
    m.norm.x_mean = vec_from(j.at("norm").at("x_mean"));
    m.norm.x_std = vec_from(j.at("norm").at("x_std"));
    m.norm.u_mean = vec_from(j.at("norm").at("u_mean"));
    m.norm.u_std = vec_from(j.at("norm").at("u_std"));
    if (m.norm.x_mean.size() != m.spec.state_dim || m.norm.u_mean.size() != m.spec.input_dim)
      throw ModelFormatError("normalization dimensions are inconsistent in " + path);
    for (const auto& layer : j.at("layers")) {
      const int rows = layer.at("rows"), cols = layer.at("cols");
      const auto& wflat = layer.at("w");
      if (static_cast<int>(wflat.size()) != rows * cols)
        throw ModelFormatError("layer weight count mismatch in " + path);
      Mat w(rows, cols);
      std::size_t k = 0;
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) w(r, c) = wflat[k++].get<double>();
      m.net.w.push_back(std::move(w));
      m.net.b.push_back(vec_from(layer.at("b")));
    }
    // structural check: chained layer shapes and the declared dims
    if (m.net.w.empty() || m.net.w.front().cols() != m.spec.net_input_dim() ||
        m.net.w.back().rows() != m.spec.state_dim)
      throw ModelFormatError("layer shapes do not match declared dimensions in " + path);
    for (std::size_t l = 0; l + 1 < m.net.w.size(); ++l)
      if (m.net.w[l + 1].cols() != m.net.w[l].rows())
        throw ModelFormatError("layer shapes are not chained in " + path);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError("missing or mistyped field in " + path + ": " + e.what());
  }
}

}  // namespace bezbot
