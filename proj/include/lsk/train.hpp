#pragma once

// Losses, optimizers, the training loop and finite-difference gradient checks.

#include <lsk/error.hpp>
#include <lsk/imaging.hpp>
#include <lsk/network.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

namespace lsk {

enum class LossKind { mse, l1 };

inline std::string to_string(LossKind k) { return k == LossKind::mse ? "mse" : "l1"; }

inline LossKind parse_loss(const std::string& s) {
  if (s == "mse") return LossKind::mse;
  if (s == "l1") return LossKind::l1;
  fail(Errc::invalid_argument, "unknown loss '" + s + "' (expected mse or l1)");
}

template <class T>
struct LossValue {
  double value = 0.0;
  BasicTensor4<T> grad;  // d value / d prediction
};

/// Mean over all elements.
template <class T>
LossValue<T> compute_loss(LossKind kind, const BasicTensor4<T>& pred, const BasicTensor4<T>& target) {
  require(pred.shape() == target.shape(), Errc::shape_mismatch,
          "prediction " + pred.shape().str() + " vs target " + target.shape().str());
  LossValue<T> out{0.0, BasicTensor4<T>(pred.shape())};
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
    if (kind == LossKind::mse) {
      out.value += d * d;
      out.grad.data()[i] = static_cast<T>(2.0 * d / n);
    } else {
      out.value += std::abs(d);
      out.grad.data()[i] = static_cast<T>((d > 0.0) - (d < 0.0)) / static_cast<T>(n);
    }
  }
  out.value /= n;
  return out;
}

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { sgd_momentum, adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd" || s == "sgd-momentum") return OptimizerKind::sgd_momentum;
  if (s == "adam") return OptimizerKind::adam;
  fail(Errc::invalid_argument, "unknown optimizer '" + s + "' (expected sgd or adam)");
}

/// Piecewise-constant learning rate: the entry with the largest start epoch
/// not exceeding the current (0-based) epoch applies.
struct LrSchedule {
  std::vector<std::pair<std::size_t, double>> steps{{0, 1e-3}};

  double at(std::size_t epoch) const {
    double lr = steps.front().second;
    for (const auto& [start, value] : steps)
      if (start <= epoch) lr = value;
    return lr;
  }

  void validate() const {
    require(!steps.empty() && steps.front().first == 0, Errc::invalid_argument,
            "learning-rate schedule must start at epoch 0");
    for (std::size_t i = 0; i < steps.size(); ++i) {
      require(steps[i].second >= 0.0 && std::isfinite(steps[i].second), Errc::invalid_argument,
              "learning rates must be finite and non-negative");
      if (i > 0)
        require(steps[i].first > steps[i - 1].first, Errc::invalid_argument,
                "learning-rate schedule epochs must increase");
    }
  }
};

/// "0:1e-2,30:1e-3,80:1e-4" or a single rate "1e-3".
inline LrSchedule parse_schedule(const std::string& text) {
  LrSchedule s;
  s.steps.clear();
  std::size_t pos = 0;
  try {
    while (pos <= text.size()) {
      const std::size_t comma = text.find(',', pos);
      const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      const std::size_t colon = item.find(':');
      std::size_t used = 0;
      if (colon == std::string::npos) {
        const double lr = std::stod(item, &used);
        require(used == item.size(), Errc::invalid_argument, "");
        s.steps.push_back({0, lr});
      } else {
        const std::string e = item.substr(0, colon), r = item.substr(colon + 1);
        const unsigned long epoch = std::stoul(e, &used);
        require(used == e.size(), Errc::invalid_argument, "");
        const double lr = std::stod(r, &used);
        require(used == r.size(), Errc::invalid_argument, "");
        s.steps.push_back({epoch, lr});
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  } catch (const std::exception&) {
    fail(Errc::invalid_argument, "bad learning-rate schedule '" + text + "'");
  }
  s.validate();
  return s;
}

inline std::string format_schedule(const LrSchedule& s) {
  std::string out;
  char buf[64];
  for (const auto& [epoch, lr] : s.steps) {
    std::snprintf(buf, sizeof buf, "%s%zu:%.17g", out.empty() ? "" : ",", epoch, lr);
    out += buf;
  }
  return out;
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  LrSchedule schedule;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm threshold; 0 disables
};

template <class T>
double global_norm(const Gradients<T>& g) {
  double s = 0.0;
  for (const auto& v : g)
    for (T x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

/// Scales all gradients so their global norm is at most max_norm.
template <class T>
void clip_by_global_norm(Gradients<T>& g, double max_norm) {
  if (max_norm <= 0.0) return;
  const double n = global_norm(g);
  if (n <= max_norm || n == 0.0) return;
  const double f = max_norm / n;
  for (auto& v : g)
    for (T& x : v) x = static_cast<T>(x * f);
}

template <class T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(std::move(cfg)) { cfg_.schedule.validate(); }

  const OptimizerConfig& config() const { return cfg_; }

  void step(Network<T>& net, Gradients<T> grads, double lr) {
    clip_by_global_norm(grads, cfg_.clip_norm);
    auto params = net.parameters();
    require(params.size() == grads.size(), Errc::shape_mismatch, "gradient list does not match parameters");
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.values.size(), 0.0);
        v_.emplace_back(cfg_.kind == OptimizerKind::adam ? p.values.size() : 0, 0.0);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto values = params[p].values;
      const auto& g = grads[p];
      require(g.size() == values.size(), Errc::shape_mismatch, "gradient size mismatch for " + params[p].name);
      auto& m = m_[p];
      if (cfg_.kind == OptimizerKind::sgd_momentum) {
        for (std::size_t i = 0; i < values.size(); ++i) {
          m[i] = cfg_.momentum * m[i] + static_cast<double>(g[i]);
          values[i] = static_cast<T>(values[i] - lr * m[i]);
        }
      } else {
        auto& v = v_[p];
        for (std::size_t i = 0; i < values.size(); ++i) {
          const double gi = g[i];
          m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
          v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
          const double mh = m[i] / bc1, vh = v[i] / bc2;
          values[i] = static_cast<T>(values[i] - lr * mh / (std::sqrt(vh) + cfg_.epsilon));
        }
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

/// Per-family defaults from the reference training configurations.
struct TrainPreset {
  std::size_t epochs;
  std::size_t batch_size;
  OptimizerConfig optimizer;
};

inline TrainPreset reference_preset(const ModelSpec& spec) {
  TrainPreset p{};
  if (spec.post_upsampling()) {
    p = {100, 64, {}};
    p.optimizer.kind = OptimizerKind::adam;
    p.optimizer.schedule.steps = {{0, 1e-2}, {30, 1e-3}, {80, 1e-4}};
  } else if (spec.residual()) {
    p = {80, 16, {}};
    p.optimizer.kind = OptimizerKind::sgd_momentum;
    p.optimizer.schedule.steps = {{0, 0.1}};
    p.optimizer.clip_norm = 0.4;
  } else {
    p = {400, 16, {}};
    p.optimizer.kind = OptimizerKind::sgd_momentum;
    p.optimizer.schedule.steps = {{0, 1e-4}};
  }
  return p;
}

// ---------------------------------------------------------------------------
// Training loop

/// One training or validation example on the [0, 255] scale. For
/// pre-upsampling models `input` is the coarse HR image; for pixel-shuffle
/// models it is the LR image. `target` is always HR.
struct Example {
  PlaneF input;
  PlaneF target;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  OptimizerConfig optimizer;
  LossKind loss = LossKind::mse;
  std::uint64_t seed = 1;
  std::size_t shave = 0;  // border removed for validation PSNR
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean training loss over the epoch's batches
  double val_psnr = 0.0;  // mean over validation examples (0 if none)

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

template <class T>
struct TrainResult {
  Network<T> final_net;
  Network<T> best_net;
  std::size_t best_epoch = 0;
  std::vector<EpochLog> log;
};

/// Called after every epoch; `improved` is true when this epoch set a new
/// best validation PSNR.
template <class T>
using EpochCallback = std::function<void(const EpochLog&, const Network<T>& net, bool improved)>;

template <class T>
double evaluate_psnr(const Network<T>& net, const std::vector<Example>& examples, std::size_t shave) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const Example& ex : examples) {
    const BasicTensor4<T> y = predict(net, plane_to_tensor<T>(ex.input));
    total += psnr(clamp_plane(tensor_to_plane(y)), ex.target, shave);
  }
  return total / static_cast<double>(examples.size());
}

namespace detail {

template <class T>
BasicTensor4<T> stack(const std::vector<Example>& data, const std::vector<std::size_t>& idx, std::size_t begin,
                      std::size_t end, bool target) {
  const PlaneF& first = target ? data[idx[begin]].target : data[idx[begin]].input;
  BasicTensor4<T> out(Shape4{end - begin, 1, first.h, first.w});
  for (std::size_t b = begin; b < end; ++b) {
    const PlaneF& p = target ? data[idx[b]].target : data[idx[b]].input;
    require(p.w == first.w && p.h == first.h, Errc::shape_mismatch, "training patches must share one size");
    auto dst = out.plane(b - begin, 0);
    for (std::size_t i = 0; i < p.data.size(); ++i) dst[i] = static_cast<T>(p.data[i] / 255.0);
  }
  return out;
}

}  // namespace detail

/// Mini-batch training with a seeded shuffle per epoch. Aborts with a
/// numeric-failure error when the loss stops being finite.
template <class T>
TrainResult<T> train(Network<T> net, const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                     const TrainConfig& cfg, const std::type_identity_t<EpochCallback<T>>& on_epoch = {}) {
  require(!train_set.empty(), Errc::invalid_argument, "training set is empty");
  require(cfg.batch_size >= 1, Errc::invalid_argument, "batch size must be >= 1");
  Optimizer<T> opt(cfg.optimizer);
  Rng rng(cfg.seed);
  TrainResult<T> result;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    const double lr = cfg.optimizer.schedule.at(epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const BasicTensor4<T> x = detail::stack<T>(train_set, order, b, e, false);
      const BasicTensor4<T> t = detail::stack<T>(train_set, order, b, e, true);
      ForwardResult<T> fr = forward(net, x);
      LossValue<T> lv = compute_loss(cfg.loss, fr.output, t);
      if (!std::isfinite(lv.value))
        fail(Errc::numeric_failure, "loss is not finite at epoch " + std::to_string(epoch + 1) + ", batch " +
                                        std::to_string(batches + 1) + " (lr " + std::to_string(lr) + ")");
      Gradients<T> g = backward(net, fr.tape, lv.grad);
      if (lr > 0.0) opt.step(net, std::move(g), lr);
      loss_sum += lv.value;
      ++batches;
    }
    EpochLog entry{epoch + 1, loss_sum / static_cast<double>(batches), evaluate_psnr(net, val_set, cfg.shave)};
    if (!std::isfinite(entry.val_psnr))
      fail(Errc::numeric_failure, "validation PSNR is not finite at epoch " + std::to_string(epoch + 1));
    const bool improved = entry.val_psnr > best;
    if (improved) {
      best = entry.val_psnr;
      result.best_net = net;
      result.best_epoch = entry.epoch;
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry, net, improved);
  }
  if (cfg.epochs == 0) result.best_net = net;
  result.final_net = std::move(net);
  return result;
}

// ---------------------------------------------------------------------------
// Gradient check

/// Compares backward() against central differences of L = sum(y * probe) for a
/// seeded random probe, in double precision. Returns the max relative error
/// |a - n| / max(|a|, |n|, floor) over all parameters.
inline double grad_check(const Network<double>& net_in, const Tensor4d& x, double epsilon = 1e-6,
                         std::uint64_t probe_seed = 7, double floor = 1e-6) {
  Network<double> net = net_in;
  const ForwardResult<double> fr = forward(net, x);
  Rng rng(probe_seed);
  const Tensor4d probe = random_uniform<double>(rng, fr.output.shape(), -1.0, 1.0);
  const Gradients<double> analytic = backward(net, fr.tape, probe);

  auto loss = [&]() {
    const Tensor4d y = predict(net, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * probe.data()[i];
    return s;
  };
  auto params = net.parameters();
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p].values.size(); ++i) {
      double& v = params[p].values[i];
      const double saved = v;
      v = saved + epsilon;
      const double up = loss();
      v = saved - epsilon;
      const double down = loss();
      v = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[p][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor}));
    }
  return worst;
}

}  // namespace lsk
