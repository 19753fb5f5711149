#pragma once

// Layer stacks built from a ModelSpec: construction, forward with a tape,
// reverse-mode backward, and conversion between staged and merged forms.

#include <lsk/conv.hpp>
#include <lsk/error.hpp>
#include <lsk/kernels.hpp>
#include <lsk/model_spec.hpp>
#include <lsk/tensor.hpp>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace lsk {

struct ActivationStage {
  ActivationKind kind = ActivationKind::identity;
};

struct ShuffleStage {
  std::size_t r = 2;
};

template <class T>
using Stage = std::variant<Conv2DLayer<T>, SeparablePair<T>, ActivationStage, ShuffleStage>;

/// Mutable view of one trainable tensor.
template <class T>
struct ParamView {
  std::string name;
  std::span<T> values;
  std::vector<std::size_t> dims;
};

namespace detail {

inline std::uint64_t next_revision() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

}  // namespace detail

template <class T>
class Network {
 public:
  Network() = default;
  Network(ModelSpec spec, std::vector<Stage<T>> stages, std::vector<std::size_t> layer_ends)
      : spec_(std::move(spec)), stages_(std::move(stages)), layer_ends_(std::move(layer_ends)) {}

  const ModelSpec& spec() const { return spec_; }
  const std::vector<Stage<T>>& stages() const { return stages_; }
  bool residual() const { return spec_.residual(); }

  /// Index of the last stage belonging to LayerSpec i (its activation if any).
  std::size_t layer_end(std::size_t i) const { return layer_ends_.at(i); }

  /// Changes whenever parameters may have been modified through this object.
  std::uint64_t revision() const { return revision_; }
  void touch() { revision_ = detail::next_revision(); }

  /// Mutable access. Invalidates outstanding tapes.
  std::vector<Stage<T>>& mutable_stages() {
    touch();
    return stages_;
  }

  /// Trainable tensors in a fixed order. Invalidates outstanding tapes.
  std::vector<ParamView<T>> parameters() {
    touch();
    std::vector<ParamView<T>> out;
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      const std::string prefix = "s" + std::to_string(s) + ".";
      if (auto* conv = std::get_if<Conv2DLayer<T>>(&stages_[s])) {
        add_conv(out, prefix, conv->weight, conv->bias);
      } else if (auto* pair = std::get_if<SeparablePair<T>>(&stages_[s])) {
        add_conv(out, prefix + "vertical.", pair->vertical.weight, pair->vertical.bias);
        add_conv(out, prefix + "horizontal.", pair->horizontal.weight, pair->horizontal.bias);
      }
    }
    return out;
  }

  /// Number of trainable scalars.
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& st : stages_) {
      if (const auto* conv = std::get_if<Conv2DLayer<T>>(&st)) {
        n += conv->weight.size() + conv->bias.size();
      } else if (const auto* pair = std::get_if<SeparablePair<T>>(&st)) {
        n += pair->vertical.weight.size() + pair->vertical.bias.size() + pair->horizontal.weight.size() +
             pair->horizontal.bias.size();
      }
    }
    return n;
  }

  template <class U>
  Network<U> cast() const {
    std::vector<Stage<U>> stages;
    for (const auto& st : stages_) {
      if (const auto* conv = std::get_if<Conv2DLayer<T>>(&st)) {
        stages.push_back(Conv2DLayer<U>{conv->weight.template cast<U>(), cast_vec<U>(conv->bias), conv->padding});
      } else if (const auto* pair = std::get_if<SeparablePair<T>>(&st)) {
        SeparablePair<U> p;
        p.vertical = {pair->vertical.orientation, pair->vertical.weight.template cast<U>(),
                      cast_vec<U>(pair->vertical.bias), pair->vertical.padding};
        p.horizontal = {pair->horizontal.orientation, pair->horizontal.weight.template cast<U>(),
                        cast_vec<U>(pair->horizontal.bias), pair->horizontal.padding};
        stages.push_back(std::move(p));
      } else if (const auto* act = std::get_if<ActivationStage>(&st)) {
        stages.push_back(*act);
      } else {
        stages.push_back(std::get<ShuffleStage>(st));
      }
    }
    return Network<U>(spec_, std::move(stages), layer_ends_);
  }

 private:
  template <class U>
  static std::vector<U> cast_vec(const std::vector<T>& v) {
    return std::vector<U>(v.begin(), v.end());
  }

  static void add_conv(std::vector<ParamView<T>>& out, const std::string& prefix, BasicTensor4<T>& w,
                       std::vector<T>& b) {
    const Shape4 s = w.shape();
    out.push_back({prefix + "weight", w.data(), {s.n, s.c, s.h, s.w}});
    if (!b.empty()) out.push_back({prefix + "bias", std::span<T>(b), {b.size()}});
  }

  ModelSpec spec_;
  std::vector<Stage<T>> stages_;
  std::vector<std::size_t> layer_ends_;
  std::uint64_t revision_ = detail::next_revision();
};

/// Uniform draw in [-bound, bound) per weight; biases start at zero.
template <class T>
void init_uniform(BasicTensor4<T>& w, Rng& rng, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (T& v : w.data()) v = static_cast<T>(-bound + 2.0 * bound * rng.uniform01());
}

/// Zero-initialized network for `spec` (all layers use same-size zero padding).
template <class T = float>
Network<T> build_zero_model(const ModelSpec& spec) {
  spec.validate();
  std::vector<Stage<T>> stages;
  std::vector<std::size_t> ends;
  for (const LayerSpec& l : spec.layers) {
    if (l.kind == LayerKind::square) {
      stages.push_back(Conv2DLayer<T>{BasicTensor4<T>(Shape4{l.c_out, l.c_in, l.k, l.k}),
                                      l.has_bias ? std::vector<T>(l.c_out, T(0)) : std::vector<T>{},
                                      Padding::same_zero});
    } else {
      stages.push_back(make_separable_pair<T>(l.c_in, l.c_e, l.c_out, l.k, l.has_bias, Padding::same_zero));
    }
    if (l.activation != ActivationKind::identity) stages.push_back(ActivationStage{l.activation});
    ends.push_back(stages.size() - 1);
  }
  if (spec.post_upsampling()) stages.push_back(ShuffleStage{spec.scale});
  return Network<T>(spec, std::move(stages), std::move(ends));
}

/// Uniform +-1/sqrt(fan_in) weights, fan_in = c_in * k * k for square layers
/// and c_in * k for each 1-D stage.
template <class T = float>
Network<T> build_model(const ModelSpec& spec, Rng& rng) {
  Network<T> net = build_zero_model<T>(spec);
  for (auto& st : net.mutable_stages()) {
    if (auto* conv = std::get_if<Conv2DLayer<T>>(&st)) {
      init_uniform(conv->weight, rng, conv->c_in() * conv->k() * conv->k());
    } else if (auto* pair = std::get_if<SeparablePair<T>>(&st)) {
      init_uniform(pair->vertical.weight, rng, pair->vertical.c_in() * pair->k());
      init_uniform(pair->horizontal.weight, rng, pair->horizontal.c_in() * pair->k());
    }
  }
  return net;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <class T>
struct Tape {
  std::uint64_t revision = 0;
  BasicTensor4<T> input;
  std::vector<BasicTensor4<T>> stage_inputs;  // input of every stage
  std::vector<BasicTensor4<T>> extra;         // vertical-stage output of separable pairs (else empty)
};

template <class T>
struct ForwardResult {
  BasicTensor4<T> output;
  Tape<T> tape;
};

namespace detail {

template <class T>
BasicTensor4<T> apply_stage(const Stage<T>& st, const BasicTensor4<T>& x, BasicTensor4<T>* extra) {
  if (const auto* conv = std::get_if<Conv2DLayer<T>>(&st)) return conv2d_forward(x, *conv);
  if (const auto* pair = std::get_if<SeparablePair<T>>(&st)) {
    BasicTensor4<T> mid = conv1d_forward(x, pair->vertical);
    BasicTensor4<T> out = conv1d_forward(mid, pair->horizontal);
    if (extra) *extra = std::move(mid);
    return out;
  }
  if (const auto* act = std::get_if<ActivationStage>(&st)) return activation_forward(x, act->kind);
  return pixel_shuffle(x, std::get<ShuffleStage>(st).r);
}

template <class T>
void check_input(const Network<T>& net, const BasicTensor4<T>& x) {
  const std::size_t c_in = net.spec().layers.front().c_in;
  require(x.shape().c == c_in, Errc::shape_mismatch,
          "network expects " + std::to_string(c_in) + " input channels, got " + x.shape().str());
}

}  // namespace detail

/// Output only, no tape.
template <class T>
BasicTensor4<T> predict(const Network<T>& net, const BasicTensor4<T>& x) {
  detail::check_input(net, x);
  BasicTensor4<T> cur = x;
  for (const auto& st : net.stages()) cur = detail::apply_stage(st, cur, static_cast<BasicTensor4<T>*>(nullptr));
  if (net.residual()) cur = cur + x;
  return cur;
}

template <class T>
ForwardResult<T> forward(const Network<T>& net, const BasicTensor4<T>& x) {
  detail::check_input(net, x);
  ForwardResult<T> r;
  r.tape.revision = net.revision();
  r.tape.input = x;
  BasicTensor4<T> cur = x;
  for (const auto& st : net.stages()) {
    BasicTensor4<T> extra;
    r.tape.stage_inputs.push_back(cur);
    cur = detail::apply_stage(st, cur, &extra);
    r.tape.extra.push_back(std::move(extra));
  }
  if (net.residual()) cur = cur + x;
  r.output = std::move(cur);
  return r;
}

/// Feature maps after each LayerSpec (post-activation), in spec order.
template <class T>
std::vector<BasicTensor4<T>> layer_features(const Network<T>& net, const BasicTensor4<T>& x) {
  const ForwardResult<T> r = forward(net, x);
  std::vector<BasicTensor4<T>> out;
  for (std::size_t i = 0; i < net.spec().layers.size(); ++i) {
    const std::size_t end = net.layer_end(i);
    out.push_back(end + 1 < r.tape.stage_inputs.size() ? r.tape.stage_inputs[end + 1]
                                                       : detail::apply_stage(net.stages()[end],
                                                                             r.tape.stage_inputs[end],
                                                                             static_cast<BasicTensor4<T>*>(nullptr)));
  }
  return out;
}

/// Gradients aligned with Network::parameters() order.
template <class T>
using Gradients = std::vector<std::vector<T>>;

template <class T>
Gradients<T> backward(const Network<T>& net, const Tape<T>& tape, const BasicTensor4<T>& grad_y) {
  require(tape.revision == net.revision() && tape.stage_inputs.size() == net.stages().size(), Errc::invalid_state,
          "tape does not belong to the current network parameters; run forward again");
  std::vector<std::vector<std::vector<T>>> per_stage(net.stages().size());
  BasicTensor4<T> g = grad_y;
  for (std::size_t s = net.stages().size(); s-- > 0;) {
    const auto& st = net.stages()[s];
    const BasicTensor4<T>& in = tape.stage_inputs[s];
    if (const auto* conv = std::get_if<Conv2DLayer<T>>(&st)) {
      ConvGrads<T> cg = conv_backward(in, *conv, g, s > 0);
      per_stage[s].push_back(cg.grad_w.vec());
      if (conv->has_bias()) per_stage[s].push_back(std::move(cg.grad_b));
      g = std::move(cg.grad_x);
    } else if (const auto* pair = std::get_if<SeparablePair<T>>(&st)) {
      ConvGrads<T> hg = conv_backward(tape.extra[s], pair->horizontal, g);
      ConvGrads<T> vg = conv_backward(in, pair->vertical, hg.grad_x, s > 0);
      per_stage[s].push_back(vg.grad_w.vec());
      per_stage[s].push_back(hg.grad_w.vec());
      if (pair->horizontal.has_bias()) per_stage[s].push_back(std::move(hg.grad_b));
      g = std::move(vg.grad_x);
    } else if (const auto* act = std::get_if<ActivationStage>(&st)) {
      g = activation_backward(in, act->kind, g);
    } else {
      g = pixel_unshuffle(g, std::get<ShuffleStage>(st).r);
    }
  }
  Gradients<T> out;
  for (auto& v : per_stage)
    for (auto& grad : v) out.push_back(std::move(grad));
  return out;
}

// ---------------------------------------------------------------------------
// Conversions

/// Replaces every separable pair by its merged square layer.
template <class T>
Network<T> merge_network(const Network<T>& net) {
  ModelSpec spec = net.spec();
  for (LayerSpec& l : spec.layers)
    if (l.kind == LayerKind::separable) {
      l.kind = LayerKind::square;
      l.c_e = 0;
    }
  std::vector<Stage<T>> stages;
  for (const auto& st : net.stages()) {
    if (const auto* pair = std::get_if<SeparablePair<T>>(&st))
      stages.push_back(merge_layers(*pair));
    else
      stages.push_back(st);
  }
  std::vector<std::size_t> ends;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) ends.push_back(net.layer_end(i));
  return Network<T>(std::move(spec), std::move(stages), std::move(ends));
}

template <class T>
struct NetworkDecomposition {
  Network<T> network;
  std::vector<std::size_t> layers;   // LayerSpec indices that were factorized
  std::vector<double> residuals;     // per factorized layer
};

/// Factorizes square layers with c_in > 1 and c_out > 1 into separable pairs
/// with c_e extra channels. 0 picks each layer's full rank, min(c_in, c_out) * k,
/// which reproduces the square kernel exactly.
template <class T>
NetworkDecomposition<T> decompose_network(const Network<T>& net, std::size_t c_e) {
  NetworkDecomposition<T> out;
  ModelSpec spec = net.spec();
  std::vector<Stage<T>> stages = net.stages();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    LayerSpec& l = spec.layers[i];
    if (l.kind != LayerKind::square || l.c_in == 1 || l.c_out == 1) continue;
    const std::size_t conv_stage = l.activation == ActivationKind::identity ? net.layer_end(i) : net.layer_end(i) - 1;
    const auto& conv = std::get<Conv2DLayer<T>>(stages[conv_stage]);
    const std::size_t budget = c_e == 0 ? std::min(l.c_in, l.c_out) * l.k : c_e;
    LayerDecomposition<T> d = decompose_layer(conv, budget);
    out.layers.push_back(i);
    out.residuals.push_back(d.approx_error);
    stages[conv_stage] = std::move(d.pair);
    l.kind = LayerKind::separable;
    l.c_e = budget;
  }
  std::vector<std::size_t> ends;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) ends.push_back(net.layer_end(i));
  out.network = Network<T>(std::move(spec), std::move(stages), std::move(ends));
  return out;
}

}  // namespace lsk
