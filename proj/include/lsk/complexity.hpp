#pragma once

// Parameter and operation accounting for square vs separable layers.
//
// Operation counts follow the complex bookkeeping where the real part is the
// number of multiplications and the imaginary part the number of additions.
// For one output map of size w x h fed by A = c_in * c_out kernel pairs:
//
//   square      mul = A*w*h*k^2          add = A*(w*h*(k^2 - 1) + 1)
//   separable   mul = (B+C)*w*h*k        add = (B+C)*(w*h*(k - 1) + 1)
//               with B = c_in * c_e and C = c_e * c_out.
//
// The Flops column of the comparison report adds one operation per bias per
// output pixel to the multiplications; that figure is `table_ops`.

#include <lsk/model_spec.hpp>

#include <boost/rational.hpp>

#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace lsk {

using Rational = boost::rational<std::int64_t>;

struct FlopCount {
  std::uint64_t mul = 0;
  std::uint64_t add = 0;

  FlopCount& operator+=(const FlopCount& o) {
    mul += o.mul;
    add += o.add;
    return *this;
  }
  friend FlopCount operator+(FlopCount a, const FlopCount& b) { return a += b; }
  friend bool operator==(const FlopCount&, const FlopCount&) = default;
};

struct CountOptions {
  // The staged vertical 1-D stage is bias-free so that merging stays exact.
  // Published parameter tables count a bias on the extra layer as well; this
  // flag adds those c_e phantom biases to the totals.
  bool count_extra_bias = true;
};

/// Weights only (no biases) of one layer.
inline std::uint64_t layer_weight_count(const LayerSpec& l) {
  if (l.kind == LayerKind::square) return std::uint64_t{l.c_in} * l.k * l.k * l.c_out;
  return std::uint64_t{l.c_in} * l.k * l.c_e + std::uint64_t{l.c_e} * l.k * l.c_out;
}

inline std::uint64_t layer_bias_count(const LayerSpec& l, const CountOptions& opt = {}) {
  if (!l.has_bias) return 0;
  std::uint64_t n = l.c_out;
  if (l.kind == LayerKind::separable && opt.count_extra_bias) n += l.c_e;
  return n;
}

inline std::uint64_t param_count(const ModelSpec& spec, const CountOptions& opt = {}) {
  std::uint64_t total = 0;
  for (const LayerSpec& l : spec.layers) total += layer_weight_count(l) + layer_bias_count(l, opt);
  return total;
}

/// Weight ratio of a separable layer to the square layer it replaces.
inline Rational param_ratio(std::int64_t c_prev, std::int64_t c_e, std::int64_t c_next, std::int64_t k) {
  require(c_prev >= 1 && c_e >= 1 && c_next >= 1 && k >= 1, Errc::invalid_argument,
          "param_ratio arguments must be >= 1");
  return Rational(c_prev * k * c_e + c_e * k * c_next, c_prev * k * k * c_next);
}

/// One window of k x k: k^2 multiplications and k^2 - 1 additions.
inline FlopCount flop_window(std::uint64_t k) { return {k * k, k * k - 1}; }

inline FlopCount flop_conv_square(std::uint64_t k, std::uint64_t c_in, std::uint64_t c_out,
                                  std::uint64_t h, std::uint64_t w) {
  const std::uint64_t a = c_in * c_out;
  return {a * w * h * k * k, a * (w * h * (k * k - 1) + 1)};
}

/// Vertical stage (B = c_in*c_e) plus horizontal stage (C = c_e*c_out).
inline FlopCount flop_conv_separable(std::uint64_t k, std::uint64_t c_in, std::uint64_t c_e,
                                     std::uint64_t c_out, std::uint64_t h, std::uint64_t w) {
  const std::uint64_t b = c_in * c_e;
  const std::uint64_t c = c_e * c_out;
  const FlopCount extra{b * w * h * k, b * (w * h * (k - 1) + 1)};
  const FlopCount out{c * w * h * k, c * (w * h * (k - 1) + 1)};
  return extra + out;
}

inline FlopCount flop_conv(const LayerSpec& l, std::uint64_t h, std::uint64_t w) {
  if (l.kind == LayerKind::square) return flop_conv_square(l.k, l.c_in, l.c_out, h, w);
  return flop_conv_separable(l.k, l.c_in, l.c_e, l.c_out, h, w);
}

enum class FlopGrid {
  native,   // post-upsampling models convolve at (out / scale), others at out
  feature,  // every convolution runs on an out_h x out_w feature grid
};

namespace detail {

inline std::pair<std::uint64_t, std::uint64_t> conv_grid(const ModelSpec& spec, std::uint64_t out_h,
                                                         std::uint64_t out_w, FlopGrid grid) {
  require(out_h >= 1 && out_w >= 1, Errc::invalid_shape, "output dims must be >= 1");
  if (grid == FlopGrid::feature || !spec.post_upsampling()) return {out_h, out_w};
  require(out_h % spec.scale == 0 && out_w % spec.scale == 0, Errc::invalid_shape,
          "output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
              " not divisible by scale " + std::to_string(spec.scale));
  return {out_h / spec.scale, out_w / spec.scale};
}

}  // namespace detail

/// Sum of per-layer counts. All layers use same-zero padding, so every
/// convolution in a model runs on the same spatial grid.
inline FlopCount flop_model(const ModelSpec& spec, std::uint64_t out_h, std::uint64_t out_w,
                            FlopGrid grid = FlopGrid::native) {
  const auto [h, w] = detail::conv_grid(spec, out_h, out_w, grid);
  FlopCount total;
  for (const LayerSpec& l : spec.layers) total += flop_conv(l, h, w);
  return total;
}

/// Bias additions per forward pass (one per bias per output pixel).
inline std::uint64_t bias_ops(const ModelSpec& spec, std::uint64_t out_h, std::uint64_t out_w,
                              FlopGrid grid = FlopGrid::native, const CountOptions& opt = {}) {
  const auto [h, w] = detail::conv_grid(spec, out_h, out_w, grid);
  std::uint64_t total = 0;
  for (const LayerSpec& l : spec.layers) total += layer_bias_count(l, opt) * h * w;
  return total;
}

struct FlopRatios {
  Rational alpha;       // square mul / separable mul
  Rational beta;        // square add / separable add at the given w*h
  Rational beta_limit;  // beta as w*h -> infinity
};

/// Ratios for a layer with equal channel counts on all sides.
inline FlopRatios flop_ratios(std::int64_t k, std::int64_t h = 512, std::int64_t w = 512) {
  require(k >= 1 && h >= 1 && w >= 1, Errc::invalid_argument, "flop_ratios arguments must be >= 1");
  const std::int64_t wh = w * h;
  FlopRatios r;
  // A = c^2 and B + C = 2c^2 cancel to the constants below.
  r.alpha = Rational(wh * k * k, 2 * wh * k);
  r.beta = Rational(wh * (k * k - 1) + 1, 2 * (wh * (k - 1) + 1));
  if (k == 1)
    r.beta_limit = Rational(1, 2);
  else
    r.beta_limit = Rational(k * k - 1, 2 * (k - 1));
  return r;
}

inline double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

struct ModelReport {
  std::string name;
  std::uint64_t params = 0;
  FlopCount flops;
  std::uint64_t table_ops = 0;  // flops.mul + bias_ops
};

struct PairReport {
  ModelReport normal;
  ModelReport separable;
  double param_decline_pct = 0.0;
  double flop_decline_pct = 0.0;  // on table_ops
};

inline ModelReport model_report(const ModelSpec& spec, std::uint64_t out_h, std::uint64_t out_w,
                                FlopGrid grid, const CountOptions& opt = {}) {
  ModelReport r;
  r.name = spec.name;
  r.params = param_count(spec, opt);
  r.flops = flop_model(spec, out_h, out_w, grid);
  r.table_ops = r.flops.mul + bias_ops(spec, out_h, out_w, grid, opt);
  return r;
}

inline double decline_pct(std::uint64_t before, std::uint64_t after) {
  if (before == 0) return 0.0;
  return 100.0 * (1.0 - static_cast<double>(after) / static_cast<double>(before));
}

inline std::vector<PairReport> comparison_report(const std::vector<std::pair<ModelSpec, ModelSpec>>& pairs,
                                                 std::uint64_t out_h, std::uint64_t out_w,
                                                 FlopGrid grid = FlopGrid::feature,
                                                 const CountOptions& opt = {}) {
  std::vector<PairReport> rows;
  for (const auto& [normal, separable] : pairs) {
    PairReport row;
    row.normal = model_report(normal, out_h, out_w, grid, opt);
    row.separable = model_report(separable, out_h, out_w, grid, opt);
    row.param_decline_pct = decline_pct(row.normal.params, row.separable.params);
    row.flop_decline_pct = decline_pct(row.normal.table_ops, row.separable.table_ops);
    rows.push_back(row);
  }
  return rows;
}

/// The five (normal, separable) pairs of the default comparison report.
inline std::vector<std::pair<ModelSpec, ModelSpec>> table_model_pairs(std::size_t scale = 2) {
  std::vector<std::pair<ModelSpec, ModelSpec>> pairs;
  pairs.emplace_back(srcnn_spec(false, scale), srcnn_spec(true, scale));
  pairs.emplace_back(espcn_spec(false, scale), espcn_spec(true, scale));
  for (std::size_t b = 1; b <= 3; ++b) pairs.emplace_back(vdsr_spec(false, b, scale), vdsr_spec(true, b, scale));
  return pairs;
}

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string kilo(std::uint64_t v) { return fixed(static_cast<double>(v) / 1e3, 2); }
inline std::string giga(std::uint64_t v) { return fixed(static_cast<double>(v) / 1e9, 2); }

}  // namespace detail

inline std::string report_csv(const std::vector<PairReport>& rows) {
  std::ostringstream os;
  os << "model,params_k,flops_g,mul_g,add_g,mul_add_g,param_decline_pct,flop_decline_pct\n";
  for (const PairReport& row : rows) {
    for (const ModelReport* m : {&row.normal, &row.separable}) {
      os << m->name << ',' << detail::kilo(m->params) << ',' << detail::giga(m->table_ops) << ','
         << detail::giga(m->flops.mul) << ',' << detail::giga(m->flops.add) << ','
         << detail::giga(m->flops.mul + m->flops.add) << ',' << detail::fixed(row.param_decline_pct, 2)
         << ',' << detail::fixed(row.flop_decline_pct, 2) << '\n';
    }
  }
  return os.str();
}

inline std::string report_text(const std::vector<PairReport>& rows) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %12s %10s %10s %10s %10s %10s %10s\n", "Model", "Params(K)",
                "Decline%", "Flops(G)", "Decline%", "Mul(G)", "Add(G)", "Mul+Add(G)");
  os << line;
  for (const PairReport& row : rows) {
    for (const ModelReport* m : {&row.normal, &row.separable}) {
      const bool first = m == &row.normal;
      std::snprintf(line, sizeof line, "%-14s %12s %10s %10s %10s %10s %10s %10s\n", m->name.c_str(),
                    detail::kilo(m->params).c_str(),
                    first ? "" : detail::fixed(row.param_decline_pct, 2).c_str(),
                    detail::giga(m->table_ops).c_str(),
                    first ? "" : detail::fixed(row.flop_decline_pct, 2).c_str(),
                    detail::giga(m->flops.mul).c_str(), detail::giga(m->flops.add).c_str(),
                    detail::giga(m->flops.mul + m->flops.add).c_str());
      os << line;
    }
  }
  return os.str();
}

}  // namespace lsk
