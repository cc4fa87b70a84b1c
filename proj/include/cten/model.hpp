#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cten/common.hpp"
#include "cten/rng.hpp"
#include "cten/tape.hpp"
#include "cten/tensor.hpp"

namespace cten {

enum class Pooling { kMeanMax, kMean, kMax };

inline const char* pooling_name(Pooling p) {
  switch (p) {
    case Pooling::kMeanMax: return "mean_max";
    case Pooling::kMean: return "mean";
    case Pooling::kMax: return "max";
  }
  return "?";
}

/// Which architectural pieces are active. The five classic ablation variants
/// use attention_heads == 0; the temporal-attention extension adds one
/// multi-head block between the energy field and pooling.
struct AblationConfig {
  bool use_phase = true;
  bool use_interaction = true;
  Pooling pooling = Pooling::kMeanMax;
  std::size_t attention_heads = 0;  // 0 = no attention block

  bool operator==(const AblationConfig&) const = default;
};

/// Structural configuration: dimensions plus the ablation flags. alpha is a
/// fixed residual scale, not a learnable parameter.
struct ModelSpec {
  std::size_t input_channels = 400;  // D
  std::size_t hidden = 160;          // H
  std::size_t rank = 48;             // R
  std::size_t n_classes = 12;        // C
  std::size_t mlp_hidden = 128;      // M
  std::size_t ffn_hidden = 0;        // attention FFN width; 0 means 2*hidden
  double alpha = 0.1;
  AblationConfig ablation;

  std::size_t feature_dim() const {
    return ablation.pooling == Pooling::kMeanMax ? 2 * hidden : hidden;
  }
  std::size_t ffn_dim() const { return ffn_hidden ? ffn_hidden : 2 * hidden; }

  void validate() const {
    if (input_channels == 0 || hidden == 0 || mlp_hidden == 0)
      throw DomainError("ModelSpec: zero-sized dimension");
    if (n_classes < 2) throw DomainError("ModelSpec: need at least 2 classes");
    if (ablation.use_interaction && rank == 0)
      throw DomainError("ModelSpec: interaction enabled with rank 0");
    if (ablation.attention_heads > 0) {
      if (hidden % ablation.attention_heads != 0)
        throw DomainError("ModelSpec: hidden " + std::to_string(hidden) +
                          " not divisible by " +
                          std::to_string(ablation.attention_heads) + " heads");
      if (hidden < 2)
        throw DomainError("ModelSpec: attention needs hidden >= 2");
    }
  }

  bool operator==(const ModelSpec&) const = default;
};

struct AttentionParams {
  Tensor w_q, w_k, w_v, w_o;                          // [H,H]
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;      // [H]
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;              // [H,Hff],[Hff],[Hff,H],[H]
};

/// All learnable tensors of one model variant. omega/phi exist for every
/// variant (they are part of the reported parameter budget even when phase
/// modulation is ablated); the interaction matrices exist only when the
/// interaction module does.
struct CtenParams {
  ModelSpec spec;
  Tensor w;              // [D,H] projection, bias-free
  Tensor omega, phi;     // [H] rad/s, rad
  Tensor w_int1, w_int2; // [H,R],[R,H]
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  std::optional<AttentionParams> attention;

  /// Learnable tensors in canonical order, shared by the optimizer, the
  /// checkpoint format and gradient checks.
  std::vector<std::pair<std::string, Tensor*>> named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out = {
        {"w", &w}, {"omega", &omega}, {"phi", &phi}};
    if (spec.ablation.use_interaction) {
      out.emplace_back("w_int1", &w_int1);
      out.emplace_back("w_int2", &w_int2);
    }
    out.emplace_back("mlp_w1", &mlp_w1);
    out.emplace_back("mlp_b1", &mlp_b1);
    out.emplace_back("mlp_w2", &mlp_w2);
    out.emplace_back("mlp_b2", &mlp_b2);
    if (attention) {
      AttentionParams& a = *attention;
      out.emplace_back("attn_wq", &a.w_q);
      out.emplace_back("attn_wk", &a.w_k);
      out.emplace_back("attn_wv", &a.w_v);
      out.emplace_back("attn_wo", &a.w_o);
      out.emplace_back("attn_ln1_gain", &a.ln1_gain);
      out.emplace_back("attn_ln1_bias", &a.ln1_bias);
      out.emplace_back("attn_ln2_gain", &a.ln2_gain);
      out.emplace_back("attn_ln2_bias", &a.ln2_bias);
      out.emplace_back("attn_ffn_w1", &a.ffn_w1);
      out.emplace_back("attn_ffn_b1", &a.ffn_b1);
      out.emplace_back("attn_ffn_w2", &a.ffn_w2);
      out.emplace_back("attn_ffn_b2", &a.ffn_b2);
    }
    return out;
  }

  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const {
    auto mut = const_cast<CtenParams*>(this)->named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [name, t] : mut) out.emplace_back(name, t);
    return out;
  }
};

/// Exact count of learnable scalars for a given structure (alpha excluded;
/// omega/phi always included; interaction matrices only when enabled).
inline std::size_t parameter_count(const ModelSpec& spec) {
  spec.validate();
  const std::size_t d = spec.input_channels, h = spec.hidden, r = spec.rank,
                    c = spec.n_classes, m = spec.mlp_hidden,
                    f = spec.feature_dim();
  std::size_t n = d * h + 2 * h;  // projection + wave parameters
  if (spec.ablation.use_interaction) n += 2 * h * r;
  n += f * m + m + m * c + c;  // two-layer MLP head
  if (spec.ablation.attention_heads > 0) {
    const std::size_t ff = spec.ffn_dim();
    n += 4 * h * h;           // Q, K, V, output projection
    n += 4 * h;               // two layer norms, gain + bias
    n += h * ff + ff + ff * h + h;  // FFN
  }
  return n;
}

inline constexpr double kOmegaInitMin = 2.0 * std::numbers::pi;          // 1 Hz
inline constexpr double kOmegaInitMax = 2.0 * std::numbers::pi * 100.0;  // 100 Hz
inline constexpr double kLayerNormEps = 1e-5;

/// Deterministic initialization: weight matrices and biases uniform on
/// +-sqrt(1/fan_in), omega log-uniform over [2*pi, 200*pi] rad/s, phi uniform
/// on [0, 2*pi), layer-norm gains 1 and biases 0.
inline CtenParams init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  CtenParams p;
  p.spec = spec;
  Rng rng(seed);
  const auto uniform_fan = [&rng](Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(double(fan_in));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
  };
  const std::size_t d = spec.input_channels, h = spec.hidden, r = spec.rank,
                    c = spec.n_classes, m = spec.mlp_hidden,
                    f = spec.feature_dim();

  p.w = uniform_fan({d, h}, d);
  p.omega = Tensor({h});
  for (std::size_t i = 0; i < h; ++i)
    p.omega[i] = rng.log_uniform(kOmegaInitMin, kOmegaInitMax);
  p.phi = Tensor({h});
  for (std::size_t i = 0; i < h; ++i)
    p.phi[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  if (spec.ablation.use_interaction) {
    p.w_int1 = uniform_fan({h, r}, h);
    p.w_int2 = uniform_fan({r, h}, r);
  }
  p.mlp_w1 = uniform_fan({f, m}, f);
  p.mlp_b1 = uniform_fan({m}, f);
  p.mlp_w2 = uniform_fan({m, c}, m);
  p.mlp_b2 = uniform_fan({c}, m);

  if (spec.ablation.attention_heads > 0) {
    const std::size_t ff = spec.ffn_dim();
    AttentionParams a;
    a.w_q = uniform_fan({h, h}, h);
    a.w_k = uniform_fan({h, h}, h);
    a.w_v = uniform_fan({h, h}, h);
    a.w_o = uniform_fan({h, h}, h);
    a.ln1_gain = Tensor::full({h}, 1.0);
    a.ln1_bias = Tensor({h});
    a.ln2_gain = Tensor::full({h}, 1.0);
    a.ln2_bias = Tensor({h});
    a.ffn_w1 = uniform_fan({h, ff}, h);
    a.ffn_b1 = uniform_fan({ff}, h);
    a.ffn_w2 = uniform_fan({ff, h}, ff);
    a.ffn_b2 = uniform_fan({h}, ff);
    p.attention = std::move(a);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

struct BoundAttention {
  Var w_q, w_k, w_v, w_o;
  Var ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

/// Model parameters registered on a tape. `ordered` matches the order of
/// CtenParams::named_tensors().
struct BoundParams {
  Var w, omega, phi, w_int1, w_int2;
  Var mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  std::optional<BoundAttention> attention;
  std::vector<Var> ordered;
};

/// Registers every learnable tensor on the tape; `trainable` selects whether
/// they participate in gradients (training) or not (evaluation).
inline BoundParams bind_params(Tape& tape, const CtenParams& params,
                               bool trainable = true) {
  BoundParams b;
  auto reg = [&](const Tensor& t) {
    return trainable ? tape.param(t) : tape.input(t);
  };
  b.w = reg(params.w);
  b.omega = reg(params.omega);
  b.phi = reg(params.phi);
  b.ordered = {b.w, b.omega, b.phi};
  if (params.spec.ablation.use_interaction) {
    b.w_int1 = reg(params.w_int1);
    b.w_int2 = reg(params.w_int2);
    b.ordered.push_back(b.w_int1);
    b.ordered.push_back(b.w_int2);
  }
  b.mlp_w1 = reg(params.mlp_w1);
  b.mlp_b1 = reg(params.mlp_b1);
  b.mlp_w2 = reg(params.mlp_w2);
  b.mlp_b2 = reg(params.mlp_b2);
  b.ordered.push_back(b.mlp_w1);
  b.ordered.push_back(b.mlp_b1);
  b.ordered.push_back(b.mlp_w2);
  b.ordered.push_back(b.mlp_b2);
  if (params.attention) {
    const AttentionParams& a = *params.attention;
    BoundAttention ba;
    ba.w_q = reg(a.w_q);
    ba.w_k = reg(a.w_k);
    ba.w_v = reg(a.w_v);
    ba.w_o = reg(a.w_o);
    ba.ln1_gain = reg(a.ln1_gain);
    ba.ln1_bias = reg(a.ln1_bias);
    ba.ln2_gain = reg(a.ln2_gain);
    ba.ln2_bias = reg(a.ln2_bias);
    ba.ffn_w1 = reg(a.ffn_w1);
    ba.ffn_b1 = reg(a.ffn_b1);
    ba.ffn_w2 = reg(a.ffn_w2);
    ba.ffn_b2 = reg(a.ffn_b2);
    for (Var v : {ba.w_q, ba.w_k, ba.w_v, ba.w_o, ba.ln1_gain, ba.ln1_bias,
                  ba.ln2_gain, ba.ln2_bias, ba.ffn_w1, ba.ffn_b1, ba.ffn_w2,
                  ba.ffn_b2})
      b.ordered.push_back(v);
    b.attention = ba;
  }
  return b;
}

/// Optional capture of intermediate fields for figure export and tests.
struct ForwardTrace {
  Tensor psi_real;   // [B,T,H] after interaction
  Tensor psi_imag;   // [B,T,H]; empty when phase modulation is off
  Tensor energy;     // [B,T,H] field right before pooling
  std::vector<Tensor> attention_weights;  // per (sample, head): [T,T]
};

/// One multi-head temporal self-attention block acting on a single sample's
/// energy field [T,H]: scaled dot-product attention over the time axis, an
/// output projection, then two residual LayerNorm stages around a GELU FFN.
inline Var attention_block(Tape& tape, Var p, const BoundAttention& ap,
                           std::size_t heads,
                           std::vector<Tensor>* weights_out = nullptr) {
  const Shape& ps = p.shape();
  if (ps.size() != 2) throw ShapeError("attention_block: expected [T,H] input");
  const std::size_t h_dim = ps[1];
  if (heads == 0 || h_dim % heads != 0)
    throw DomainError("attention_block: hidden dim " + std::to_string(h_dim) +
                      " not divisible by " + std::to_string(heads) + " heads");
  const std::size_t d_head = h_dim / heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(double(d_head));

  Var q = matmul(p, ap.w_q);
  Var k = matmul(p, ap.w_k);
  Var v = matmul(p, ap.w_v);
  std::vector<Var> head_outs;
  head_outs.reserve(heads);
  for (std::size_t hh = 0; hh < heads; ++hh) {
    Var qh = slice_last(q, hh * d_head, d_head);
    Var kh = slice_last(k, hh * d_head, d_head);
    Var vh = slice_last(v, hh * d_head, d_head);
    Var weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_d));
    if (weights_out) weights_out->push_back(tape.value(weights));
    head_outs.push_back(matmul(weights, vh));
  }
  Var merged = matmul(concat_last(std::span<const Var>(head_outs)), ap.w_o);
  Var p1 = layer_norm(add(p, merged), ap.ln1_gain, ap.ln1_bias, kLayerNormEps);
  Var f = add(matmul(gelu(add(matmul(p1, ap.ffn_w1), ap.ffn_b1)), ap.ffn_w2),
              ap.ffn_b2);
  return layer_norm(add(p1, f), ap.ln2_gain, ap.ln2_bias, kLayerNormEps);
}

/// Full forward pass: spike tensor [B,T,D] to class logits [B,C].
///
///   h      = tanh(x W)
///   psi_r  = h . cos(omega t + phi)     (phase on;  psi_r = h, psi_i = 0 off)
///   psi_i  = h . sin(omega t + phi)
///   psi   += alpha tanh(psi W_int1 W_int2)          (interaction, both parts)
///   P      = psi_r^2 + psi_i^2
///   P      = attention_block(P)                     (per sample, if enabled)
///   f      = pool(P) over time (mean, max, or their concatenation)
///   logits = W2 relu(W1 f + b1) + b2
///
/// time_grid holds the physical bin times in seconds (t = index * dt); omega
/// is in rad/s.
inline Var forward(Tape& tape, const BoundParams& bp, const ModelSpec& spec,
                   Var x, const Tensor& time_grid,
                   ForwardTrace* trace = nullptr) {
  const Shape& xs = x.shape();
  if (xs.size() != 3 || xs[2] != spec.input_channels)
    throw ShapeError("forward: input must be [B,T," +
                     std::to_string(spec.input_channels) + "], got " +
                     shape_str(xs));
  const std::size_t batch = xs[0], t_steps = xs[1];
  if (time_grid.shape() != Shape{t_steps})
    throw ShapeError("forward: time grid must have shape [T]");

  tape.stage("projection");
  Var h = tanh(matmul(x, bp.w));  // [B,T,H]

  Var psi_r = h;
  std::optional<Var> psi_i;
  if (spec.ablation.use_phase) {
    tape.stage("phase modulation");
    Var t_col = tape.input(time_grid.reshaped({t_steps, 1}));
    Var theta = add(matmul(t_col, reshape(bp.omega, {1, spec.hidden})), bp.phi);
    psi_r = mul(h, cos(theta));
    psi_i = mul(h, sin(theta));
  }
  if (spec.ablation.use_interaction) {
    tape.stage("latent interaction");
    auto mix = [&](Var part) {
      Var low_rank = matmul(matmul(part, bp.w_int1), bp.w_int2);
      return add(part, scale(tanh(low_rank), spec.alpha));
    };
    psi_r = mix(psi_r);
    if (psi_i) psi_i = mix(*psi_i);
  }

  tape.stage("energy projection");
  Var energy = psi_i ? add(square(psi_r), square(*psi_i)) : square(psi_r);

  if (trace) {
    trace->psi_real = tape.value(psi_r);
    trace->psi_imag = psi_i ? tape.value(*psi_i) : Tensor({0});
  }

  if (spec.ablation.attention_heads > 0) {
    tape.stage("temporal attention");
    std::vector<Var> rows;
    rows.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b)
      rows.push_back(attention_block(
          tape, select0(energy, b), *bp.attention, spec.ablation.attention_heads,
          trace ? &trace->attention_weights : nullptr));
    energy = stack0(std::span<const Var>(rows));
  }
  if (trace) trace->energy = tape.value(energy);

  tape.stage("pooling");
  Var features;
  switch (spec.ablation.pooling) {
    case Pooling::kMeanMax:
      features = concat_last(reduce_mean(energy, 1), reduce_max(energy, 1));
      break;
    case Pooling::kMean:
      features = reduce_mean(energy, 1);
      break;
    case Pooling::kMax:
      features = reduce_max(energy, 1);
      break;
  }

  tape.stage("classifier");
  Var hidden_act = relu(add(matmul(features, bp.mlp_w1), bp.mlp_b1));
  Var logits = add(matmul(hidden_act, bp.mlp_w2), bp.mlp_b2);
  tape.stage("");
  return logits;
}

/// Uniform time grid t_i = i * dt, in seconds.
inline Tensor make_time_grid(std::size_t t_steps, double dt) {
  Tensor g({t_steps});
  for (std::size_t i = 0; i < t_steps; ++i) g[i] = double(i) * dt;
  return g;
}

/// The pre-pooling latent fields of a single sample, for figure export and
/// consistency checks.
struct EnergyTraces {
  Tensor energy;    // [T,H]
  Tensor psi_real;  // [T,H]
  Tensor psi_imag;  // [T,H]; empty when phase modulation is off
};

inline EnergyTraces latent_energy_traces(const CtenParams& params,
                                         const Tensor& sample,
                                         const Tensor& time_grid) {
  const Shape& s = sample.shape();
  if (s.size() != 2)
    throw ShapeError("latent_energy_traces: expected one sample [T,D]");
  Tape tape;
  BoundParams bp = bind_params(tape, params, /*trainable=*/false);
  Var x = tape.input(sample.reshaped({1, s[0], s[1]}));
  ForwardTrace trace;
  forward(tape, bp, params.spec, x, time_grid, &trace);
  EnergyTraces out;
  const std::size_t th = s[0] * params.spec.hidden;
  out.energy = Tensor({s[0], params.spec.hidden},
                      std::vector<double>(trace.energy.data(),
                                          trace.energy.data() + th));
  out.psi_real = Tensor({s[0], params.spec.hidden},
                        std::vector<double>(trace.psi_real.data(),
                                            trace.psi_real.data() + th));
  if (trace.psi_imag.size() == th)
    out.psi_imag = Tensor({s[0], params.spec.hidden},
                          std::vector<double>(trace.psi_imag.data(),
                                              trace.psi_imag.data() + th));
  return out;
}

}  // namespace cten
