#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "cten/common.hpp"
#include "cten/rng.hpp"
#include "cten/tensor.hpp"

namespace cten {

/// Configuration of the synthetic interaural-phase-difference task. Defaults
/// give 100 time steps over 0.1 s, 200 channels per ear (D = 400) and 12
/// classes.
struct IpdConfig {
  std::size_t time_steps = 100;  // T
  double dt = 1e-3;              // seconds per bin
  std::size_t n_ear = 200;       // channels per ear
  std::size_t n_classes = 12;    // C
  double carrier_freq = 50.0;    // Hz
  double max_spike_prob = 0.5;   // peak per-bin Bernoulli probability
  // Random global carrier phase per sample (the "trial onset" is unknown).
  // With it, every single bin's marginal firing rate is class-independent and
  // only the relative timing between the two ears carries the label; a
  // flattened static classifier then sits near chance.
  bool random_onset_phase = true;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;

  std::size_t channels() const { return 2 * n_ear; }
  double duration() const { return double(time_steps) * dt; }

  void validate() const {
    if (time_steps == 0) throw DomainError("IpdConfig: time_steps must be > 0");
    if (dt <= 0.0) throw DomainError("IpdConfig: dt must be > 0");
    if (n_ear == 0) throw DomainError("IpdConfig: n_ear must be > 0");
    if (n_classes < 2) throw DomainError("IpdConfig: need at least 2 classes");
    if (!(max_spike_prob >= 0.0 && max_spike_prob <= 1.0))
      throw DomainError("IpdConfig: max_spike_prob must lie in [0,1]");
    if (carrier_freq <= 0.0) throw DomainError("IpdConfig: carrier_freq must be > 0");
  }

  bool operator==(const IpdConfig&) const = default;
};

/// A generated (or ingested) batch: binary event tensor [B,T,D], integer
/// class labels, and — for generated data — the underlying phase difference
/// per sample. `ipd` is empty for data ingested from external files.
struct SpikeBatch {
  Tensor events;              // [B, T, D]
  std::vector<int> labels;    // [B], each in [0, C)
  std::vector<double> ipd;    // [B], radians in [-pi, pi)
  std::vector<double> onset;  // [B], global carrier phase per sample
  IpdConfig config;

  std::size_t batch_size() const { return labels.size(); }
  // Authoritative dimensions; config.n_ear is generation metadata and may not
  // describe ingested data (e.g. an odd channel count).
  std::size_t t_steps() const { return events.rank() == 3 ? events.dim(1) : 0; }
  std::size_t channels() const { return events.rank() == 3 ? events.dim(2) : 0; }

  bool operator==(const SpikeBatch& o) const {
    return events == o.events && labels == o.labels && ipd == o.ipd &&
           onset == o.onset && config == o.config;
  }
};

/// Equal-width discretization of [-pi, pi) into n_classes bins.
inline int class_of(double ipd, std::size_t n_classes) {
  constexpr double pi = std::numbers::pi;
  if (!(ipd >= -pi && ipd < pi))
    throw DomainError("class_of: ipd " + std::to_string(ipd) +
                      " outside [-pi, pi)");
  const int c = static_cast<int>(std::floor((ipd + pi) * double(n_classes) /
                                            (2.0 * pi)));
  return std::min(c, static_cast<int>(n_classes) - 1);
}

/// Phase offset of a channel within its ear. Channels tile the full circle,
/// so the population pattern across channels encodes instantaneous carrier
/// phase; an ear-level phase shift then shows up as a signed rotation of the
/// right-ear pattern relative to the left. With a single shared phase per ear
/// the +/- ipd classes are provably indistinguishable for time-symmetric
/// pooling, so the task would not be learnable by every model variant.
inline double channel_phase(const IpdConfig& cfg, std::size_t channel) {
  const std::size_t within = channel % cfg.n_ear;
  return 2.0 * std::numbers::pi * double(within) / double(cfg.n_ear);
}

/// Analytic per-bin firing probability of `channel` at time step `t` for a
/// sample with phase difference `dphi` and global onset phase `onset`.
/// Right-ear channels (d >= n_ear) are shifted by dphi.
inline double channel_rate(const IpdConfig& cfg, std::size_t channel,
                           std::size_t t, double dphi, double onset = 0.0) {
  const double ear_shift = channel >= cfg.n_ear ? dphi : 0.0;
  const double angle = 2.0 * std::numbers::pi * cfg.carrier_freq *
                           (double(t) * cfg.dt) +
                       channel_phase(cfg, channel) + ear_shift + onset;
  return cfg.max_spike_prob * 0.5 * (1.0 + std::sin(angle));
}

/// Draws the full batch. Each sample has its own RNG substream derived from
/// (seed, sample index), so generation is reproducible bit-for-bit and
/// trivially parallel across samples. Per sample the stream is consumed as:
/// one draw for dphi, one for the onset phase (when enabled), then one draw
/// per (t, d) in row-major order.
inline SpikeBatch generate(const IpdConfig& cfg) {
  cfg.validate();
  constexpr double pi = std::numbers::pi;
  const std::size_t T = cfg.time_steps, D = cfg.channels(), B = cfg.n_samples;

  // Carrier tables: sin/cos of (omega t + channel offset) for one ear. A
  // sample's ear shift (onset phase, plus dphi on the right) is folded in
  // through the angle-addition identity, so the inner loop is trig-free.
  std::vector<double> tab_sin(T * cfg.n_ear), tab_cos(T * cfg.n_ear);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < cfg.n_ear; ++i) {
      const double angle =
          2.0 * pi * cfg.carrier_freq * (double(t) * cfg.dt) +
          2.0 * pi * double(i) / double(cfg.n_ear);
      tab_sin[t * cfg.n_ear + i] = std::sin(angle);
      tab_cos[t * cfg.n_ear + i] = std::cos(angle);
    }

  SpikeBatch batch;
  batch.config = cfg;
  batch.events = Tensor({B, T, D});
  batch.labels.resize(B);
  batch.ipd.resize(B);
  batch.onset.resize(B);

  for (std::size_t b = 0; b < B; ++b) {
    Rng rng = Rng::substream(cfg.seed, b);
    const double dphi = rng.uniform(-pi, pi);
    batch.ipd[b] = dphi;
    batch.labels[b] = class_of(dphi, cfg.n_classes);
    const double onset = cfg.random_onset_phase ? rng.uniform(0.0, 2.0 * pi) : 0.0;
    batch.onset[b] = onset;
    const double cos_l = std::cos(onset), sin_l = std::sin(onset);
    const double cos_r = std::cos(onset + dphi), sin_r = std::sin(onset + dphi);
    double* ev = batch.events.data() + b * T * D;
    for (std::size_t t = 0; t < T; ++t) {
      const double* s = tab_sin.data() + t * cfg.n_ear;
      const double* c = tab_cos.data() + t * cfg.n_ear;
      for (std::size_t d = 0; d < D; ++d) {
        const std::size_t i = d % cfg.n_ear;
        const double sine = d < cfg.n_ear ? s[i] * cos_l + c[i] * sin_l
                                          : s[i] * cos_r + c[i] * sin_r;
        const double p = cfg.max_spike_prob * 0.5 * (1.0 + sine);
        ev[t * D + d] = rng.next_double() < p ? 1.0 : 0.0;
      }
    }
  }
  return batch;
}

}  // namespace cten
