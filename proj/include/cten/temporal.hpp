#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "cten/common.hpp"
#include "cten/tensor.hpp"

// Continuous-embedding analysis tools: Gaussian kernel smoothing of spike
// times, energy moments of the smoothed signal, the interference-identity
// oracle for complex latent fields, and the reduced two-channel
// demonstration pipeline.

namespace cten {

/// Kernel-smoothed spike train sampled on a uniform grid.
struct SmoothedSignal {
  std::vector<double> values;  // psi(t) on the grid
  double grid_start = 0.0;     // seconds of values[0]
  double dt = 1.0;             // grid spacing (rectangle-rule weight)
  double kernel_sigma = 0.0;   // seconds
};

/// psi(t) = sum_i exp(-(t - t_i)^2 / (2 sigma^2)), evaluated on `grid`.
/// Accumulation is a left fold over the spike list, so smoothing a
/// concatenated spike set equals the sum of the separately smoothed parts
/// exactly.
inline SmoothedSignal smooth(const std::vector<double>& spike_times,
                             const std::vector<double>& grid,
                             double kernel_sigma) {
  if (grid.empty()) throw DomainError("smooth: empty grid");
  if (!(kernel_sigma > 0.0)) throw DomainError("smooth: kernel sigma must be > 0");
  SmoothedSignal sig;
  sig.values.assign(grid.size(), 0.0);
  sig.grid_start = grid.front();
  sig.dt = grid.size() >= 2 ? grid[1] - grid[0] : 1.0;
  sig.kernel_sigma = kernel_sigma;
  const double inv = 1.0 / (2.0 * kernel_sigma * kernel_sigma);
  for (double t_spike : spike_times)
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double d = grid[i] - t_spike;
      sig.values[i] += std::exp(-d * d * inv);
    }
  return sig;
}

/// Energy and the first two moments of the normalized energy density
/// psi(t)^2, by rectangle-rule quadrature with weight dt. A zero-energy
/// signal has no defined moments; they are reported absent rather than NaN.
struct EnergyMoments {
  double energy = 0.0;               // integral of psi^2
  std::optional<double> mean;        // seconds
  std::optional<double> variance;    // seconds^2
};

inline EnergyMoments moments(const SmoothedSignal& sig) {
  EnergyMoments out;
  double e = 0.0, te = 0.0;
  for (std::size_t i = 0; i < sig.values.size(); ++i) {
    const double rho = sig.values[i] * sig.values[i] * sig.dt;
    e += rho;
    te += (sig.grid_start + double(i) * sig.dt) * rho;
  }
  out.energy = e;
  if (e <= 0.0) return out;
  const double mu = te / e;
  double var = 0.0;
  for (std::size_t i = 0; i < sig.values.size(); ++i) {
    const double t = sig.grid_start + double(i) * sig.dt;
    var += (t - mu) * (t - mu) * sig.values[i] * sig.values[i] * sig.dt;
  }
  out.mean = mu;
  out.variance = var / e;
  return out;
}

// ---------------------------------------------------------------------------
// Interference identity. For the summed complex field psi(t) = sum_h psi_h(t),
//   |psi(t)|^2 = sum_h |psi_h(t)|^2 + sum_{h != k} Re(psi_h psi_k^*).
// The model never computes the cross terms; this oracle exists to check the
// identity numerically.
// ---------------------------------------------------------------------------

struct InterferenceDecomposition {
  std::vector<double> total;     // |sum_h psi_h|^2 per time step
  std::vector<double> diagonal;  // sum_h |psi_h|^2
  std::vector<double> cross;     // total - diagonal
};

inline InterferenceDecomposition interference_oracle(const Tensor& psi_real,
                                                     const Tensor& psi_imag) {
  if (psi_real.rank() != 2 || !psi_real.same_shape(psi_imag))
    throw ShapeError("interference_oracle: need matching [T,H] fields");
  const std::size_t t_steps = psi_real.dim(0), h_dim = psi_real.dim(1);
  InterferenceDecomposition out;
  out.total.resize(t_steps);
  out.diagonal.resize(t_steps);
  out.cross.resize(t_steps);
  for (std::size_t t = 0; t < t_steps; ++t) {
    const double* r = psi_real.data() + t * h_dim;
    const double* im = psi_imag.data() + t * h_dim;
    double sum_r = 0.0, sum_i = 0.0, diag = 0.0;
    for (std::size_t h = 0; h < h_dim; ++h) {
      sum_r += r[h];
      sum_i += im[h];
      diag += r[h] * r[h] + im[h] * im[h];
    }
    const double total = sum_r * sum_r + sum_i * sum_i;
    out.total[t] = total;
    out.diagonal[t] = diag;
    out.cross[t] = total - diag;

    // cross must equal the explicit pairwise sum sum_{h != k} Re(psi_h psi_k^*)
    double pairwise = 0.0;
    for (std::size_t h = 0; h < h_dim; ++h)
      for (std::size_t k = 0; k < h_dim; ++k)
        if (h != k) pairwise += r[h] * r[k] + im[h] * im[k];
    const double scale = std::max(1.0, std::abs(total) + std::abs(diag));
    if (std::abs(out.cross[t] - pairwise) > 1e-12 * scale)
      throw NumericError("interference_oracle: identity violated at t=" +
                         std::to_string(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reduced two-channel demonstration: two shifted pulse trains, a 2x4 linear
// projection, exponential temporal accumulation, a real-valued cosine wave
// embedding and its energy. The projection matrix and wave parameters are
// illustrative fixed values; every stage is exported for plotting.
// ---------------------------------------------------------------------------

struct TwoChannelDemoConfig {
  std::size_t time_steps = 100;
  double dt = 1e-3;          // seconds
  double lambda = 50.0;      // accumulation decay rate, 1/s
  std::size_t pulse_start = 10;   // first pulse bin of channel 1
  std::size_t pulse_delay = 25;   // channel 2 lag in bins
  std::size_t pulse_every = 40;   // pulse spacing in bins
  // Illustrative projection: latents 1-2 listen to one channel each, latents
  // 3-4 mix the channels with opposite signs.
  Tensor w = Tensor({2, 4}, {1.0, 0.0, 0.7, 0.5,
                             0.0, 1.0, 0.7, -0.5});
  Tensor omega = Tensor({4}, {40.0, 60.0, 90.0, 120.0});  // rad/s
  Tensor phi = Tensor({4}, {0.0, 0.5, 1.0, 1.5});

  void validate() const {
    if (time_steps == 0) throw DomainError("demo: time_steps must be > 0");
    if (dt <= 0.0) throw DomainError("demo: dt must be > 0");
    if (lambda <= 0.0) throw DomainError("demo: lambda must be > 0");
    if (w.shape() != Shape{2, 4} || omega.shape() != Shape{4} ||
        phi.shape() != Shape{4})
      throw DomainError("demo: fixed to 2 input channels and 4 latent units");
  }
};

struct TwoChannelDemo {
  Tensor input;        // [T,2] pulse trains
  Tensor projected;    // [T,4] h = W^T x
  Tensor accumulated;  // [T,4] exponential accumulation of h
  Tensor wave;         // [T,4] accumulated . cos(omega t + phi)
  Tensor energy;       // [T,4] wave^2
};

inline TwoChannelDemo reduced_two_channel_demo(const TwoChannelDemoConfig& cfg) {
  cfg.validate();
  const std::size_t T = cfg.time_steps;
  TwoChannelDemo demo;
  demo.input = Tensor({T, 2});
  for (std::size_t t = cfg.pulse_start; t < T; t += cfg.pulse_every)
    demo.input.at(t, std::size_t(0)) = 1.0;
  for (std::size_t t = cfg.pulse_start + cfg.pulse_delay; t < T;
       t += cfg.pulse_every)
    demo.input.at(t, std::size_t(1)) = 1.0;

  demo.projected = Tensor({T, 4});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < 4; ++j)
      demo.projected.at(t, j) = demo.input.at(t, std::size_t(0)) * cfg.w.at(std::size_t(0), j) +
                                demo.input.at(t, std::size_t(1)) * cfg.w.at(std::size_t(1), j);

  // h_acc(t) = sum_{tau <= t} exp(-lambda (t - tau)) h(tau); the recursive
  // form h_acc(t) = decay * h_acc(t - dt) + h(t) evaluates the same geometric
  // sum.
  demo.accumulated = Tensor({T, 4});
  const double decay = std::exp(-cfg.lambda * cfg.dt);
  for (std::size_t j = 0; j < 4; ++j) {
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      acc = acc * decay + demo.projected.at(t, j);
      demo.accumulated.at(t, j) = acc;
    }
  }

  demo.wave = Tensor({T, 4});
  demo.energy = Tensor({T, 4});
  for (std::size_t t = 0; t < T; ++t) {
    const double time_s = double(t) * cfg.dt;
    for (std::size_t j = 0; j < 4; ++j) {
      const double theta = cfg.omega[j] * time_s + cfg.phi[j];
      const double psi = demo.accumulated.at(t, j) * std::cos(theta);
      demo.wave.at(t, j) = psi;
      demo.energy.at(t, j) = psi * psi;
    }
  }
  return demo;
}

/// Writes a [T,K] trace as CSV: header "time,<prefix>0,...", one row per
/// time step.
inline void write_trace_csv(const std::string& path, const Tensor& trace,
                            double dt, const std::string& prefix) {
  if (trace.rank() != 2) throw ShapeError("write_trace_csv: expected [T,K]");
  std::ofstream out(path);
  if (!out) throw DomainError("cannot open '" + path + "' for writing");
  out << "time";
  for (std::size_t k = 0; k < trace.dim(1); ++k) out << "," << prefix << k;
  out << "\n";
  char buf[40];
  for (std::size_t t = 0; t < trace.dim(0); ++t) {
    std::snprintf(buf, sizeof buf, "%.9g", double(t) * dt);
    out << buf;
    for (std::size_t k = 0; k < trace.dim(1); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", trace.at(t, k));
      out << "," << buf;
    }
    out << "\n";
  }
  if (!out) throw DomainError("write to '" + path + "' failed");
}

}  // namespace cten
