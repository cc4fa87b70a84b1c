#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cten/common.hpp"
#include "cten/ipd.hpp"

// On-disk formats for spike batches.
//
// Binary container (little-endian, bit-exact round trip):
//   magic "CTENSPK1" | u32 version | config block | u64 B | u32 T | u32 D |
//   u8 has_ipd | u8 has_onset | i32 labels[B] | f64 ipd[B] (if has_ipd) |
//   f64 onset[B] (if has_onset) | packed event bits
// Events are packed LSB-first in row-major [B,T,D] order.
//
// CSV (interoperability; events and labels only):
//   header line  "T=<T>,D=<D>,C=<C>"
//   then B*T rows of D comma-separated values followed by the sample label;
//   the T rows of one sample are consecutive and repeat its label.

namespace cten {

inline constexpr char kSpikeMagic[8] = {'C', 'T', 'E', 'N', 'S', 'P', 'K', '1'};
inline constexpr std::uint32_t kSpikeVersion = 1;

inline void save_batch(const SpikeBatch& batch, std::ostream& out) {
  auto put = [&out](const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  };
  auto put_u32 = [&](std::uint32_t v) { put(&v, 4); };
  auto put_u64 = [&](std::uint64_t v) { put(&v, 8); };
  auto put_f64 = [&](double v) { put(&v, 8); };

  put(kSpikeMagic, 8);
  put_u32(kSpikeVersion);
  const IpdConfig& c = batch.config;
  put_u32(static_cast<std::uint32_t>(c.time_steps));
  put_f64(c.dt);
  put_u32(static_cast<std::uint32_t>(c.n_ear));
  put_u32(static_cast<std::uint32_t>(c.n_classes));
  put_f64(c.carrier_freq);
  put_f64(c.max_spike_prob);
  put_u64(c.n_samples);
  put_u64(c.seed);

  const std::uint64_t b = batch.batch_size();
  put_u64(b);
  put_u32(static_cast<std::uint32_t>(batch.t_steps()));
  put_u32(static_cast<std::uint32_t>(batch.channels()));
  const std::uint8_t has_ipd = batch.ipd.empty() ? 0 : 1;
  put(&has_ipd, 1);
  const std::uint8_t has_onset = batch.onset.empty() ? 0 : 1;
  put(&has_onset, 1);
  for (int label : batch.labels) {
    const std::int32_t v = label;
    put(&v, 4);
  }
  if (has_ipd)
    for (double v : batch.ipd) put_f64(v);
  if (has_onset)
    for (double v : batch.onset) put_f64(v);

  const std::size_t nbits = batch.events.size();
  std::vector<std::uint8_t> packed((nbits + 7) / 8, 0);
  for (std::size_t i = 0; i < nbits; ++i)
    if (batch.events[i] != 0.0) packed[i / 8] |= std::uint8_t(1u << (i % 8));
  put(packed.data(), packed.size());
}

inline void save_batch(const SpikeBatch& batch, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot open '" + path + "' for writing");
  save_batch(batch, out);
  if (!out) throw DomainError("write to '" + path + "' failed");
}

inline SpikeBatch load_batch(std::istream& in) {
  detail::ByteReader r(in);
  char magic[8];
  r.read(magic, 8);
  if (std::memcmp(magic, kSpikeMagic, 8) != 0)
    throw ParseError("bad magic bytes; not a spike batch file", 0);
  const auto version = r.get<std::uint32_t>();
  if (version != kSpikeVersion)
    throw ParseError("unsupported version " + std::to_string(version), 8);

  SpikeBatch batch;
  IpdConfig& c = batch.config;
  c.time_steps = r.get<std::uint32_t>();
  c.dt = r.get<double>();
  c.n_ear = r.get<std::uint32_t>();
  c.n_classes = r.get<std::uint32_t>();
  c.carrier_freq = r.get<double>();
  c.max_spike_prob = r.get<double>();
  c.n_samples = r.get<std::uint64_t>();
  c.seed = r.get<std::uint64_t>();

  const auto b = r.get<std::uint64_t>();
  const auto t_steps = r.get<std::uint32_t>();
  const auto d_chans = r.get<std::uint32_t>();
  const auto has_ipd = r.get<std::uint8_t>();
  const auto has_onset = r.get<std::uint8_t>();
  batch.labels.resize(b);
  for (std::uint64_t i = 0; i < b; ++i) {
    const std::size_t at = r.offset();
    const auto label = r.get<std::int32_t>();
    if (label < 0 || static_cast<std::size_t>(label) >= c.n_classes)
      throw ParseError("label " + std::to_string(label) + " out of range [0," +
                           std::to_string(c.n_classes) + ")",
                       at);
    batch.labels[i] = label;
  }
  if (has_ipd) {
    batch.ipd.resize(b);
    for (std::uint64_t i = 0; i < b; ++i) batch.ipd[i] = r.get<double>();
  }
  if (has_onset) {
    batch.onset.resize(b);
    for (std::uint64_t i = 0; i < b; ++i) batch.onset[i] = r.get<double>();
  }

  const std::size_t nbits = std::size_t(b) * t_steps * d_chans;
  std::vector<std::uint8_t> packed((nbits + 7) / 8);
  r.read(packed.data(), packed.size());
  batch.events = Tensor({b, t_steps, d_chans});
  for (std::size_t i = 0; i < nbits; ++i)
    batch.events[i] = (packed[i / 8] >> (i % 8)) & 1u ? 1.0 : 0.0;
  return batch;
}

inline SpikeBatch load_batch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open '" + path + "' for reading");
  return load_batch(in);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline void export_csv(const SpikeBatch& batch, std::ostream& out) {
  const std::size_t T = batch.t_steps(), D = batch.channels();
  out << "T=" << T << ",D=" << D << ",C=" << batch.config.n_classes << "\n";
  char buf[32];
  for (std::size_t b = 0; b < batch.batch_size(); ++b)
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t d = 0; d < D; ++d) {
        const double v = batch.events[(b * T + t) * D + d];
        if (v == 0.0 || v == 1.0) {
          out << (v == 0.0 ? '0' : '1');
        } else {
          std::snprintf(buf, sizeof buf, "%.17g", v);
          out << buf;
        }
        out << ',';
      }
      out << batch.labels[b] << "\n";
    }
}

inline void export_csv(const SpikeBatch& batch, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot open '" + path + "' for writing");
  export_csv(batch, out);
}

/// Reads the CSV layout documented above. Values may be arbitrary finite
/// reals (external windowed data); labels must be integers in [0, C).
/// The resulting batch carries no per-sample ipd values.
inline SpikeBatch ingest_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError("empty file", lineno);

  std::size_t T = 0, D = 0, C = 0;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      const auto eq = field.find('=');
      if (eq == std::string::npos)
        throw ParseError("header field '" + field + "' is not key=value", lineno);
      const std::string key = field.substr(0, eq);
      unsigned long long value = 0;
      try {
        std::size_t pos = 0;
        value = std::stoull(field.substr(eq + 1), &pos);
        if (pos != field.size() - eq - 1) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ParseError("header field '" + field + "' has no numeric value",
                         lineno);
      }
      if (key == "T")
        T = value;
      else if (key == "D")
        D = value;
      else if (key == "C")
        C = value;
      else
        throw ParseError("unknown header key '" + key + "'", lineno);
    }
  }
  if (T == 0 || D == 0 || C < 2)
    throw ParseError("header must declare positive T, D and C >= 2", 1);

  std::vector<double> values;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::size_t got = 0;
    double row_label = 0;
    while (std::getline(ss, field, ',')) {
      double v;
      try {
        std::size_t pos = 0;
        v = std::stod(field, &pos);
        if (pos != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ParseError("row " + std::to_string(lineno) + ": bad number '" +
                             field + "'",
                         lineno);
      }
      if (!std::isfinite(v))
        throw ParseError("row " + std::to_string(lineno) + ": non-finite value",
                         lineno);
      if (got < D)
        values.push_back(v);
      else
        row_label = v;
      ++got;
    }
    if (got != D + 1)
      throw ParseError("row " + std::to_string(lineno) + ": expected " +
                           std::to_string(D + 1) + " columns, got " +
                           std::to_string(got),
                       lineno);
    if (row_label != std::floor(row_label) || row_label < 0 || row_label >= double(C))
      throw ParseError("row " + std::to_string(lineno) + ": label " +
                           std::to_string(row_label) + " out of range [0," +
                           std::to_string(C) + ")",
                       lineno);
    labels.push_back(static_cast<int>(row_label));
  }

  if (labels.size() % T != 0)
    throw ParseError("row count " + std::to_string(labels.size()) +
                         " is not a multiple of T=" + std::to_string(T),
                     lineno);
  const std::size_t B = labels.size() / T;
  SpikeBatch batch;
  batch.events = Tensor({B, T, D}, std::move(values));
  batch.labels.resize(B);
  for (std::size_t b = 0; b < B; ++b) {
    const int label = labels[b * T];
    for (std::size_t t = 1; t < T; ++t)
      if (labels[b * T + t] != label)
        throw ParseError("sample " + std::to_string(b) +
                             ": label changes between its rows",
                         b * T + t + 2);
    batch.labels[b] = label;
  }
  batch.config.time_steps = T;
  batch.config.n_ear = D / 2;
  batch.config.n_classes = C;
  batch.config.n_samples = B;
  return batch;
}

inline SpikeBatch ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open '" + path + "' for reading");
  return ingest_csv(in);
}

/// Per-channel z-score normalization. Statistics come from the first
/// `n_train` samples only and are applied to the whole batch; channels with
/// zero variance are left centered but unscaled.
inline void apply_zscore(SpikeBatch& batch, std::size_t n_train) {
  const std::size_t B = batch.batch_size(), T = batch.t_steps(),
                    D = batch.channels();
  if (n_train == 0 || n_train > B)
    throw DomainError("apply_zscore: n_train must be in [1, B]");
  std::vector<double> mean(D, 0.0), var(D, 0.0);
  const double n = double(n_train * T);
  for (std::size_t b = 0; b < n_train; ++b)
    for (std::size_t t = 0; t < T; ++t) {
      const double* row = batch.events.data() + (b * T + t) * D;
      for (std::size_t d = 0; d < D; ++d) mean[d] += row[d];
    }
  for (std::size_t d = 0; d < D; ++d) mean[d] /= n;
  for (std::size_t b = 0; b < n_train; ++b)
    for (std::size_t t = 0; t < T; ++t) {
      const double* row = batch.events.data() + (b * T + t) * D;
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = row[d] - mean[d];
        var[d] += diff * diff;
      }
    }
  std::vector<double> inv_std(D);
  for (std::size_t d = 0; d < D; ++d) {
    var[d] /= n;
    inv_std[d] = var[d] > 0.0 ? 1.0 / std::sqrt(var[d]) : 1.0;
  }
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t) {
      double* row = batch.events.data() + (b * T + t) * D;
      for (std::size_t d = 0; d < D; ++d)
        row[d] = (row[d] - mean[d]) * inv_std[d];
    }
}

}  // namespace cten
