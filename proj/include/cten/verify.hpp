#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cten/model.hpp"
#include "cten/rng.hpp"
#include "cten/tape.hpp"
#include "cten/temporal.hpp"

// Self-checks runnable from the CLI: finite-difference gradient oracles for
// the composed models, the published parameter budgets, and the interference
// identity.

namespace cten {

namespace detail {

inline double eval_loss(const CtenParams& params, const Tensor& x,
                        const std::vector<int>& labels, const Tensor& grid) {
  Tape tape;
  BoundParams bp = bind_params(tape, params, /*trainable=*/false);
  Var logits = forward(tape, bp, params.spec, tape.input(x), grid);
  return tape.value(softmax_cross_entropy(logits, labels))[0];
}

}  // namespace detail

inline std::uint64_t derive_seed_for_check(std::uint64_t seed) {
  std::uint64_t sm = seed + 0x51ed;
  return detail::splitmix64(sm);
}

/// Largest relative error between analytic parameter gradients and central
/// finite differences of the cross-entropy loss, over every parameter scalar.
inline double model_gradient_max_rel_err(const ModelSpec& spec,
                                         std::size_t batch, std::size_t t_steps,
                                         std::uint64_t seed,
                                         double step = 1e-5) {
  CtenParams params = init_params(spec, seed);
  Rng rng(derive_seed_for_check(seed));
  Tensor x({batch, t_steps, spec.input_channels});
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = rng.next_double() < 0.3 ? 1.0 : 0.0;
  std::vector<int> labels(batch);
  for (std::size_t b = 0; b < batch; ++b)
    labels[b] = static_cast<int>(rng.bounded(spec.n_classes));
  Tensor grid = make_time_grid(t_steps, 1e-3);

  Tape tape;
  BoundParams bp = bind_params(tape, params, /*trainable=*/true);
  Var logits = forward(tape, bp, spec, tape.input(x), grid);
  tape.backward(softmax_cross_entropy(logits, labels));

  auto named = params.named_tensors();
  double worst = 0.0;
  for (std::size_t pi = 0; pi < named.size(); ++pi) {
    Tensor analytic = tape.grad(bp.ordered[pi]);
    CtenParams probe = params;
    Tensor* target = probe.named_tensors()[pi].second;
    for (std::size_t i = 0; i < target->size(); ++i) {
      const double orig = (*target)[i];
      (*target)[i] = orig + step;
      const double fp = detail::eval_loss(probe, x, labels, grid);
      (*target)[i] = orig - step;
      const double fm = detail::eval_loss(probe, x, labels, grid);
      (*target)[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

/// The tiny configuration the gradient oracle runs at.
inline ModelSpec gradcheck_spec(std::size_t heads) {
  ModelSpec s;
  s.input_channels = 4;
  s.hidden = 6;
  s.rank = 3;
  s.n_classes = 3;
  s.mlp_hidden = 5;
  s.ablation.attention_heads = heads;
  return s;
}

struct VerifyResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline std::vector<VerifyResult> run_verification() {
  std::vector<VerifyResult> out;

  {
    VerifyResult r{"parameter counts: five published variant budgets", false, ""};
    ModelSpec s;  // defaults H=160, R=48, D=400, C=12, M=128
    ModelSpec no_inter = s, no_phase = s, mean_only = s, max_only = s;
    no_inter.ablation.use_interaction = false;
    no_phase.ablation.use_phase = false;
    mean_only.ablation.pooling = Pooling::kMean;
    max_only.ablation.pooling = Pooling::kMax;
    const std::size_t got[5] = {parameter_count(s), parameter_count(no_inter),
                                parameter_count(no_phase),
                                parameter_count(mean_only),
                                parameter_count(max_only)};
    const std::size_t want[5] = {122316, 106956, 122316, 101836, 101836};
    r.pass = true;
    for (int i = 0; i < 5; ++i) r.pass = r.pass && got[i] == want[i];
    r.detail = std::to_string(got[0]) + "/" + std::to_string(got[1]) + "/" +
               std::to_string(got[2]) + "/" + std::to_string(got[3]) + "/" +
               std::to_string(got[4]);
    out.push_back(r);
  }
  {
    VerifyResult r{"gradient check: base model vs central finite differences", false, ""};
    const double err = model_gradient_max_rel_err(gradcheck_spec(0), 2, 8, 41);
    r.pass = err < 1e-4;
    r.detail = "max rel err " + std::to_string(err);
    out.push_back(r);
  }
  {
    VerifyResult r{"gradient check: attention model vs central finite differences",
                   false, ""};
    const double err = model_gradient_max_rel_err(gradcheck_spec(2), 2, 8, 43);
    r.pass = err < 1e-4;
    r.detail = "max rel err " + std::to_string(err);
    out.push_back(r);
  }
  {
    VerifyResult r{"interference identity: total = diagonal + pairwise cross",
                   false, ""};
    Rng rng(7);
    double worst = 0.0;
    bool ok = true;
    try {
      for (int rep = 0; rep < 100; ++rep) {
        const std::size_t h = 1 + rng.bounded(8), t_steps = 1 + rng.bounded(16);
        Tensor pr({t_steps, h}), pi({t_steps, h});
        for (std::size_t i = 0; i < pr.size(); ++i) {
          pr[i] = rng.uniform(-1, 1);
          pi[i] = rng.uniform(-1, 1);
        }
        InterferenceDecomposition d = interference_oracle(pr, pi);
        for (std::size_t t = 0; t < t_steps; ++t) {
          double pairwise = 0.0;
          for (std::size_t a = 0; a < h; ++a)
            for (std::size_t b = 0; b < h; ++b)
              if (a != b)
                pairwise += pr.at(t, a) * pr.at(t, b) + pi.at(t, a) * pi.at(t, b);
          worst = std::max(worst,
                           std::abs(d.total[t] - (d.diagonal[t] + pairwise)));
        }
      }
    } catch (const std::exception&) {
      ok = false;
    }
    r.pass = ok && worst < 1e-12;
    r.detail = "max abs err " + std::to_string(worst);
    out.push_back(r);
  }
  return out;
}

}  // namespace cten
