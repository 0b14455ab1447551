/*
 * Copyright 2026 The FedOA Simulator Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fedoa/self_check.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <sstream>

#include "fedoa/errors.h"
#include "fedoa/runner.h"

namespace fedoa {
namespace {

void fill_normal(Matrix& m, double s, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : m.data()) v = s * normal(rng);
}

Vector random_vector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Worst relative error between two gradient vectors, measured in max-norm.
double relative_error(const Vector& analytic, const Vector& numeric) {
  double diff = 0.0, scale = 1e-8;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

Vector numeric_distance_grad(const Vector& zp, const Vector& zg,
                             DistanceKind kind, double step) {
  Vector g(zp.size());
  Vector probe = zp;
  for (std::size_t i = 0; i < zp.size(); ++i) {
    probe[i] = zp[i] + step;
    const double plus = distance(probe, zg, kind);
    probe[i] = zp[i] - step;
    const double minus = distance(probe, zg, kind);
    probe[i] = zp[i];
    g[i] = (plus - minus) / (2.0 * step);
  }
  return g;
}

double max_abs_diff(const LoraAdapter& x, const LoraAdapter& y) {
  double worst = 0.0;
  for (std::size_t l = 0; l < x.layers.size(); ++l) {
    for (int f = 0; f < 2; ++f) {
      const auto p = f == 0 ? x.layers[l].a.data() : x.layers[l].b.data();
      const auto q = f == 0 ? y.layers[l].a.data() : y.layers[l].b.data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        worst = std::max(worst, std::abs(p[j] - q[j]));
      }
    }
  }
  return worst;
}

CheckResult check(std::string name, bool ok, std::string detail) {
  return {std::move(name), ok, std::move(detail)};
}

CheckResult gradient_correctness() {
  Rng rng = make_stream(11, Stream::kProbe);
  double worst = 0.0;
  std::size_t n = 0;
  for (DistanceKind kind :
       {DistanceKind::kL2Sq, DistanceKind::kCosine, DistanceKind::kPearson}) {
    for (std::size_t draw = 0; draw < 24; ++draw) {
      const std::size_t layers = 1 + draw % 2;
      const Activation act =
          (draw / 2) % 2 == 0 ? Activation::kTanh : Activation::kIdentity;
      const double lambda = std::array{0.0, 0.5, 2.0}[(draw / 4) % 3];
      const GradInstance inst =
          random_grad_instance(rng, layers, act, {kind, lambda});
      const double err =
          fd_check(inst.model.encoder, inst.adapter, inst.model.head,
                   inst.batch(), inst.reg, inst.z_ref, 1e-5);
      worst = std::max(worst, err);
      ++n;
    }
  }
  return check("gradient correctness (fd_check < 1e-4)", worst < 1e-4,
               std::to_string(n) + " instances, worst " + fmt(worst));
}

std::vector<CheckResult> distance_checks(const CheckHooks& hooks) {
  Rng rng = make_stream(12, Stream::kProbe);
  std::uniform_real_distribution<double> pos(0.1, 5.0);
  std::uniform_real_distribution<double> shift(-3.0, 3.0);
  double self = 0.0, asym = 0.0, cos_scale = 0.0, pearson_affine = 0.0;
  double grad_err = 0.0;
  bool nonneg = true;
  for (std::size_t draw = 0; draw < 20; ++draw) {
    const Vector a = random_vector(6, rng);
    const Vector b = random_vector(6, rng);
    for (DistanceKind kind :
         {DistanceKind::kL2Sq, DistanceKind::kCosine, DistanceKind::kPearson}) {
      self = std::max(self, std::abs(distance(a, a, kind)));
      nonneg = nonneg && distance(a, b, kind) >= 0.0;
      grad_err = std::max(
          grad_err, relative_error(hooks.distance_grad(a, b, kind),
                                   numeric_distance_grad(a, b, kind, 1e-6)));
    }
    asym = std::max(asym, std::abs(distance(a, b, DistanceKind::kL2Sq) -
                                   distance(b, a, DistanceKind::kL2Sq)));
    Vector scaled = a, affine = a;
    const double c = pos(rng), m = shift(rng);
    for (std::size_t i = 0; i < a.size(); ++i) {
      scaled[i] *= c;
      affine[i] = c * a[i] + m;
    }
    cos_scale = std::max(cos_scale,
                         std::abs(distance(scaled, a, DistanceKind::kCosine)));
    pearson_affine = std::max(
        pearson_affine, std::abs(distance(affine, a, DistanceKind::kPearson)));
  }
  return {
      check("distance: self-distance zero", self < 1e-12, "max " + fmt(self)),
      check("distance: non-negative", nonneg, ""),
      check("distance: l2sq symmetry", asym == 0.0, "max " + fmt(asym)),
      check("distance: cosine positive-scale invariance", cos_scale < 1e-12,
            "max " + fmt(cos_scale)),
      check("distance: pearson affine invariance", pearson_affine < 1e-12,
            "max " + fmt(pearson_affine)),
      check("distance: gradient oracle (< 1e-5)", grad_err < 1e-5,
            "worst " + fmt(grad_err)),
  };
}

CheckResult zero_adapter_neutrality() {
  Rng rng = make_stream(13, Stream::kProbe);
  const FrozenEncoder enc =
      random_encoder(6, {5, 4}, Activation::kTanh, rng);
  LoraAdapter ad = init_adapter(enc, 2, 1.0, rng);  // B = 0
  bool same = true;
  for (int i = 0; i < 10; ++i) {
    const Vector x = random_vector(6, rng);
    Vector u = x;
    for (const auto& layer : enc.layers()) {
      Vector v = matvec(layer.weight, u);
      for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::tanh(v[k] + layer.bias[k]);
      u = std::move(v);
    }
    same = same && encode(enc, ad, x) == u;
  }
  return check("zero-adapter neutrality", same, "");
}

CheckResult frozenness() {
  Rng rng = make_stream(14, Stream::kProbe);
  GradInstance inst = random_grad_instance(
      rng, 2, Activation::kTanh, {DistanceKind::kL2Sq, 0.5});
  const Model before = inst.model;
  LoraAdapter ad = inst.adapter;
  for (int i = 0; i < 5; ++i) {
    const LossAndGrad lg = backward(inst.model.encoder, ad, inst.model.head,
                                    inst.batch(), inst.reg, inst.z_ref);
    ad = axpy_params(std::move(ad), lg.grads, -0.1);
  }
  const bool ok = before.encoder == inst.model.encoder &&
                  before.head == inst.model.head;
  return check("frozen backbone and head unchanged", ok, "");
}

std::vector<CheckResult> protocol_checks() {
  std::vector<CheckResult> out;
  const ExperimentFile base = small_experiment();
  const World world = build_world(base.model, base.layout, base.fed.seed);

  auto personalized_of = [&](FedConfig cfg) {
    FinalAdapters fin;
    run_experiment(cfg, world, 1, &fin);
    return fin.personalized;
  };
  FedConfig cfg = base.fed;
  cfg.rounds = 3;
  cfg.reg.lambda = 0.0;
  cfg.baseline = Baseline::kLocalOnly;
  const auto local = personalized_of(cfg);
  cfg.baseline = Baseline::kFedOA;
  const auto fedoa0 = personalized_of(cfg);
  cfg.baseline = Baseline::kProx;
  const auto prox0 = personalized_of(cfg);
  out.push_back(check("reduction: fedoa lambda=0 == local_only (bitwise)",
                      fedoa0 == local, ""));
  out.push_back(check("reduction: prox lambda=0 == local_only (bitwise)",
                      prox0 == local, ""));

  // One FedIT round with full participation, equal data and a single
  // full-batch global step is one gradient step on the pooled risk.
  FedConfig agg = base.fed;
  agg.rounds = 1;
  agg.baseline = Baseline::kFedIT;
  agg.sample_frac = 1.0;
  agg.global_steps = 1;
  agg.global_full_batch = true;
  FinalAdapters fin;
  run_experiment(agg, world, 1, &fin);
  Batch pooled;
  for (const auto& d : world.train) {
    for (const auto& s : d.as_batch()) pooled.push_back(s);
  }
  const LossAndGrad central = backward(world.model.encoder,
                                       world.initial_adapter, world.model.head,
                                       pooled, RegSpec{});
  const LoraAdapter expected =
      axpy_params(world.initial_adapter, central.grads, -agg.eta_g);
  const double worst = max_abs_diff(expected, fin.global);
  out.push_back(check("aggregation oracle (centralized step, 1e-12)",
                      worst <= 1e-12, "max abs diff " + fmt(worst)));

  // Determinism and communication accounting.
  FedConfig det = base.fed;
  det.rounds = 3;
  det.sample_frac = 0.5;
  RunReport r1 = run_experiment(det, world);
  RunReport r2 = run_experiment(det, world);
  out.push_back(check("determinism: identical report for identical seed",
                      render_report(r1) == render_report(r2), ""));
  const std::size_t params = world.initial_adapter.parameter_count();
  bool bytes_ok = true;
  for (const auto& r : r1.rounds) {
    bytes_ok = bytes_ok && r.bytes == round_bytes(r.clients.size(), params) &&
               r.bytes == r.clients.size() * 2 * params * 8;
  }
  out.push_back(check("communication bytes = sampled x 2 x params x 8",
                      bytes_ok, ""));
  return out;
}

CheckResult stepsize_helper() {
  const StepSizeBounds unit = theorem4_stepsizes(1, 1, 1, 1, 1);
  const StepSizeBounds ref = theorem4_stepsizes(1, 1, 0.5, 2, 20);
  const bool ok = std::abs(unit.eta_l_max - 1.0 / 48.0) < 1e-15 &&
                  std::abs(unit.eta_g_max - 1.0 / (2.0 * std::sqrt(24.0))) < 1e-15 &&
                  std::abs(ref.eta_l_max - 1.3068e-3) < 1e-6 &&
                  std::abs(ref.eta_g_max - 5.844e-3) < 1e-6;
  return check("step-size bounds", ok,
               "eta_l_max " + fmt(ref.eta_l_max) + ", eta_g_max " +
                   fmt(ref.eta_g_max));
}

}  // namespace

Batch GradInstance::batch() const {
  Batch b;
  for (std::size_t i = 0; i < inputs.size(); ++i) b.push_back({inputs[i], labels[i]});
  return b;
}

GradInstance random_grad_instance(Rng& rng, std::size_t layers, Activation act,
                                  const RegSpec& reg) {
  const std::size_t d = 6, h = 4, r = 2, batch = 8;
  std::vector<std::size_t> widths(layers, h);
  FrozenEncoder enc = random_encoder(d, widths, act, rng);
  FixedHead head = random_head(h, rng);
  LoraAdapter ad = zero_adapter(enc, r);
  LoraAdapter other = zero_adapter(enc, r);
  for (auto* a : {&ad, &other}) {
    for (auto& p : a->layers) {
      fill_normal(p.a, 0.5, rng);
      fill_normal(p.b, 0.5, rng);
    }
  }
  GradInstance inst{Model{std::move(enc), std::move(head)}, std::move(ad), {}, {}, {}, reg};
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < batch; ++i) {
    inst.inputs.push_back(random_vector(d, rng));
    inst.labels.push_back(coin(rng) ? 1 : -1);
  }
  if (reg.active()) {
    for (const auto& x : inst.inputs) {
      inst.z_ref.push_back(encode(inst.model.encoder, other, x));
    }
  }
  return inst;
}

ExperimentFile small_experiment() {
  ExperimentFile f;
  f.model.hidden_dim = 6;
  f.model.layers = 2;
  f.model.rank = 2;
  f.layout.sizes.n_train = 64;
  f.layout.sizes.n_test = 32;
  f.fed.batch_size = 16;
  f.fed.seed = 5;
  return f;
}

std::vector<CheckResult> run_self_checks(const CheckHooks& hooks) {
  std::vector<CheckResult> results;
  auto guarded = [&](const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      results.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };
  guarded("gradient correctness", [&] { results.push_back(gradient_correctness()); });
  guarded("distance properties", [&] {
    for (auto& r : distance_checks(hooks)) results.push_back(std::move(r));
  });
  guarded("zero-adapter neutrality", [&] { results.push_back(zero_adapter_neutrality()); });
  guarded("frozenness", [&] { results.push_back(frozenness()); });
  guarded("protocol", [&] {
    for (auto& r : protocol_checks()) results.push_back(std::move(r));
  });
  guarded("step-size bounds", [&] { results.push_back(stepsize_helper()); });
  return results;
}

bool print_check_table(const std::vector<CheckResult>& results,
                       std::ostream& out) {
  bool all = true;
  for (const auto& r : results) {
    out << (r.passed ? "PASS  " : "FAIL  ") << r.name;
    if (!r.detail.empty()) out << "  [" << r.detail << "]";
    out << '\n';
    all = all && r.passed;
  }
  return all;
}

}  // namespace fedoa
