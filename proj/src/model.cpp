#include "varnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace varnn {

bool has_activation_memory(Variant v) {
  return v == Variant::RM_AM || v == Variant::ARM_AM;
}

bool has_accumulative_memory(Variant v) {
  return v == Variant::ARM || v == Variant::ARM_AM;
}

Variant variant_from_string(std::string_view s) {
  if (s == "rm") return Variant::RM;
  if (s == "rm_am") return Variant::RM_AM;
  if (s == "arm") return Variant::ARM;
  if (s == "arm_am") return Variant::ARM_AM;
  throw std::invalid_argument("unknown variant: " + std::string(s));
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::RM: return "rm";
    case Variant::RM_AM: return "rm_am";
    case Variant::ARM: return "arm";
    case Variant::ARM_AM: return "arm_am";
  }
  return "?";
}

std::size_t VarnnSpec::fusion_width() const {
  return d + m + (has_activation_memory(variant) ? k : 0);
}

void VarnnSpec::validate() const {
  if (d < 1 || m < 1 || k < 1) {
    throw ShapeError("VarnnSpec: d, m, k must all be >= 1 (got d=" + std::to_string(d) +
                     " m=" + std::to_string(m) + " k=" + std::to_string(k) + ")");
  }
  if (scalar_residual && m != 1) {
    throw ShapeError("VarnnSpec: scalar_residual requires m=1, got m=" + std::to_string(m));
  }
}

std::size_t resolve_memory_width(const std::string& token, std::size_t d) {
  if (token == "d") return d;
  if (token == "2d_cap128") return std::min<std::size_t>(128, 2 * d);
  std::size_t pos = 0;
  unsigned long long value = 0;
  try {
    value = std::stoull(token, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("memory width token not understood: " + token);
  }
  if (pos != token.size() || value == 0) {
    throw std::invalid_argument("memory width token not understood: " + token);
  }
  return static_cast<std::size_t>(value);
}

VarnnParams zero_params(const VarnnSpec& spec) {
  spec.validate();
  VarnnParams p;
  p.Wz = Mat(spec.k, spec.fusion_width());
  p.bz = Vec(spec.k);
  p.Wo = Mat(1, spec.k);
  p.bo = 0.0;
  p.We = Mat(spec.m, 1);
  p.be = Vec(spec.m);
  if (has_accumulative_memory(spec.variant)) p.Wh = Mat(spec.m, spec.m);
  if (spec.scalar_residual) p.We.at(0, 0) = 1.0;
  return p;
}

VarnnParams init_params(const VarnnSpec& spec, Rng& rng) {
  spec.validate();
  VarnnParams p;
  p.Wz = glorot_init(rng, spec.k, spec.fusion_width());
  p.bz = Vec(spec.k);
  p.Wo = glorot_init(rng, 1, spec.k);
  p.bo = 0.0;
  if (spec.scalar_residual) {
    p.We = Mat(1, 1, 1.0);
    p.be = Vec(1);
  } else {
    p.We = glorot_init(rng, spec.m, 1);
    p.be = Vec(spec.m);
  }
  if (has_accumulative_memory(spec.variant)) p.Wh = glorot_init(rng, spec.m, spec.m);
  return p;
}

std::vector<ParamBlock> param_blocks(const VarnnSpec& spec, VarnnParams& params) {
  const bool residual_trainable = !spec.scalar_residual;
  std::vector<ParamBlock> blocks{
      {"Wz", params.Wz.data.data(), params.Wz.size(), true},
      {"bz", params.bz.data.data(), params.bz.len(), true},
      {"Wo", params.Wo.data.data(), params.Wo.size(), true},
      {"bo", &params.bo, 1, true},
      {"We", params.We.data.data(), params.We.size(), residual_trainable},
      {"be", params.be.data.data(), params.be.len(), residual_trainable},
  };
  if (has_accumulative_memory(spec.variant)) {
    blocks.push_back({"Wh", params.Wh.data.data(), params.Wh.size(), true});
  }
  return blocks;
}

void WindowInstance::validate(std::size_t d) const {
  if (xs.size() < 2) {
    throw ShapeError("WindowInstance: needs w >= 2 covariate steps, got " +
                     std::to_string(xs.size()));
  }
  if (ys_context.size() != xs.size() - 1) {
    throw ShapeError("WindowInstance: expected " + std::to_string(xs.size() - 1) +
                     " context targets, got " + std::to_string(ys_context.size()));
  }
  for (const Vec& x : xs) {
    if (x.len() != d) {
      throw ShapeError("WindowInstance: covariate length " + std::to_string(x.len()) +
                       " does not match d=" + std::to_string(d));
    }
  }
}

Vec fuse(const VarnnSpec& spec, const Vec& x, const Vec& h_prev, const Vec* u_prev) {
  const bool am = has_activation_memory(spec.variant);
  if (am && u_prev == nullptr) {
    throw ShapeError("fuse: variant " + std::string(to_string(spec.variant)) +
                     " carries activation memory but u_prev is absent");
  }
  if (!am && u_prev != nullptr) {
    throw ShapeError("fuse: variant " + std::string(to_string(spec.variant)) +
                     " does not carry activation memory but u_prev was supplied");
  }
  Vec z(spec.fusion_width());
  std::size_t at = 0;
  for (std::size_t i = 0; i < x.len(); ++i) z.data[at++] = x.data[i];
  for (std::size_t i = 0; i < h_prev.len(); ++i) z.data[at++] = h_prev.data[i];
  if (am) {
    for (std::size_t i = 0; i < u_prev->len(); ++i) z.data[at++] = u_prev->data[i];
  }
  if (at != z.len()) {
    throw ShapeError("fuse: parts sum to " + std::to_string(at) + " but fusion width is " +
                     std::to_string(z.len()));
  }
  return z;
}

std::pair<Vec, double> predictor_step(const VarnnSpec& spec, const VarnnParams& params,
                                      const Vec& z) {
  Vec u = activation(spec.sigma, affine(params.Wz, z, params.bz));
  const double y_hat = matvec(params.Wo, u).data[0] + params.bo;
  (void)spec;
  return {std::move(u), y_hat};
}

Vec memory_update(const VarnnSpec& spec, const VarnnParams& params, double e,
                  const Vec& h_prev) {
  Vec pre = matvec(params.We, Vec{e});
  if (has_accumulative_memory(spec.variant)) {
    add_in_place(pre, matvec(params.Wh, h_prev));
  }
  add_in_place(pre, params.be);
  return activation(spec.rho, pre);
}

RolloutTrace rollout(const VarnnSpec& spec, const VarnnParams& params,
                     const WindowInstance& window) {
  spec.validate();
  window.validate(spec.d);
  const std::size_t w = window.w();
  const bool am = has_activation_memory(spec.variant);

  RolloutTrace trace;
  trace.h_initial = Vec(spec.m);
  trace.u_initial = Vec(am ? spec.k : 0);
  trace.z.reserve(w - 1);
  trace.u.reserve(w - 1);
  trace.h.reserve(w - 1);
  trace.y_hat.reserve(w - 1);
  trace.e.reserve(w - 1);

  const Vec* h_prev = &trace.h_initial;
  const Vec* u_prev = am ? &trace.u_initial : nullptr;

  for (std::size_t s = 0; s + 1 < w; ++s) {
    Vec z = fuse(spec, window.xs[s], *h_prev, u_prev);
    auto [u, y_hat] = predictor_step(spec, params, z);
    const double e = window.ys_context[s] - y_hat;
    Vec h = spec.zero_memory ? Vec(spec.m) : memory_update(spec, params, e, *h_prev);

    trace.z.push_back(std::move(z));
    trace.u.push_back(std::move(u));
    trace.y_hat.push_back(y_hat);
    trace.e.push_back(e);
    trace.h.push_back(std::move(h));

    h_prev = &trace.h.back();
    if (am) u_prev = &trace.u.back();
  }

  // Final step: prediction only, no innovation and no memory update.
  trace.z_final = fuse(spec, window.xs[w - 1], *h_prev, u_prev);
  auto [u_final, y_hat_final] = predictor_step(spec, params, trace.z_final);
  trace.u_final = std::move(u_final);
  trace.y_hat_final = y_hat_final;
  return trace;
}

std::size_t count_parameters(const VarnnSpec& spec) {
  spec.validate();
  std::size_t n = spec.k * spec.fusion_width()  // Wz
                  + spec.k                      // bz
                  + spec.k                      // Wo
                  + 1                           // bo
                  + spec.m                      // We
                  + spec.m;                     // be
  if (has_accumulative_memory(spec.variant)) n += spec.m * spec.m;  // Wh
  return n;
}

std::size_t count_feedforward_parameters(std::size_t d, std::size_t k) {
  return k * d + k + k + 1;
}

std::size_t count_macs_per_window(const VarnnSpec& spec, std::size_t w) {
  spec.validate();
  if (w < 2) throw ShapeError("count_macs_per_window: w must be >= 2");
  const std::size_t fused = spec.k * spec.fusion_width() + spec.k;
  std::size_t mem = spec.m;
  if (has_accumulative_memory(spec.variant)) mem += spec.m * spec.m;
  if (spec.zero_memory) mem = 0;
  return (w - 1) * (fused + mem) + fused;
}

double min_abs_preactivation(const VarnnSpec& spec, const VarnnParams& params,
                             const WindowInstance& window) {
  spec.validate();
  window.validate(spec.d);
  const std::size_t w = window.w();
  const bool am = has_activation_memory(spec.variant);

  double min_abs = std::numeric_limits<double>::infinity();
  auto visit = [&min_abs](const Vec& pre) {
    for (double x : pre.data) min_abs = std::min(min_abs, std::abs(x));
  };

  Vec h_prev(spec.m);
  Vec u_prev(am ? spec.k : 0);
  for (std::size_t s = 0; s + 1 < w; ++s) {
    Vec z = fuse(spec, window.xs[s], h_prev, am ? &u_prev : nullptr);
    Vec pre = affine(params.Wz, z, params.bz);
    visit(pre);
    Vec u = activation(spec.sigma, pre);
    const double y_hat = matvec(params.Wo, u).data[0] + params.bo;
    const double e = window.ys_context[s] - y_hat;
    if (!spec.zero_memory) {
      Vec mem_pre = matvec(params.We, Vec{e});
      if (has_accumulative_memory(spec.variant)) {
        add_in_place(mem_pre, matvec(params.Wh, h_prev));
      }
      add_in_place(mem_pre, params.be);
      visit(mem_pre);
      h_prev = activation(spec.rho, mem_pre);
    }
    if (am) u_prev = std::move(u);
  }
  Vec z = fuse(spec, window.xs[w - 1], h_prev, am ? &u_prev : nullptr);
  visit(affine(params.Wz, z, params.bz));
  return min_abs;
}

}  // namespace varnn
