#include "varnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace varnn {

namespace {

void add_outer_into(std::vector<double>& g, const Vec& a, const Vec& b) {
  // g viewed as an a.len x b.len row-major matrix; g += a * transpose(b)
  for (std::size_t r = 0; r < a.len(); ++r) {
    double* row = g.data() + r * b.len();
    for (std::size_t c = 0; c < b.len(); ++c) row[c] += a.data[r] * b.data[c];
  }
}

void add_vec_into(std::vector<double>& g, const Vec& a) {
  for (std::size_t i = 0; i < a.len(); ++i) g[i] += a.data[i];
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw std::invalid_argument("TrainConfig: betas must lie in [0, 1)");
  }
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
}

double loss(double y_hat_t, double y_t) {
  const double r = y_t - y_hat_t;
  return r * r;
}

GradientSet GradientSet::zeros_like(const std::vector<ParamBlock>& blocks) {
  GradientSet g;
  g.blocks.reserve(blocks.size());
  for (const auto& b : blocks) g.blocks.emplace_back(b.size, 0.0);
  return g;
}

void GradientSet::zero() {
  for (auto& b : blocks) std::fill(b.begin(), b.end(), 0.0);
}

void GradientSet::scale(double s) {
  for (auto& b : blocks)
    for (double& x : b) x *= s;
}

bool GradientSet::all_finite() const {
  for (const auto& b : blocks)
    for (double x : b)
      if (!std::isfinite(x)) return false;
  return true;
}

std::size_t GradientSet::total_size() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.size();
  return n;
}

AdamState AdamState::zeros_like(const std::vector<ParamBlock>& blocks) {
  AdamState s;
  s.first_moment = GradientSet::zeros_like(blocks);
  s.second_moment = GradientSet::zeros_like(blocks);
  s.step = 0;
  return s;
}

void adam_step(AdamState& state, std::vector<ParamBlock>& blocks,
               const GradientSet& grads, const TrainConfig& cfg) {
  if (grads.blocks.size() != blocks.size()) {
    throw ShapeError("adam_step: gradient has " + std::to_string(grads.blocks.size()) +
                     " blocks, parameters have " + std::to_string(blocks.size()));
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (grads.blocks[b].size() != blocks[b].size) {
      throw ShapeError(std::string("adam_step: block ") + blocks[b].name + " size mismatch");
    }
    if (!blocks[b].trainable) continue;
    auto& m = state.first_moment.blocks[b];
    auto& v = state.second_moment.blocks[b];
    const auto& g = grads.blocks[b];
    double* theta = blocks[b].data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps_adam);
    }
  }
}

void backward_into(const VarnnSpec& spec, const VarnnParams& params,
                   const WindowInstance& window, const RolloutTrace& trace,
                   GradientSet& out) {
  spec.validate();
  const std::size_t w = window.w();
  const std::size_t d = spec.d, m = spec.m, k = spec.k;
  const bool am = has_activation_memory(spec.variant);
  const bool acc = has_accumulative_memory(spec.variant);

  if (trace.steps() != w - 1 || trace.z_final.len() != spec.fusion_width()) {
    throw ShapeError("backward: trace does not match the window/spec it was given");
  }
  if (out.blocks.size() != (acc ? 7u : 6u)) {
    throw ShapeError("backward: gradient set has the wrong number of blocks");
  }

  auto& gWz = out.blocks[kWz];
  auto& gbz = out.blocks[kBz];
  auto& gWo = out.blocks[kWo];
  auto& gbo = out.blocks[kBo];
  auto& gWe = out.blocks[kWe];
  auto& gbe = out.blocks[kBe];

  // Final step: only the readout feeds the loss.
  const double dyhat_final = 2.0 * (trace.y_hat_final - window.y_target);
  for (std::size_t j = 0; j < k; ++j) gWo[j] += dyhat_final * trace.u_final.data[j];
  gbo[0] += dyhat_final;

  Vec da(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double du = params.Wo.at(0, j) * dyhat_final;
    da.data[j] = du * activation_derivative_from_output(spec.sigma, trace.u_final.data[j]);
  }
  add_outer_into(gWz, da, trace.z_final);
  add_vec_into(gbz, da);
  Vec dz = matvec_transposed(params.Wz, da);

  Vec dh(m);  // dL/dh_s for the step about to be processed
  for (std::size_t i = 0; i < m; ++i) dh.data[i] = dz.data[d + i];
  Vec du_carry(am ? k : 0);
  if (am) {
    for (std::size_t j = 0; j < k; ++j) du_carry.data[j] = dz.data[d + m + j];
  }

  // Supervised steps, newest first.
  for (std::size_t s = w - 1; s-- > 0;) {
    double de = 0.0;
    Vec dh_prev_mem(m);
    if (!spec.zero_memory) {
      const Vec& h_s = trace.h[s];
      Vec dg(m);
      for (std::size_t i = 0; i < m; ++i) {
        dg.data[i] = dh.data[i] * activation_derivative_from_output(spec.rho, h_s.data[i]);
      }
      for (std::size_t i = 0; i < m; ++i) gWe[i] += dg.data[i] * trace.e[s];
      add_vec_into(gbe, dg);
      for (std::size_t i = 0; i < m; ++i) de += params.We.at(i, 0) * dg.data[i];
      if (acc) {
        const Vec& h_prev = (s == 0) ? trace.h_initial : trace.h[s - 1];
        add_outer_into(out.blocks[kWh], dg, h_prev);
        dh_prev_mem = matvec_transposed(params.Wh, dg);
      }
    }

    // e_s = y_s - y_hat_s, and y_hat_s has no other consumer than e_s.
    const double dyhat = -de;
    for (std::size_t j = 0; j < k; ++j) gWo[j] += dyhat * trace.u[s].data[j];
    gbo[0] += dyhat;

    Vec da_s(k);
    for (std::size_t j = 0; j < k; ++j) {
      double du = params.Wo.at(0, j) * dyhat;
      if (am) du += du_carry.data[j];
      da_s.data[j] = du * activation_derivative_from_output(spec.sigma, trace.u[s].data[j]);
    }
    add_outer_into(gWz, da_s, trace.z[s]);
    add_vec_into(gbz, da_s);
    Vec dz_s = matvec_transposed(params.Wz, da_s);

    for (std::size_t i = 0; i < m; ++i) dh.data[i] = dz_s.data[d + i] + dh_prev_mem.data[i];
    if (am) {
      for (std::size_t j = 0; j < k; ++j) du_carry.data[j] = dz_s.data[d + m + j];
    }
  }
  // Gradients w.r.t. the zero initial states are discarded.
}

GradientSet zero_gradients(const VarnnSpec& spec) {
  spec.validate();
  GradientSet g;
  g.blocks.emplace_back(spec.k * spec.fusion_width(), 0.0);  // Wz
  g.blocks.emplace_back(spec.k, 0.0);                        // bz
  g.blocks.emplace_back(spec.k, 0.0);                        // Wo
  g.blocks.emplace_back(1, 0.0);                             // bo
  g.blocks.emplace_back(spec.m, 0.0);                        // We
  g.blocks.emplace_back(spec.m, 0.0);                        // be
  if (has_accumulative_memory(spec.variant)) g.blocks.emplace_back(spec.m * spec.m, 0.0);
  return g;
}

GradientSet backward(const VarnnSpec& spec, const VarnnParams& params,
                     const WindowInstance& window, const RolloutTrace& trace) {
  GradientSet out = zero_gradients(spec);
  backward_into(spec, params, window, trace, out);
  return out;
}

double grad_check(const VarnnSpec& spec, const VarnnParams& params,
                  const WindowInstance& window, double step) {
  const RolloutTrace trace = rollout(spec, params, window);
  const GradientSet analytic = backward(spec, params, window, trace);

  VarnnParams probe = params;
  auto blocks = param_blocks(spec, probe);
  double max_rel = 0.0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b].size; ++i) {
      double& theta = blocks[b].data[i];
      const double saved = theta;
      theta = saved + step;
      const double up = loss(rollout(spec, probe, window).y_hat_final, window.y_target);
      theta = saved - step;
      const double down = loss(rollout(spec, probe, window).y_hat_final, window.y_target);
      theta = saved;
      const double g_fd = (up - down) / (2.0 * step);
      const double g_an = analytic.blocks[b][i];
      const double denom = std::max({1.0, std::abs(g_an), std::abs(g_fd)});
      max_rel = std::max(max_rel, std::abs(g_an - g_fd) / denom);
    }
  }
  return max_rel;
}

GradCheckCase sample_gradcheck_case(Rng& rng, Activation sigma, Activation rho,
                                    double kink_margin) {
  static constexpr std::size_t kDims[] = {1, 2, 4};
  static constexpr std::size_t kWindows[] = {2, 3, 5};
  for (int attempt = 0; attempt < 1000; ++attempt) {
    GradCheckCase c;
    c.spec.variant = static_cast<Variant>(rng.next_below(4));
    c.spec.d = kDims[rng.next_below(3)];
    c.spec.m = kDims[rng.next_below(3)];
    c.spec.k = kDims[rng.next_below(3)];
    c.spec.sigma = sigma;
    c.spec.rho = rho;
    c.params = init_params(c.spec, rng);

    const std::size_t w = kWindows[rng.next_below(3)];
    c.window.xs.clear();
    c.window.ys_context.clear();
    for (std::size_t s = 0; s < w; ++s) {
      Vec x(c.spec.d);
      for (std::size_t i = 0; i < c.spec.d; ++i) x.data[i] = rng.uniform(-1.0, 1.0);
      c.window.xs.push_back(std::move(x));
    }
    for (std::size_t s = 0; s + 1 < w; ++s) c.window.ys_context.push_back(rng.uniform(-1.0, 1.0));
    c.window.y_target = rng.uniform(-1.0, 1.0);

    if (kink_margin <= 0.0 ||
        min_abs_preactivation(c.spec, c.params, c.window) > kink_margin) {
      return c;
    }
  }
  throw std::runtime_error("sample_gradcheck_case: rejection sampling did not converge");
}

DivergenceError::DivergenceError(std::size_t epoch_, std::size_t batch_,
                                 const std::string& message)
    : NumericError("diverged at epoch " + std::to_string(epoch_) + ", batch " +
                   std::to_string(batch_) + ": " + message),
      epoch(epoch_),
      batch(batch_) {}

VarnnRegressor::VarnnRegressor(VarnnSpec spec, VarnnParams params)
    : spec_(spec), params_(std::move(params)) {
  spec_.validate();
}

std::vector<ParamBlock> VarnnRegressor::blocks() { return param_blocks(spec_, params_); }

double VarnnRegressor::predict(const WindowInstance& window) const {
  return rollout(spec_, params_, window).y_hat_final;
}

void VarnnRegressor::add_gradient(const WindowInstance& window, GradientSet& grad) const {
  const RolloutTrace trace = rollout(spec_, params_, window);
  backward_into(spec_, params_, window, trace, grad);
}

double mse_over(const Regressor& model, const std::vector<WindowInstance>& windows) {
  if (windows.empty()) throw std::invalid_argument("mse_over: empty window set");
  double acc = 0.0;
  for (const auto& w : windows) acc += loss(model.predict(w), w.y_target);
  return acc / static_cast<double>(windows.size());
}

FitOutcome fit_regressor(Regressor& model, const std::vector<WindowInstance>& train,
                         const std::vector<WindowInstance>& val, const TrainConfig& cfg,
                         Rng& shuffle_rng) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("fit: training window set is empty");
  if (val.empty()) throw std::invalid_argument("fit: validation window set is empty");

  auto blocks = model.blocks();
  AdamState adam = AdamState::zeros_like(blocks);
  GradientSet grad = GradientSet::zeros_like(blocks);

  FitOutcome out;
  out.early_stopping_inert = cfg.patience >= cfg.max_epochs;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<std::vector<double>> best_snapshot;
  auto snapshot = [&]() {
    best_snapshot.clear();
    for (const auto& b : blocks) best_snapshot.emplace_back(b.data, b.data + b.size);
  };

  std::size_t epochs_since_improve = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();

    // Fisher-Yates over the window order, one stream across all epochs.
    for (std::size_t i = order.size(); i-- > 1;) {
      const std::size_t j = shuffle_rng.next_below(i + 1);
      std::swap(order[i], order[j]);
    }

    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      grad.zero();
      for (std::size_t i = begin; i < end; ++i) model.add_gradient(train[order[i]], grad);
      grad.scale(1.0 / static_cast<double>(end - begin));
      if (!grad.all_finite()) {
        throw DivergenceError(epoch, batch_index, "non-finite gradient");
      }
      adam_step(adam, blocks, grad, cfg);
      ++batch_index;
    }

    const double train_mse = mse_over(model, train);
    const double val_mse = mse_over(model, val);
    if (!std::isfinite(train_mse) || !std::isfinite(val_mse)) {
      throw DivergenceError(epoch, batch_index, "non-finite epoch MSE");
    }
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    out.curve.push_back({epoch, train_mse, val_mse, wall_ms});

    if (val_mse < out.best_val_mse) {
      out.best_val_mse = val_mse;
      out.best_epoch = epoch;
      epochs_since_improve = 0;
      if (cfg.restore_best) snapshot();
    } else {
      ++epochs_since_improve;
      if (epochs_since_improve > cfg.patience) {
        out.stopped_early = true;
        break;
      }
    }
  }

  if (cfg.restore_best && !best_snapshot.empty()) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      std::copy(best_snapshot[b].begin(), best_snapshot[b].end(), blocks[b].data);
    }
  }
  return out;
}

FitResult fit(const VarnnSpec& spec, const std::vector<WindowInstance>& train,
              const std::vector<WindowInstance>& val, const TrainConfig& cfg) {
  Rng rng(cfg.seed);
  VarnnRegressor model(spec, init_params(spec, rng));
  FitOutcome outcome = fit_regressor(model, train, val, cfg, rng);
  return {model.params(), std::move(outcome)};
}

}  // namespace varnn
