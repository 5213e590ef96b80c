#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "varnn/numkit.hpp"

namespace varnn {

// The four model variants cross two axes: whether the residual-memory update
// is instantaneous (RM) or accumulative (ARM, adds a persistence matrix Wh),
// and whether the previous latent activation is carried into the fusion
// vector (the +AM variants).
enum class Variant { RM, RM_AM, ARM, ARM_AM };

bool has_activation_memory(Variant v);
bool has_accumulative_memory(Variant v);
Variant variant_from_string(std::string_view s);
std::string_view to_string(Variant v);

struct VarnnSpec {
  Variant variant = Variant::RM;
  std::size_t d = 1;  // covariate width
  std::size_t m = 1;  // residual-memory width
  std::size_t k = 1;  // predictor hidden width
  Activation sigma = Activation::Relu;  // predictor nonlinearity
  Activation rho = Activation::Relu;    // memory nonlinearity
  // Scalar ablation: m must be 1 and the innovation projection is frozen to
  // We = [[1]], be = [0], so the state carries the raw innovation.
  bool scalar_residual = false;
  // No-residual ablation: the memory state is pinned to zero and never updated.
  bool zero_memory = false;

  std::size_t fusion_width() const;
  void validate() const;
};

/// Memory-width sweep tokens: "d" -> d, "2d_cap128" -> min(128, 2d),
/// anything else must parse as a positive integer.
std::size_t resolve_memory_width(const std::string& token, std::size_t d);

struct VarnnParams {
  Mat Wz;          // k x fusion_width
  Vec bz;          // k
  Mat Wo;          // 1 x k
  double bo = 0.0;
  Mat We;          // m x 1, innovation projection
  Vec be;          // m
  Mat Wh;          // m x m; empty unless the variant is accumulative
};

VarnnParams zero_params(const VarnnSpec& spec);

/// Glorot-uniform weights drawn in the fixed order Wz, Wo, We, Wh; biases
/// start at zero. scalar_residual pins We = [[1]], be = [0] without consuming
/// draws for them.
VarnnParams init_params(const VarnnSpec& spec, Rng& rng);

/// A named view over one parameter tensor's scalars.
struct ParamBlock {
  const char* name;
  double* data;
  std::size_t size;
  bool trainable;
};

// Block order used everywhere (optimizer state, gradients, serialization).
enum VarnnBlockIndex { kWz = 0, kBz, kWo, kBo, kWe, kBe, kWh };

/// Fixed order Wz, bz, Wo, bo, We, be, then Wh for accumulative variants.
/// We/be are marked non-trainable under scalar_residual.
std::vector<ParamBlock> param_blocks(const VarnnSpec& spec, VarnnParams& params);

struct WindowInstance {
  std::vector<Vec> xs;             // w covariate vectors, oldest first
  std::vector<double> ys_context;  // w-1 targets for the supervised steps
  double y_target = 0.0;           // final-step target; never read by rollout

  std::size_t w() const { return xs.size(); }
  void validate(std::size_t d) const;
};

/// Everything the forward pass computed, laid out per supervised step plus
/// the final prediction-only step. Backprop consumes this verbatim.
struct RolloutTrace {
  std::vector<Vec> z;  // fusion vectors, one per supervised step
  std::vector<Vec> u;  // latent activations
  std::vector<Vec> h;  // memory states after each supervised update
  std::vector<double> y_hat;
  std::vector<double> e;  // innovations, exactly w-1 of them

  Vec z_final;
  Vec u_final;
  double y_hat_final = 0.0;

  Vec h_initial;  // always the zero vector
  Vec u_initial;  // zero vector; only carried for activation-memory variants

  std::size_t steps() const { return e.size(); }
};

/// Concatenate [x; h_prev] (plain variants) or [x; h_prev; u_prev] (+AM).
/// u_prev must be supplied exactly when the variant carries activation memory.
Vec fuse(const VarnnSpec& spec, const Vec& x, const Vec& h_prev, const Vec* u_prev);

/// u = sigma(Wz z + bz), y_hat = Wo u + bo.
std::pair<Vec, double> predictor_step(const VarnnSpec& spec, const VarnnParams& params,
                                      const Vec& z);

/// RM: h = rho(We e + be). ARM: h = rho(We e + Wh h_prev + be).
Vec memory_update(const VarnnSpec& spec, const VarnnParams& params, double e,
                  const Vec& h_prev);

/// Teacher-forced unroll over the w-1 supervised steps followed by the
/// prediction-only final step. Never reads window.y_target.
RolloutTrace rollout(const VarnnSpec& spec, const VarnnParams& params,
                     const WindowInstance& window);

std::size_t count_parameters(const VarnnSpec& spec);

/// Covariate-only predictor of the same widths: k*d + 2k + 1 scalars.
std::size_t count_feedforward_parameters(std::size_t d, std::size_t k);

/// Multiplies per window: (w-1) * [k*fusion + k + mem] + [k*fusion + k]
/// with mem = m (instantaneous), m + m^2 (accumulative), 0 (zero_memory).
std::size_t count_macs_per_window(const VarnnSpec& spec, std::size_t w);

/// Smallest |pre-activation| reached anywhere in a rollout. Finite-difference
/// probes on ReLU nets reject instances where this is too close to a kink.
double min_abs_preactivation(const VarnnSpec& spec, const VarnnParams& params,
                             const WindowInstance& window);

}  // namespace varnn
