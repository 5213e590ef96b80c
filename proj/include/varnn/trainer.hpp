#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "varnn/model.hpp"

namespace varnn {

enum class LossTarget { FinalStepOnly };

struct TrainConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 50;
  std::size_t patience = 50;
  bool restore_best = true;
  std::uint64_t seed = 2025;
  LossTarget loss_target = LossTarget::FinalStepOnly;

  void validate() const;
};

/// Squared error of the final-step prediction. Batch losses are the mean of
/// this over the windows in the batch.
double loss(double y_hat_t, double y_t);

/// Per-tensor value storage shaped after a parameter block list. Used for
/// gradients and for the Adam moment accumulators.
struct GradientSet {
  std::vector<std::vector<double>> blocks;

  static GradientSet zeros_like(const std::vector<ParamBlock>& blocks);
  void zero();
  void scale(double s);
  bool all_finite() const;
  std::size_t total_size() const;
};

struct AdamState {
  GradientSet first_moment;
  GradientSet second_moment;  // elementwise >= 0 always
  std::int64_t step = 0;

  static AdamState zeros_like(const std::vector<ParamBlock>& blocks);
};

/// One Adam update with bias correction:
///   theta <- theta - lr * mhat / (sqrt(vhat) + eps_adam).
/// Blocks marked non-trainable are left untouched.
void adam_step(AdamState& state, std::vector<ParamBlock>& blocks,
               const GradientSet& grads, const TrainConfig& cfg);

/// Gradient storage shaped after a spec's parameter tensors.
GradientSet zero_gradients(const VarnnSpec& spec);

/// Exact reverse-mode gradient of loss(y_hat_final, y_target) with respect to
/// every parameter tensor, for one window. The innovation path is
/// differentiated too (d e_tau / d y_hat_tau = -1), so gradients reach the
/// predictor parameters through earlier supervised steps.
GradientSet backward(const VarnnSpec& spec, const VarnnParams& params,
                     const WindowInstance& window, const RolloutTrace& trace);

/// Same as backward but accumulating into an existing gradient set.
void backward_into(const VarnnSpec& spec, const VarnnParams& params,
                   const WindowInstance& window, const RolloutTrace& trace,
                   GradientSet& out);

/// max over parameters of |g_analytic - g_fd| / max(1, |g_analytic|, |g_fd|),
/// with g_fd from central differences of the given step size.
double grad_check(const VarnnSpec& spec, const VarnnParams& params,
                  const WindowInstance& window, double step);

struct GradCheckCase {
  VarnnSpec spec;
  VarnnParams params;
  WindowInstance window;
};

/// Random small instance (d, m, k in {1,2,4}, w in {2,3,5}, random variant).
/// When kink_margin > 0, resamples until every pre-activation of the rollout
/// is at least that far from zero, keeping ReLU finite differences honest.
GradCheckCase sample_gradcheck_case(Rng& rng, Activation sigma, Activation rho,
                                    double kink_margin);

struct EpochPoint {
  std::size_t epoch;  // 1-based
  double train_mse;
  double val_mse;
  double wall_ms;
};
using LearningCurve = std::vector<EpochPoint>;

struct FitOutcome {
  LearningCurve curve;
  std::size_t best_epoch = 0;  // 1-based epoch achieving the minimum val MSE
  double best_val_mse = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
  bool early_stopping_inert = false;  // patience >= max_epochs
};

/// Raised when a training loss goes non-finite; carries the epoch/batch.
class DivergenceError : public NumericError {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch, const std::string& message);
  std::size_t epoch;
  std::size_t batch;
};

/// Anything trainable on windows by squared error at the final step.
class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual std::vector<ParamBlock> blocks() = 0;
  virtual double predict(const WindowInstance& window) const = 0;
  /// Accumulate d/dtheta of (predict(window) - window.y_target)^2.
  virtual void add_gradient(const WindowInstance& window, GradientSet& grad) const = 0;
};

class VarnnRegressor : public Regressor {
 public:
  VarnnRegressor(VarnnSpec spec, VarnnParams params);

  const VarnnSpec& spec() const { return spec_; }
  VarnnParams& params() { return params_; }
  const VarnnParams& params() const { return params_; }

  std::vector<ParamBlock> blocks() override;
  double predict(const WindowInstance& window) const override;
  void add_gradient(const WindowInstance& window, GradientSet& grad) const override;

 private:
  VarnnSpec spec_;
  VarnnParams params_;
};

double mse_over(const Regressor& model, const std::vector<WindowInstance>& windows);

/// Epoch loop: seeded shuffle, mini-batches (last partial batch kept), one
/// Adam step per batch, then train/validation MSE recorded on the updated
/// parameters. Stops once validation MSE has not improved for more than
/// `patience` epochs; restores the best-epoch snapshot when restore_best.
FitOutcome fit_regressor(Regressor& model, const std::vector<WindowInstance>& train,
                         const std::vector<WindowInstance>& val, const TrainConfig& cfg,
                         Rng& shuffle_rng);

struct FitResult {
  VarnnParams best_params;
  FitOutcome outcome;
};

/// Glorot-initializes from cfg.seed and trains; the same stream then drives
/// the mini-batch shuffling, so a (spec, windows, cfg) triple fixes the run.
FitResult fit(const VarnnSpec& spec, const std::vector<WindowInstance>& train,
              const std::vector<WindowInstance>& val, const TrainConfig& cfg);

}  // namespace varnn
