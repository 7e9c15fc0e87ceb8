#pragma once

// Seeded training plumbing shared by all experiments: the linear-recurrence
// baseline, adaptive-moment descent, and a deterministic loop over SEQD-style
// datasets with a divergence guard and optional plateau stop.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "atrl/dataset.hpp"
#include "atrl/rng.hpp"
#include "atrl/tensor.hpp"
#include "atrl/transformer.hpp"

namespace atrl {

enum class RnnActivation { kLinear, kSigmoid };

// One-layer recurrent baseline: h(t) = act(W_in x(t) + W_rec h(t-1) + b_h)
// with h(0) = 0, read out as y(t) = W_out h(t) + b_out.
struct RNNParams {
  Tensor W_in;   // (width x d)
  Tensor W_rec;  // (width x width)
  Tensor b_h;    // (width)
  Tensor W_out;  // (d_out x width)
  Tensor b_out;  // (d_out)
  RnnActivation act = RnnActivation::kLinear;

  std::size_t width() const { return W_rec.dim(0); }
  std::vector<Tensor> parameters() const;
};

RNNParams make_rnn(std::size_t width, std::size_t d, std::size_t d_out, Rng& rng,
                   RnnActivation act = RnnActivation::kLinear);

// x is (d x tau). Input slices are treated as data: gradients flow to the
// parameters only, never back into x.
Tensor rnn_forward(const RNNParams& rnn, const Tensor& x);

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 2000;
  std::size_t batch = 32;
  std::uint64_t seed = 1;
  bool plateau_stop = false;  // stop once train MSE improves less than
  double plateau_tol = 1e-6;  // plateau_tol relatively over plateau_window epochs
  std::size_t plateau_window = 100;

  void validate() const;
};

// Thrown when a batch loss stops being finite. The parameters have already
// been rolled back to the end of the last finite epoch when this is raised.
struct TrainingDiverged : std::runtime_error {
  std::size_t last_good_epoch;  // 0 = initial parameters
  TrainingDiverged(std::size_t e, const std::string& msg)
      : std::runtime_error(msg), last_good_epoch(e) {}
};

struct EpochStats {
  std::size_t epoch = 0;   // 1-based
  double train_mse = 0.0;  // running mean over the epoch's batches
  double test_mse = 0.0;   // fixed-parameter evaluation after the epoch
};

struct TrainResult {
  std::vector<EpochStats> history;
  double final_train_mse = 0.0;  // fixed-parameter evaluation after training
  double final_test_mse = 0.0;
  std::size_t epochs_run = 0;
  bool plateau_stopped = false;
};

// Builds the prediction graph for one input sequence under the active tape.
using ForwardFn = std::function<Tensor(const Tensor& x)>;

// Mean squared error of fwd over the dataset, summed in file order.
double eval_mse(const ForwardFn& fwd, const Dataset& ds);

// Adaptive-moment descent over the given parameter set, deterministic given
// cfg.seed. Updates the parameters in place; `params` must be the trainable
// leaves referenced by fwd.
TrainResult train(const ForwardFn& fwd, const std::vector<Tensor>& params,
                  const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& cfg);

TrainResult train(TransformerModel& model, const Dataset& train_set,
                  const Dataset& test_set, const TrainConfig& cfg);
TrainResult train(RNNParams& rnn, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& cfg);

Tensor to_tensor(const Mat& m);

}  // namespace atrl
