#pragma once

// The simplified attention model: residual multi-head attention with softmax
// over the sequence index and no score scaling, alternating with pointwise
// two-layer feed-forward maps; linear embed with optional per-timestep
// offsets; per-timestep linear readout. Also the explicit two-layer
// superposition skeleton whose attention weights are frozen to identity /
// uniform and whose expressive power lives entirely in the FF slots.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "atrl/mat.hpp"
#include "atrl/rng.hpp"
#include "atrl/tensor.hpp"

namespace atrl {

struct ModelBudget {
  std::size_t n = 0;      // hidden width
  std::size_t h = 0;      // heads
  std::size_t m_h = 0;    // query/key width
  std::size_t m_v = 0;    // value width
  std::size_t m_ff = 0;   // feed-forward width
  std::size_t l = 0;      // layers
  std::size_t tau = 0;    // sequence length
  std::size_t d = 0;      // input dim
  std::size_t d_out = 1;  // readout dim

  void validate() const;
};

struct AttentionHeadParams {
  Tensor W_Q;  // (m_h x n)
  Tensor W_K;  // (m_h x n)
  Tensor W_V;  // (m_v x n)
  Tensor W_o;  // (n x m_v)
};

struct FeedForwardParams {
  Tensor W1;  // (m_ff x n)
  Tensor b1;  // (m_ff)
  Tensor W2;  // (n x m_ff)
  Tensor b2;  // (n)
};

enum class Activation { kSigmoid, kRelu };

struct PositionalEncoding {
  Tensor A;  // (n x d) linear lift
  Tensor e;  // (n x tau), column t added to the lifted x(t)
  bool trainable = true;
};

struct Block {
  std::vector<AttentionHeadParams> heads;
  FeedForwardParams ff;
};

struct TransformerModel {
  ModelBudget budget;
  PositionalEncoding pe;
  bool use_positional = true;
  std::vector<Block> blocks;
  Tensor readout_W;  // (d_out x n)
  Tensor readout_b;  // (d_out)
  Activation act = Activation::kSigmoid;
  double score_scale = 1.0;  // multiplies raw scores; 1 = the plain form
  bool ff_residual = false;

  std::vector<Tensor> parameters() const;
  std::vector<Tensor> trainable_parameters() const;
};

struct ModelOptions {
  Activation act = Activation::kSigmoid;
  bool use_positional = true;
  bool trainable_pe = true;
  bool sinusoidal_pe = false;  // fixed sin/cos offsets instead of trained ones
  double score_scale = 1.0;
  bool ff_residual = false;
};

// Random initialization; every shape is checked here so the forward pass can
// assume consistency.
TransformerModel make_model(const ModelBudget& budget, Rng& rng, const ModelOptions& opts = {});

// Revalidate an assembled/mutated model against its budget.
void validate_model(const TransformerModel& model);

// One attention layer including the residual term.
Tensor attention_forward(const std::vector<AttentionHeadParams>& heads, const Tensor& h_seq,
                         double score_scale = 1.0);

// Pointwise two-layer map; residual off by default.
Tensor ff_forward(const FeedForwardParams& ff, const Tensor& h_seq, Activation act,
                  bool residual = false);

// Hidden state after embed and all blocks, shape (n x tau).
Tensor model_hidden(const TransformerModel& model, const Tensor& x);

// Full composition: embed, blocks, per-timestep readout. x is (d x tau).
Tensor model_forward(const TransformerModel& model, const Tensor& x);

// Post-softmax attention matrix of one head on one input; rows sum to 1.
Mat extract_attention_graph(const TransformerModel& model, const Tensor& x,
                            std::size_t layer_index, std::size_t head_index);

struct SkeletonOptions {
  // Per-timestep input shifts b_1..b_tau; empty means b_t = 2t, which pushes
  // unit-interval inputs into disjoint bands.
  std::vector<double> shifts;
  Activation act = Activation::kSigmoid;
  std::uint64_t seed = 1;
};

// Two-layer model with frozen attention: layer 1 exactly the identity
// (W_o = 0), layer 2 exactly uniform (W_Q = 0), layer-2 values reading the
// first (2*tau*d+1)*tau coordinates and writing tau times their uniform
// average into the second half, fixed summing readout; both FF slots and
// nothing else trainable. Requires l = 2, n = 2*tau*(2*tau*d+1),
// m_v = (2*tau*d+1)*tau.
TransformerModel build_kolmogorov_skeleton(const ModelBudget& budget,
                                           const SkeletonOptions& opts = {});

// "ATRL" envelope, section "MODL"; bit-exact round trip.
void save_model(std::ostream& os, const TransformerModel& model);
TransformerModel load_model(std::istream& is);
void save_model_file(const std::string& path, const TransformerModel& model);
TransformerModel load_model_file(const std::string& path);

}  // namespace atrl
