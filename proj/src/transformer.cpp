#include "atrl/transformer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "atrl/envelope.hpp"

namespace atrl {

void ModelBudget::validate() const {
  const struct { const char* name; std::size_t v; } fields[] = {
      {"n", n}, {"h", h}, {"m_h", m_h}, {"m_v", m_v}, {"m_ff", m_ff},
      {"l", l}, {"tau", tau}, {"d", d}, {"d_out", d_out}};
  for (const auto& f : fields)
    if (f.v == 0)
      throw std::invalid_argument(std::string("budget: ") + f.name + " must be positive");
}

namespace {

void check_shape(const Tensor& t, std::size_t r, std::size_t c, const char* what) {
  if (t.ndim() != 2 || t.dim(0) != r || t.dim(1) != c) {
    std::ostringstream msg;
    msg << "model: " << what << " must be (" << r << "," << c << ")";
    throw std::invalid_argument(msg.str());
  }
}

void check_vec(const Tensor& t, std::size_t len, const char* what) {
  if (t.ndim() != 1 || t.dim(0) != len) {
    std::ostringstream msg;
    msg << "model: " << what << " must have length " << len;
    throw std::invalid_argument(msg.str());
  }
}

Tensor frozen_zeros(const Shape& shape) {
  Tensor t = Tensor::zeros(shape);
  t.set_requires_grad(false);
  return t;
}

}  // namespace

void validate_model(const TransformerModel& model) {
  const ModelBudget& b = model.budget;
  b.validate();
  if (model.blocks.size() != b.l)
    throw std::invalid_argument("model: block count " + std::to_string(model.blocks.size()) +
                                " does not match budget l = " + std::to_string(b.l));
  check_shape(model.pe.A, b.n, b.d, "embed matrix");
  check_shape(model.pe.e, b.n, b.tau, "positional offsets");
  for (const Block& blk : model.blocks) {
    if (blk.heads.size() != b.h)
      throw std::invalid_argument("model: head count " + std::to_string(blk.heads.size()) +
                                  " does not match budget h = " + std::to_string(b.h));
    for (const AttentionHeadParams& hp : blk.heads) {
      check_shape(hp.W_Q, b.m_h, b.n, "W_Q");
      check_shape(hp.W_K, b.m_h, b.n, "W_K");
      check_shape(hp.W_V, b.m_v, b.n, "W_V");
      check_shape(hp.W_o, b.n, b.m_v, "W_o");
    }
    check_shape(blk.ff.W1, b.m_ff, b.n, "FF W1");
    check_vec(blk.ff.b1, b.m_ff, "FF b1");
    check_shape(blk.ff.W2, b.n, b.m_ff, "FF W2");
    check_vec(blk.ff.b2, b.n, "FF b2");
  }
  check_shape(model.readout_W, b.d_out, b.n, "readout");
  check_vec(model.readout_b, b.d_out, "readout bias");
  if (!std::isfinite(model.score_scale))
    throw std::invalid_argument("model: score scale must be finite");
}

TransformerModel make_model(const ModelBudget& budget, Rng& rng, const ModelOptions& opts) {
  budget.validate();
  TransformerModel m;
  m.budget = budget;
  m.use_positional = opts.use_positional;
  m.act = opts.act;
  m.score_scale = opts.score_scale;
  m.ff_residual = opts.ff_residual;

  const double sn = 1.0 / std::sqrt(static_cast<double>(budget.n));
  const double sd = 1.0 / std::sqrt(static_cast<double>(budget.d));
  const double sv = 1.0 / std::sqrt(static_cast<double>(budget.m_v));
  const double sf = 1.0 / std::sqrt(static_cast<double>(budget.m_ff));

  m.pe.A = Tensor::randn(rng, {budget.n, budget.d}, sd, true);
  if (opts.sinusoidal_pe) {
    Tensor e({budget.n, budget.tau});
    double* ed = e.data();
    for (std::size_t i = 0; i < budget.n; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) /
                                                 static_cast<double>(budget.n));
      for (std::size_t t = 0; t < budget.tau; ++t) {
        const double ph = static_cast<double>(t) * freq;
        ed[i * budget.tau + t] = (i % 2 == 0) ? std::sin(ph) : std::cos(ph);
      }
    }
    e.set_requires_grad(false);
    m.pe.e = e;
    m.pe.trainable = false;
  } else {
    m.pe.e = Tensor::randn(rng, {budget.n, budget.tau}, 0.1, opts.trainable_pe);
    m.pe.trainable = opts.trainable_pe;
  }
  if (!opts.use_positional) {
    m.pe.e = frozen_zeros({budget.n, budget.tau});
    m.pe.trainable = false;
  }

  for (std::size_t li = 0; li < budget.l; ++li) {
    Block blk;
    for (std::size_t hi = 0; hi < budget.h; ++hi) {
      AttentionHeadParams hp;
      hp.W_Q = Tensor::randn(rng, {budget.m_h, budget.n}, sn, true);
      hp.W_K = Tensor::randn(rng, {budget.m_h, budget.n}, sn, true);
      hp.W_V = Tensor::randn(rng, {budget.m_v, budget.n}, sn, true);
      hp.W_o = Tensor::randn(rng, {budget.n, budget.m_v}, sv, true);
      blk.heads.push_back(std::move(hp));
    }
    blk.ff.W1 = Tensor::randn(rng, {budget.m_ff, budget.n}, sn, true);
    blk.ff.b1 = Tensor::zeros({budget.m_ff});
    blk.ff.b1.set_requires_grad(true);
    blk.ff.W2 = Tensor::randn(rng, {budget.n, budget.m_ff}, sf, true);
    blk.ff.b2 = Tensor::zeros({budget.n});
    blk.ff.b2.set_requires_grad(true);
    m.blocks.push_back(std::move(blk));
  }

  m.readout_W = Tensor::randn(rng, {budget.d_out, budget.n}, sn, true);
  m.readout_b = Tensor::zeros({budget.d_out});
  m.readout_b.set_requires_grad(true);
  validate_model(m);
  return m;
}

std::vector<Tensor> TransformerModel::parameters() const {
  std::vector<Tensor> ps = {pe.A, pe.e};
  for (const Block& blk : blocks) {
    for (const AttentionHeadParams& hp : blk.heads) {
      ps.push_back(hp.W_Q);
      ps.push_back(hp.W_K);
      ps.push_back(hp.W_V);
      ps.push_back(hp.W_o);
    }
    ps.push_back(blk.ff.W1);
    ps.push_back(blk.ff.b1);
    ps.push_back(blk.ff.W2);
    ps.push_back(blk.ff.b2);
  }
  ps.push_back(readout_W);
  ps.push_back(readout_b);
  return ps;
}

std::vector<Tensor> TransformerModel::trainable_parameters() const {
  std::vector<Tensor> out;
  for (const Tensor& t : parameters())
    if (t.requires_grad()) out.push_back(t);
  return out;
}

Tensor attention_forward(const std::vector<AttentionHeadParams>& heads, const Tensor& h_seq,
                         double score_scale) {
  Tensor out = h_seq;
  for (const AttentionHeadParams& hp : heads) {
    Tensor Q = matmul(hp.W_Q, h_seq);            // (m_h x tau)
    Tensor K = matmul(hp.W_K, h_seq);            // (m_h x tau)
    Tensor V = matmul(hp.W_V, h_seq);            // (m_v x tau)
    Tensor S = matmul_tn(Q, K);                  // (tau x tau), S(t,s)
    if (score_scale != 1.0) S = scale(S, score_scale);
    Tensor P = softmax(S, 1);                    // rows stochastic over s
    Tensor pooled = matmul_nt(V, P);             // (m_v x tau)
    out = add(out, matmul(hp.W_o, pooled));
  }
  return out;
}

Tensor ff_forward(const FeedForwardParams& ff, const Tensor& h_seq, Activation act,
                  bool residual) {
  Tensor z = add_bias_col(matmul(ff.W1, h_seq), ff.b1);
  Tensor a = (act == Activation::kSigmoid) ? sigmoid(z) : relu(z);
  Tensor out = add_bias_col(matmul(ff.W2, a), ff.b2);
  if (residual) out = add(out, h_seq);
  return out;
}

namespace {

Tensor embed_forward(const TransformerModel& model, const Tensor& x) {
  if (x.ndim() != 2 || x.dim(0) != model.budget.d || x.dim(1) != model.budget.tau) {
    std::ostringstream msg;
    msg << "model: input must be (" << model.budget.d << "," << model.budget.tau << ")";
    throw std::invalid_argument(msg.str());
  }
  Tensor hcur = matmul(model.pe.A, x);
  if (model.use_positional) hcur = add(hcur, model.pe.e);
  return hcur;
}

}  // namespace

Tensor model_hidden(const TransformerModel& model, const Tensor& x) {
  Tensor hcur = embed_forward(model, x);
  for (const Block& blk : model.blocks) {
    hcur = attention_forward(blk.heads, hcur, model.score_scale);
    hcur = ff_forward(blk.ff, hcur, model.act, model.ff_residual);
  }
  return hcur;
}

Tensor model_forward(const TransformerModel& model, const Tensor& x) {
  return add_bias_col(matmul(model.readout_W, model_hidden(model, x)), model.readout_b);
}

Mat extract_attention_graph(const TransformerModel& model, const Tensor& x,
                            std::size_t layer_index, std::size_t head_index) {
  if (layer_index >= model.blocks.size())
    throw std::out_of_range("attention graph: layer " + std::to_string(layer_index) +
                            " out of range (model has " + std::to_string(model.blocks.size()) +
                            " layers)");
  if (head_index >= model.blocks[layer_index].heads.size())
    throw std::out_of_range("attention graph: head " + std::to_string(head_index) +
                            " out of range");
  Tensor hcur = embed_forward(model, x);
  for (std::size_t li = 0; li < layer_index; ++li) {
    hcur = attention_forward(model.blocks[li].heads, hcur, model.score_scale);
    hcur = ff_forward(model.blocks[li].ff, hcur, model.act, model.ff_residual);
  }
  const AttentionHeadParams& hp = model.blocks[layer_index].heads[head_index];
  Tensor S = matmul_tn(matmul(hp.W_Q, hcur), matmul(hp.W_K, hcur));
  if (model.score_scale != 1.0) S = scale(S, model.score_scale);
  Tensor P = softmax(S, 1);
  const std::size_t tau = model.budget.tau;
  Mat g(tau, tau);
  for (std::size_t t = 0; t < tau; ++t)
    for (std::size_t s = 0; s < tau; ++s) g(t, s) = P.at(t, s);
  return g;
}

TransformerModel build_kolmogorov_skeleton(const ModelBudget& budget, const SkeletonOptions& opts) {
  budget.validate();
  const std::size_t q = 2 * budget.tau * budget.d + 1;
  const std::size_t half = q * budget.tau;
  if (budget.l != 2)
    throw std::invalid_argument("skeleton: requires l = 2, got " + std::to_string(budget.l));
  if (budget.n != 2 * half)
    throw std::invalid_argument("skeleton: requires n = 2*tau*(2*tau*d+1) = " +
                                std::to_string(2 * half) + ", got " + std::to_string(budget.n));
  if (budget.m_v != half)
    throw std::invalid_argument("skeleton: requires m_v = (2*tau*d+1)*tau = " +
                                std::to_string(half) + ", got " + std::to_string(budget.m_v));
  if (budget.h != 1)
    throw std::invalid_argument("skeleton: requires h = 1, got " + std::to_string(budget.h));
  if (!opts.shifts.empty() && opts.shifts.size() != budget.tau)
    throw std::invalid_argument("skeleton: need one shift per timestep");

  Rng rng(opts.seed);
  TransformerModel m;
  m.budget = budget;
  m.act = opts.act;
  m.use_positional = true;
  m.score_scale = 1.0;
  m.ff_residual = false;

  // Embed: copy x(t) into the first d coordinates, shifted by b_t.
  Tensor A = Tensor::zeros({budget.n, budget.d});
  for (std::size_t i = 0; i < budget.d; ++i) A.data()[i * budget.d + i] = 1.0;
  A.set_requires_grad(false);
  m.pe.A = A;
  Tensor e = Tensor::zeros({budget.n, budget.tau});
  for (std::size_t t = 0; t < budget.tau; ++t) {
    const double bt = opts.shifts.empty() ? 2.0 * static_cast<double>(t) : opts.shifts[t];
    for (std::size_t i = 0; i < budget.d; ++i) e.data()[i * budget.tau + t] = bt;
  }
  e.set_requires_grad(false);
  m.pe.e = e;
  m.pe.trainable = false;

  const double sn = 1.0 / std::sqrt(static_cast<double>(budget.n));
  const double sf = 1.0 / std::sqrt(static_cast<double>(budget.m_ff));
  auto trainable_ff = [&]() {
    FeedForwardParams ff;
    ff.W1 = Tensor::randn(rng, {budget.m_ff, budget.n}, sn, true);
    ff.b1 = Tensor::zeros({budget.m_ff});
    ff.b1.set_requires_grad(true);
    ff.W2 = Tensor::randn(rng, {budget.n, budget.m_ff}, sf, true);
    ff.b2 = Tensor::zeros({budget.n});
    ff.b2.set_requires_grad(true);
    return ff;
  };

  // Layer 1: attention is exactly the identity (W_o = 0).
  Block b1;
  {
    AttentionHeadParams hp;
    hp.W_Q = frozen_zeros({budget.m_h, budget.n});
    hp.W_K = frozen_zeros({budget.m_h, budget.n});
    hp.W_V = frozen_zeros({budget.m_v, budget.n});
    hp.W_o = frozen_zeros({budget.n, budget.m_v});
    b1.heads.push_back(std::move(hp));
  }
  b1.ff = trainable_ff();
  m.blocks.push_back(std::move(b1));

  // Layer 2: uniform attention (W_Q = 0); values read the first half, and
  // W_o = tau * [0; I] writes tau times their uniform average into the
  // second half, i.e. the plain pooled sum over timesteps.
  Block b2;
  {
    AttentionHeadParams hp;
    hp.W_Q = frozen_zeros({budget.m_h, budget.n});
    hp.W_K = frozen_zeros({budget.m_h, budget.n});
    Tensor wv = Tensor::zeros({budget.m_v, budget.n});
    for (std::size_t i = 0; i < half; ++i) wv.data()[i * budget.n + i] = 1.0;
    wv.set_requires_grad(false);
    hp.W_V = wv;
    Tensor wo = Tensor::zeros({budget.n, budget.m_v});
    for (std::size_t i = 0; i < half; ++i)
      wo.data()[(half + i) * budget.m_v + i] = static_cast<double>(budget.tau);
    wo.set_requires_grad(false);
    hp.W_o = wo;
    b2.heads.push_back(std::move(hp));
  }
  b2.ff = trainable_ff();
  m.blocks.push_back(std::move(b2));

  // Readout: fixed sum over the second-half coordinates.
  Tensor ro = Tensor::zeros({budget.d_out, budget.n});
  for (std::size_t r = 0; r < budget.d_out; ++r)
    for (std::size_t i = 0; i < half; ++i) ro.data()[r * budget.n + half + i] = 1.0;
  ro.set_requires_grad(false);
  m.readout_W = ro;
  m.readout_b = frozen_zeros({budget.d_out});

  validate_model(m);
  return m;
}

namespace {

void write_tensor(std::ostream& os, const Tensor& t) {
  io::write_u32(os, t.requires_grad() ? 1 : 0);
  io::write_u32(os, static_cast<std::uint32_t>(t.ndim()));
  for (std::size_t i = 0; i < t.ndim(); ++i) io::write_u64(os, t.dim(i));
  io::write_f64s(os, t.data(), t.numel());
}

Tensor read_tensor(std::istream& is, const char* what) {
  const bool rg = io::read_u32(is, what) != 0;
  const std::uint32_t nd = io::read_u32(is, what);
  if (nd == 0 || nd > 2)
    throw FormatError(FormatError::Kind::truncated, std::string("bad tensor rank in ") + what);
  Shape shape(nd);
  std::size_t numel = 1;
  for (auto& dim : shape) {
    dim = io::read_u64(is, what);
    if (dim == 0 || dim > (1u << 24))
      throw FormatError(FormatError::Kind::truncated, std::string("implausible tensor dim in ") + what);
    numel *= dim;
  }
  std::vector<double> data(numel);
  io::read_f64s(is, data.data(), numel, what);
  Tensor t(shape, std::move(data));
  t.set_requires_grad(rg);
  return t;
}

}  // namespace

void save_model(std::ostream& os, const TransformerModel& model) {
  validate_model(model);
  io::write_envelope_header(os, "MODL");
  const ModelBudget& b = model.budget;
  for (std::size_t v : {b.n, b.h, b.m_h, b.m_v, b.m_ff, b.l, b.tau, b.d, b.d_out})
    io::write_u64(os, v);
  io::write_u32(os, model.act == Activation::kSigmoid ? 0 : 1);
  io::write_u32(os, model.use_positional ? 1 : 0);
  io::write_u32(os, model.pe.trainable ? 1 : 0);
  io::write_u32(os, model.ff_residual ? 1 : 0);
  io::write_f64(os, model.score_scale);
  write_tensor(os, model.pe.A);
  write_tensor(os, model.pe.e);
  for (const Block& blk : model.blocks) {
    for (const AttentionHeadParams& hp : blk.heads) {
      write_tensor(os, hp.W_Q);
      write_tensor(os, hp.W_K);
      write_tensor(os, hp.W_V);
      write_tensor(os, hp.W_o);
    }
    write_tensor(os, blk.ff.W1);
    write_tensor(os, blk.ff.b1);
    write_tensor(os, blk.ff.W2);
    write_tensor(os, blk.ff.b2);
  }
  write_tensor(os, model.readout_W);
  write_tensor(os, model.readout_b);
}

TransformerModel load_model(std::istream& is) {
  io::read_envelope_header(is, "MODL");
  TransformerModel m;
  ModelBudget& b = m.budget;
  for (std::size_t* v : {&b.n, &b.h, &b.m_h, &b.m_v, &b.m_ff, &b.l, &b.tau, &b.d, &b.d_out})
    *v = io::read_u64(is, "budget");
  m.act = io::read_u32(is, "activation") == 0 ? Activation::kSigmoid : Activation::kRelu;
  m.use_positional = io::read_u32(is, "positional flag") != 0;
  m.pe.trainable = io::read_u32(is, "pe flag") != 0;
  m.ff_residual = io::read_u32(is, "ff flag") != 0;
  m.score_scale = io::read_f64(is, "score scale");
  m.pe.A = read_tensor(is, "embed matrix");
  m.pe.e = read_tensor(is, "positional offsets");
  for (std::size_t li = 0; li < b.l; ++li) {
    Block blk;
    for (std::size_t hi = 0; hi < b.h; ++hi) {
      AttentionHeadParams hp;
      hp.W_Q = read_tensor(is, "W_Q");
      hp.W_K = read_tensor(is, "W_K");
      hp.W_V = read_tensor(is, "W_V");
      hp.W_o = read_tensor(is, "W_o");
      blk.heads.push_back(std::move(hp));
    }
    blk.ff.W1 = read_tensor(is, "FF W1");
    blk.ff.b1 = read_tensor(is, "FF b1");
    blk.ff.W2 = read_tensor(is, "FF W2");
    blk.ff.b2 = read_tensor(is, "FF b2");
    m.blocks.push_back(std::move(blk));
  }
  m.readout_W = read_tensor(is, "readout");
  m.readout_b = read_tensor(is, "readout bias");
  validate_model(m);
  return m;
}

void save_model_file(const std::string& path, const TransformerModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  save_model(os, model);
}

TransformerModel load_model_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return load_model(is);
}

}  // namespace atrl
