#include "atrl/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace atrl {

std::vector<Tensor> RNNParams::parameters() const { return {W_in, W_rec, b_h, W_out, b_out}; }

RNNParams make_rnn(std::size_t width, std::size_t d, std::size_t d_out, Rng& rng,
                   RnnActivation act) {
  if (width == 0 || d == 0 || d_out == 0)
    throw std::invalid_argument("rnn: width, d, d_out must be positive");
  RNNParams r;
  r.act = act;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sw = 1.0 / std::sqrt(static_cast<double>(width));
  r.W_in = Tensor::randn(rng, {width, d}, sd, true);
  r.W_rec = Tensor::randn(rng, {width, width}, sw, true);
  r.b_h = Tensor::zeros({width});
  r.b_h.set_requires_grad(true);
  r.W_out = Tensor::randn(rng, {d_out, width}, sw, true);
  r.b_out = Tensor::zeros({d_out});
  r.b_out.set_requires_grad(true);
  return r;
}

Tensor rnn_forward(const RNNParams& rnn, const Tensor& x) {
  const std::size_t width = rnn.width();
  if (rnn.W_in.ndim() != 2 || rnn.W_rec.ndim() != 2 || rnn.W_rec.dim(1) != width ||
      rnn.W_in.dim(0) != width || rnn.W_out.dim(1) != width)
    throw std::invalid_argument("rnn: inconsistent parameter shapes");
  if (x.ndim() != 2 || x.dim(0) != rnn.W_in.dim(1))
    throw std::invalid_argument("rnn: input rows must match W_in columns");
  const std::size_t d = x.dim(0), tau = x.dim(1);

  std::vector<Tensor> outs;
  outs.reserve(tau);
  Tensor h;  // undefined until the first step
  for (std::size_t t = 0; t < tau; ++t) {
    std::vector<double> col(d);
    for (std::size_t i = 0; i < d; ++i) col[i] = x.at(i, t);
    Tensor xt({d, 1}, std::move(col));
    Tensor z = matmul(rnn.W_in, xt);
    if (t > 0) z = add(z, matmul(rnn.W_rec, h));
    z = add_bias_col(z, rnn.b_h);
    h = (rnn.act == RnnActivation::kLinear) ? z : sigmoid(z);
    outs.push_back(add_bias_col(matmul(rnn.W_out, h), rnn.b_out));
  }
  return hcat(outs);
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train: bad lr");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("train: betas must lie in [0,1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("train: adam_eps must be positive");
  if (batch == 0) throw std::invalid_argument("train: batch must be positive");
  if (plateau_stop && plateau_window == 0)
    throw std::invalid_argument("train: plateau window must be positive");
}

Tensor to_tensor(const Mat& m) { return Tensor({m.rows, m.cols}, m.a); }

double eval_mse(const ForwardFn& fwd, const Dataset& ds) {
  if (ds.count() == 0) return 0.0;
  double se = 0.0;
  std::size_t n = 0;
  for (const SequenceSample& smp : ds.samples) {
    Tensor pred = fwd(to_tensor(smp.x));
    if (pred.numel() != smp.y.a.size())
      throw std::invalid_argument("eval: prediction shape does not match targets");
    for (std::size_t i = 0; i < smp.y.a.size(); ++i) {
      const double diff = pred.data()[i] - smp.y.a[i];
      se += diff * diff;
    }
    n += smp.y.a.size();
  }
  return se / static_cast<double>(n);
}

namespace {

struct AdamState {
  double lr, beta1, beta2, eps;
  std::vector<std::vector<double>> m, v;
  std::size_t t = 0;

  AdamState(const std::vector<Tensor>& params, const TrainConfig& cfg)
      : lr(cfg.lr), beta1(cfg.beta1), beta2(cfg.beta2), eps(cfg.adam_eps) {
    for (const Tensor& p : params) {
      m.emplace_back(p.numel(), 0.0);
      v.emplace_back(p.numel(), 0.0);
    }
  }

  void step(std::vector<Tensor>& params) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = params[i];
      const double* g = p.has_grad() ? p.grad().data() : nullptr;
      double* w = p.data();
      for (std::size_t k = 0; k < p.numel(); ++k) {
        const double gk = g ? g[k] : 0.0;
        m[i][k] = beta1 * m[i][k] + (1.0 - beta1) * gk;
        v[i][k] = beta2 * v[i][k] + (1.0 - beta2) * gk * gk;
        w[k] -= lr * (m[i][k] / c1) / (std::sqrt(v[i][k] / c2) + eps);
      }
      p.zero_grad();
    }
  }
};

std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> s;
  s.reserve(params.size());
  for (const Tensor& p : params) s.emplace_back(p.data(), p.data() + p.numel());
  return s;
}

void restore(std::vector<Tensor>& params, const std::vector<std::vector<double>>& s) {
  for (std::size_t i = 0; i < params.size(); ++i)
    std::copy(s[i].begin(), s[i].end(), params[i].data());
}

}  // namespace

TrainResult train(const ForwardFn& fwd, const std::vector<Tensor>& params_in,
                  const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  train_set.validate();
  test_set.validate();
  if (train_set.count() == 0) throw std::invalid_argument("train: empty training set");
  if (params_in.empty()) throw std::invalid_argument("train: no trainable parameters");
  std::vector<Tensor> params = params_in;
  for (Tensor& p : params) {
    if (!p.requires_grad()) throw std::invalid_argument("train: parameter without gradient");
    p.zero_grad();
  }

  const std::size_t n = train_set.count();
  std::vector<Tensor> xs, ys;
  xs.reserve(n);
  ys.reserve(n);
  for (const SequenceSample& smp : train_set.samples) {
    xs.push_back(to_tensor(smp.x));
    ys.push_back(to_tensor(smp.y));
  }

  AdamState opt(params, cfg);
  Rng shuffle_rng(Rng::mix(cfg.seed, 0x500FF1eULL));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult res;
  auto last_good = snapshot(params);
  std::size_t last_good_epoch = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double epoch_se = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch) {
      const std::size_t stop = std::min(start + cfg.batch, n);
      auto diverged = [&]() -> TrainingDiverged {
        restore(params, last_good);
        return TrainingDiverged(last_good_epoch,
                                "training diverged in epoch " + std::to_string(epoch) +
                                    "; parameters rolled back to epoch " +
                                    std::to_string(last_good_epoch));
      };
      double value = 0.0;
      try {
        Tape tape;
        Tensor total;
        for (std::size_t k = start; k < stop; ++k) {
          Tensor l = mse(fwd(xs[order[k]]), ys[order[k]]);
          total = (k == start) ? l : add(total, l);
        }
        total = scale(total, 1.0 / static_cast<double>(stop - start));
        value = total.value();
        if (!std::isfinite(value)) throw diverged();
        tape.backward(total);
      } catch (const NonFiniteError&) {
        // an op overflowed mid-forward before a loss value existed
        throw diverged();
      }
      opt.step(params);
      epoch_se += value * static_cast<double>(stop - start);
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_mse = epoch_se / static_cast<double>(n);
    st.test_mse = eval_mse(fwd, test_set);
    res.history.push_back(st);
    last_good = snapshot(params);
    last_good_epoch = epoch;
    res.epochs_run = epoch;

    if (cfg.plateau_stop && epoch > cfg.plateau_window) {
      const double then = res.history[epoch - 1 - cfg.plateau_window].train_mse;
      const double now = st.train_mse;
      if (then - now < cfg.plateau_tol * std::max(then, 1e-300)) {
        res.plateau_stopped = true;
        break;
      }
    }
  }

  res.final_train_mse = eval_mse(fwd, train_set);
  res.final_test_mse = eval_mse(fwd, test_set);
  return res;
}

TrainResult train(TransformerModel& model, const Dataset& train_set,
                  const Dataset& test_set, const TrainConfig& cfg) {
  if (model.budget.d != train_set.d || model.budget.tau != train_set.tau ||
      model.budget.d_out != train_set.d_out)
    throw std::invalid_argument("train: model budget does not match dataset header");
  ForwardFn fwd = [&model](const Tensor& x) { return model_forward(model, x); };
  return train(fwd, model.trainable_parameters(), train_set, test_set, cfg);
}

TrainResult train(RNNParams& rnn, const Dataset& train_set, const Dataset& test_set,
                  const TrainConfig& cfg) {
  if (rnn.W_in.dim(1) != train_set.d || rnn.W_out.dim(0) != train_set.d_out)
    throw std::invalid_argument("train: recurrent shapes do not match dataset header");
  ForwardFn fwd = [&rnn](const Tensor& x) { return rnn_forward(rnn, x); };
  return train(fwd, rnn.parameters(), train_set, test_set, cfg);
}

}  // namespace atrl
