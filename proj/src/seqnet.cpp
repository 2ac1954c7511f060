#include "crashwatch/seqnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <json.hpp>

#include "crashwatch/evaluation.hpp"
#include "crashwatch/kernels.hpp"

namespace crashwatch {

namespace {

constexpr double kClampLo = 1e-7;
constexpr double kClampHi = 1.0 - 1e-7;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double act(StateAct k, double a) { return k == StateAct::Relu ? (a > 0.0 ? a : 0.0) : std::tanh(a); }

// ReLU uses the pre-activation (subgradient 0 at 0), tanh the post-activation.
inline double act_deriv(StateAct k, double pre, double post) {
  return k == StateAct::Relu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0 - post * post;
}

inline int gate_count(Cell c) { return c == Cell::Simple ? 1 : c == Cell::Lstm ? 4 : 3; }

// Gate order: LSTM i,f,g,o; GRU z,r,n.
enum : int { kI = 0, kF = 1, kG = 2, kO = 3 };
enum : int { kZ = 0, kR = 1, kN = 2 };

struct Views {
  std::vector<Matrix> wx;  // [layer*G + gate], F_in x H
  std::vector<Matrix> wh;  // H x H
  std::vector<std::vector<double>> b;
  std::vector<double> head_w;
  double head_b = 0.0;
};

Views make_views(const ParamLayout& lo, const std::vector<double>& p) {
  Views v;
  const auto h = lo.hidden;
  for (int l = 0; l < lo.layers; ++l) {
    const auto fin = lo.in_dim(l);
    for (int g = 0; g < lo.gates; ++g) {
      Matrix wx(fin, h);
      std::copy_n(p.begin() + lo.wx(l, g), fin * h, wx.a.begin());
      v.wx.push_back(std::move(wx));
      Matrix wh(h, h);
      std::copy_n(p.begin() + lo.wh(l, g), h * h, wh.a.begin());
      v.wh.push_back(std::move(wh));
      v.b.emplace_back(p.begin() + lo.b(l, g), p.begin() + lo.b(l, g) + h);
    }
  }
  v.head_w.assign(p.begin() + lo.head_w(), p.begin() + lo.head_w() + h);
  v.head_b = p[static_cast<std::size_t>(lo.head_b())];
  return v;
}

struct Cache {
  std::vector<Matrix> x;                    // [t] inputs to layer 0
  std::vector<std::vector<Matrix>> h;       // [layer][t]
  std::vector<std::vector<Matrix>> gate;    // [layer][t*G + g] post-activation
  std::vector<std::vector<Matrix>> c;       // [layer][t] LSTM cell state
  std::vector<std::vector<Matrix>> hc;      // [layer][t] state activation of c
  std::vector<std::vector<Matrix>> candp;   // [layer][t] candidate pre-activation
  std::vector<double> s;
};

void check_finite(const Matrix& m, const char* what) {
  for (double v : m.a) {
    if (!std::isfinite(v)) fail(Err::NonFiniteActivation, std::string("non-finite ") + what);
  }
}

Matrix affine(const Matrix& xin, const Matrix& hprev, const Matrix& wx, const Matrix& wh,
              const std::vector<double>& b) {
  Matrix a = matmul(xin, Trans::N, wx, Trans::N);
  const Matrix rec = matmul(hprev, Trans::N, wh, Trans::N);
  for (std::int64_t i = 0; i < a.rows; ++i) {
    for (std::int64_t j = 0; j < a.cols; ++j) a(i, j) += rec(i, j) + b[static_cast<std::size_t>(j)];
  }
  return a;
}

// Forward over a batch; fills `cc` when given (training-sized batches only).
std::vector<double> run_forward(const RnnHyper& hy, const ParamLayout& lo, const std::vector<double>& params,
                                const Batch& bt, Cache* cc) {
  if (bt.f != lo.input_dim) {
    fail(Err::ShapeMismatch, "network expects " + std::to_string(lo.input_dim) + " features per timestep, got " +
                                 std::to_string(bt.f));
  }
  if (bt.n == 0) return {};
  if (bt.t < 1) fail(Err::InvalidArgument, "sequences need at least one timestep");
  const auto B = bt.n;
  const auto T = bt.t;
  const auto F = bt.f;
  const auto H = lo.hidden;
  const int L = lo.layers;
  const int G = lo.gates;
  const StateAct sa = hy.state_act;

  const Views vw = make_views(lo, params);

  std::vector<Matrix> below(static_cast<std::size_t>(T));
  for (std::int64_t t = 0; t < T; ++t) {
    Matrix xt(B, F);
    for (std::int64_t i = 0; i < B; ++i) {
      std::copy_n(bt.x.begin() + (i * T + t) * F, F, xt.row(i));
    }
    check_finite(xt, "input");
    below[static_cast<std::size_t>(t)] = std::move(xt);
  }
  if (cc) {
    cc->x = below;
    cc->h.assign(static_cast<std::size_t>(L), {});
    cc->gate.assign(static_cast<std::size_t>(L), {});
    cc->c.assign(static_cast<std::size_t>(L), {});
    cc->hc.assign(static_cast<std::size_t>(L), {});
    cc->candp.assign(static_cast<std::size_t>(L), {});
  }

  for (int l = 0; l < L; ++l) {
    Matrix hprev(B, H);
    Matrix cprev(B, H);
    std::vector<Matrix> hs(static_cast<std::size_t>(T));
    for (std::int64_t t = 0; t < T; ++t) {
      const Matrix& xin = below[static_cast<std::size_t>(t)];
      const std::size_t vg = static_cast<std::size_t>(l * G);
      Matrix h(B, H);
      if (hy.cell == Cell::Simple) {
        Matrix a = affine(xin, hprev, vw.wx[vg], vw.wh[vg], vw.b[vg]);
        for (std::size_t k = 0; k < h.a.size(); ++k) h.a[k] = act(sa, a.a[k]);
        check_finite(h, "hidden state");
        if (cc) {
          cc->candp[static_cast<std::size_t>(l)].push_back(std::move(a));
        }
      } else if (hy.cell == Cell::Lstm) {
        Matrix ai = affine(xin, hprev, vw.wx[vg + kI], vw.wh[vg + kI], vw.b[vg + kI]);
        Matrix af = affine(xin, hprev, vw.wx[vg + kF], vw.wh[vg + kF], vw.b[vg + kF]);
        Matrix ag = affine(xin, hprev, vw.wx[vg + kG], vw.wh[vg + kG], vw.b[vg + kG]);
        Matrix ao = affine(xin, hprev, vw.wx[vg + kO], vw.wh[vg + kO], vw.b[vg + kO]);
        Matrix gi(B, H), gf(B, H), gg(B, H), go(B, H), c(B, H), hcm(B, H);
        for (std::size_t k = 0; k < c.a.size(); ++k) {
          gi.a[k] = sigmoid(ai.a[k]);
          gf.a[k] = sigmoid(af.a[k]);
          gg.a[k] = act(sa, ag.a[k]);
          go.a[k] = sigmoid(ao.a[k]);
          c.a[k] = gf.a[k] * cprev.a[k] + gi.a[k] * gg.a[k];
          hcm.a[k] = act(sa, c.a[k]);
          h.a[k] = go.a[k] * hcm.a[k];
        }
        check_finite(c, "cell state");
        check_finite(h, "hidden state");
        cprev = c;
        if (cc) {
          auto& gs = cc->gate[static_cast<std::size_t>(l)];
          gs.push_back(std::move(gi));
          gs.push_back(std::move(gf));
          gs.push_back(std::move(gg));
          gs.push_back(std::move(go));
          cc->candp[static_cast<std::size_t>(l)].push_back(std::move(ag));
          cc->c[static_cast<std::size_t>(l)].push_back(std::move(c));
          cc->hc[static_cast<std::size_t>(l)].push_back(std::move(hcm));
        }
      } else {
        Matrix az = affine(xin, hprev, vw.wx[vg + kZ], vw.wh[vg + kZ], vw.b[vg + kZ]);
        Matrix ar = affine(xin, hprev, vw.wx[vg + kR], vw.wh[vg + kR], vw.b[vg + kR]);
        Matrix gz(B, H), gr(B, H);
        for (std::size_t k = 0; k < gz.a.size(); ++k) {
          gz.a[k] = sigmoid(az.a[k]);
          gr.a[k] = sigmoid(ar.a[k]);
        }
        Matrix rh(B, H);
        for (std::size_t k = 0; k < rh.a.size(); ++k) rh.a[k] = gr.a[k] * hprev.a[k];
        Matrix an = affine(xin, rh, vw.wx[vg + kN], vw.wh[vg + kN], vw.b[vg + kN]);
        Matrix gn(B, H);
        for (std::size_t k = 0; k < gn.a.size(); ++k) {
          gn.a[k] = act(sa, an.a[k]);
          h.a[k] = (1.0 - gz.a[k]) * hprev.a[k] + gz.a[k] * gn.a[k];
        }
        check_finite(h, "hidden state");
        if (cc) {
          auto& gs = cc->gate[static_cast<std::size_t>(l)];
          gs.push_back(std::move(gz));
          gs.push_back(std::move(gr));
          gs.push_back(std::move(gn));
          cc->candp[static_cast<std::size_t>(l)].push_back(std::move(an));
        }
      }
      hprev = h;
      hs[static_cast<std::size_t>(t)] = std::move(h);
    }
    if (cc) cc->h[static_cast<std::size_t>(l)] = hs;
    below = std::move(hs);
  }

  std::vector<double> p(static_cast<std::size_t>(B));
  if (cc) cc->s.resize(static_cast<std::size_t>(B));
  const Matrix& last = below[static_cast<std::size_t>(T - 1)];
  for (std::int64_t i = 0; i < B; ++i) {
    double s = vw.head_b;
    const double* hr = last.row(i);
    for (std::int64_t j = 0; j < H; ++j) s += hr[j] * vw.head_w[static_cast<std::size_t>(j)];
    if (!std::isfinite(s)) fail(Err::NonFiniteActivation, "non-finite output logit");
    if (cc) cc->s[static_cast<std::size_t>(i)] = s;
    p[static_cast<std::size_t>(i)] = sigmoid(s);
  }
  return p;
}

double regularization(const RnnHyper& hy, const std::vector<double>& params) {
  double l1 = 0.0;
  double l2 = 0.0;
  for (double w : params) {
    l1 += std::abs(w);
    l2 += w * w;
  }
  return hy.l1 * l1 + hy.l2 * l2;
}

}  // namespace

std::string cell_name(Cell c) {
  switch (c) {
    case Cell::Simple: return "rnn";
    case Cell::Lstm: return "lstm";
    case Cell::Gru: return "gru";
  }
  return "rnn";
}

Cell cell_from_name(const std::string& name) {
  if (name == "rnn" || name == "simple") return Cell::Simple;
  if (name == "lstm") return Cell::Lstm;
  if (name == "gru") return Cell::Gru;
  fail(Err::InvalidArgument, "unknown cell type: " + name);
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state, double lr) {
  if (params.size() != grads.size()) fail(Err::ShapeMismatch, "parameter and gradient sizes differ");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) fail(Err::ShapeMismatch, "Adam state does not match parameter count");
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * grads[k];
    state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * grads[k] * grads[k];
    params[k] -= lr * (state.m[k] / c1) / (std::sqrt(state.v[k] / c2) + state.eps);
  }
}

Batch batch_from(const WindowTensor& w) {
  Batch b;
  b.n = w.n;
  b.t = w.t;
  b.f = w.f;
  b.x = w.values;
  b.y = w.labels;
  return b;
}

Batch batch_from(const WindowTensor& w, const std::vector<std::int64_t>& idx) {
  Batch b;
  b.n = static_cast<std::int64_t>(idx.size());
  b.t = w.t;
  b.f = w.f;
  b.x.reserve(static_cast<std::size_t>(b.n * b.t * b.f));
  b.y.reserve(idx.size());
  for (std::int64_t i : idx) {
    if (i < 0 || i >= w.n) fail(Err::InvalidArgument, "sample index out of range: " + std::to_string(i));
    const auto base = static_cast<std::size_t>(i * w.t * w.f);
    b.x.insert(b.x.end(), w.values.begin() + base, w.values.begin() + base + static_cast<std::size_t>(w.t * w.f));
    b.y.push_back(w.labels[static_cast<std::size_t>(i)]);
  }
  return b;
}

std::int64_t ParamLayout::layer_off(int layer) const {
  std::int64_t off = 0;
  for (int l = 0; l < layer; ++l) off += gates * gate_size(l);
  return off;
}

SeqNet::SeqNet(const RnnHyper& hyper, std::int64_t input_dim) : hyper_(hyper) {
  if (hyper.neurons < 1 || hyper.layers < 1 || input_dim < 1) {
    fail(Err::InvalidArgument, "network needs positive width, depth, and input size");
  }
  if (hyper.batch_size < 1) fail(Err::InvalidArgument, "batch_size must be >= 1");
  layout_.gates = gate_count(hyper.cell);
  layout_.layers = hyper.layers;
  layout_.input_dim = input_dim;
  layout_.hidden = hyper.neurons;
  params_.assign(static_cast<std::size_t>(layout_.total()), 0.0);

  // Glorot-uniform kernels, zero biases. Draw order is fixed: per layer, per
  // gate, W_x row-major then W_h row-major; dense head last.
  Rng rng(hyper.seed);
  const auto h = layout_.hidden;
  for (int l = 0; l < layout_.layers; ++l) {
    const auto fin = layout_.in_dim(l);
    const double lim_x = std::sqrt(6.0 / static_cast<double>(fin + h));
    const double lim_h = std::sqrt(6.0 / static_cast<double>(h + h));
    for (int g = 0; g < layout_.gates; ++g) {
      for (std::int64_t k = 0; k < fin * h; ++k) {
        params_[static_cast<std::size_t>(layout_.wx(l, g) + k)] = rng.uniform(-lim_x, lim_x);
      }
      for (std::int64_t k = 0; k < h * h; ++k) {
        params_[static_cast<std::size_t>(layout_.wh(l, g) + k)] = rng.uniform(-lim_h, lim_h);
      }
    }
  }
  const double lim_head = std::sqrt(6.0 / static_cast<double>(h + 1));
  for (std::int64_t k = 0; k < h; ++k) {
    params_[static_cast<std::size_t>(layout_.head_w() + k)] = rng.uniform(-lim_head, lim_head);
  }
}

double SeqNet::forward(const Matrix& x) const {
  Batch b;
  b.n = 1;
  b.t = x.rows;
  b.f = x.cols;
  b.x = x.a;
  b.y = {0};
  return run_forward(hyper_, layout_, params_, b, nullptr)[0];
}

std::vector<double> SeqNet::forward_batch(const Batch& b) const {
  return run_forward(hyper_, layout_, params_, b, nullptr);
}

double SeqNet::loss(const Batch& b) const {
  if (b.n == 0) fail(Err::EmptySplit, "loss needs a non-empty batch");
  const auto p = run_forward(hyper_, layout_, params_, b, nullptr);
  double sum = 0.0;
  for (std::int64_t i = 0; i < b.n; ++i) {
    const double pc = std::clamp(p[static_cast<std::size_t>(i)], kClampLo, kClampHi);
    sum += b.y[static_cast<std::size_t>(i)] ? -std::log(pc) : -std::log(1.0 - pc);
  }
  return sum / static_cast<double>(b.n) + regularization(hyper_, params_);
}

std::vector<double> SeqNet::backward(const Batch& bt) const {
  if (bt.n == 0) fail(Err::EmptySplit, "backward needs a non-empty batch");
  Cache cc;
  const auto p = run_forward(hyper_, layout_, params_, bt, &cc);

  const auto B = bt.n;
  const auto T = bt.t;
  const auto H = layout_.hidden;
  const int L = layout_.layers;
  const int G = layout_.gates;
  const StateAct sa = hyper_.state_act;
  const Views vw = make_views(layout_, params_);

  std::vector<double> grad(params_.size(), 0.0);
  const double invb = 1.0 / static_cast<double>(B);

  // Clamped probabilities sit on a flat stretch of the loss.
  std::vector<double> ds(static_cast<std::size_t>(B), 0.0);
  for (std::int64_t i = 0; i < B; ++i) {
    const double pi = p[static_cast<std::size_t>(i)];
    if (pi >= kClampLo && pi <= kClampHi) {
      ds[static_cast<std::size_t>(i)] = (pi - static_cast<double>(bt.y[static_cast<std::size_t>(i)])) * invb;
    }
  }

  const Matrix& h_last = cc.h[static_cast<std::size_t>(L - 1)][static_cast<std::size_t>(T - 1)];
  for (std::int64_t i = 0; i < B; ++i) {
    const double d = ds[static_cast<std::size_t>(i)];
    grad[static_cast<std::size_t>(layout_.head_b())] += d;
    for (std::int64_t j = 0; j < H; ++j) {
      grad[static_cast<std::size_t>(layout_.head_w() + j)] += d * h_last(i, j);
    }
  }

  auto add_at = [&](std::int64_t off, const Matrix& m) {
    for (std::size_t k = 0; k < m.a.size(); ++k) grad[static_cast<std::size_t>(off) + k] += m.a[k];
  };
  auto add_colsum = [&](std::int64_t off, const Matrix& m) {
    for (std::int64_t i = 0; i < m.rows; ++i) {
      for (std::int64_t j = 0; j < m.cols; ++j) grad[static_cast<std::size_t>(off + j)] += m(i, j);
    }
  };

  // Gradient flowing into each timestep of the current layer from above.
  std::vector<Matrix> dseq(static_cast<std::size_t>(T), Matrix(B, H));
  for (std::int64_t i = 0; i < B; ++i) {
    for (std::int64_t j = 0; j < H; ++j) {
      dseq[static_cast<std::size_t>(T - 1)](i, j) = ds[static_cast<std::size_t>(i)] * vw.head_w[static_cast<std::size_t>(j)];
    }
  }

  const Matrix zero_bh(B, H);
  for (int l = L - 1; l >= 0; --l) {
    const auto fin = layout_.in_dim(l);
    const std::size_t vg = static_cast<std::size_t>(l * G);
    std::vector<Matrix> dbelow;
    if (l > 0) dbelow.assign(static_cast<std::size_t>(T), Matrix(B, fin));
    Matrix dh_carry(B, H);
    Matrix dc_carry(B, H);
    for (std::int64_t t = T - 1; t >= 0; --t) {
      Matrix dh = dseq[static_cast<std::size_t>(t)];
      for (std::size_t k = 0; k < dh.a.size(); ++k) dh.a[k] += dh_carry.a[k];
      const Matrix& xin = l == 0 ? cc.x[static_cast<std::size_t>(t)]
                                 : cc.h[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(t)];
      const Matrix& hprev =
          t == 0 ? zero_bh : cc.h[static_cast<std::size_t>(l)][static_cast<std::size_t>(t - 1)];

      if (hyper_.cell == Cell::Simple) {
        const Matrix& pre = cc.candp[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
        const Matrix& h = cc.h[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
        Matrix da(B, H);
        for (std::size_t k = 0; k < da.a.size(); ++k) da.a[k] = dh.a[k] * act_deriv(sa, pre.a[k], h.a[k]);
        add_at(layout_.wx(l, 0), matmul(xin, Trans::T, da, Trans::N));
        add_at(layout_.wh(l, 0), matmul(hprev, Trans::T, da, Trans::N));
        add_colsum(layout_.b(l, 0), da);
        dh_carry = matmul(da, Trans::N, vw.wh[vg], Trans::T);
        if (l > 0) dbelow[static_cast<std::size_t>(t)] = matmul(da, Trans::N, vw.wx[vg], Trans::T);
      } else if (hyper_.cell == Cell::Lstm) {
        const auto& gs = cc.gate[static_cast<std::size_t>(l)];
        const Matrix& gi = gs[static_cast<std::size_t>(t * 4 + kI)];
        const Matrix& gf = gs[static_cast<std::size_t>(t * 4 + kF)];
        const Matrix& gg = gs[static_cast<std::size_t>(t * 4 + kG)];
        const Matrix& go = gs[static_cast<std::size_t>(t * 4 + kO)];
        const Matrix& cpre = cc.candp[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
        const Matrix& cst = cc.c[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
        const Matrix& hcm = cc.hc[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
        const Matrix& cprev =
            t == 0 ? zero_bh : cc.c[static_cast<std::size_t>(l)][static_cast<std::size_t>(t - 1)];
        Matrix dai(B, H), daf(B, H), dag(B, H), dao(B, H), dc(B, H);
        for (std::size_t k = 0; k < dc.a.size(); ++k) {
          const double doo = dh.a[k] * hcm.a[k];
          dao.a[k] = doo * go.a[k] * (1.0 - go.a[k]);
          dc.a[k] = dh.a[k] * go.a[k] * act_deriv(sa, cst.a[k], hcm.a[k]) + dc_carry.a[k];
          const double df = dc.a[k] * cprev.a[k];
          daf.a[k] = df * gf.a[k] * (1.0 - gf.a[k]);
          const double di = dc.a[k] * gg.a[k];
          dai.a[k] = di * gi.a[k] * (1.0 - gi.a[k]);
          const double dg = dc.a[k] * gi.a[k];
          dag.a[k] = dg * act_deriv(sa, cpre.a[k], gg.a[k]);
          dc_carry.a[k] = dc.a[k] * gf.a[k];
        }
        const Matrix* das[4] = {&dai, &daf, &dag, &dao};
        dh_carry = Matrix(B, H);
        Matrix dx(B, fin);
        for (int g = 0; g < 4; ++g) {
          add_at(layout_.wx(l, g), matmul(xin, Trans::T, *das[g], Trans::N));
          add_at(layout_.wh(l, g), matmul(hprev, Trans::T, *das[g], Trans::N));
          add_colsum(layout_.b(l, g), *das[g]);
          const Matrix dhp = matmul(*das[g], Trans::N, vw.wh[vg + static_cast<std::size_t>(g)], Trans::T);
          for (std::size_t k = 0; k < dh_carry.a.size(); ++k) dh_carry.a[k] += dhp.a[k];
          if (l > 0) {
            const Matrix dxg = matmul(*das[g], Trans::N, vw.wx[vg + static_cast<std::size_t>(g)], Trans::T);
            for (std::size_t k = 0; k < dx.a.size(); ++k) dx.a[k] += dxg.a[k];
          }
        }
        if (l > 0) dbelow[static_cast<std::size_t>(t)] = std::move(dx);
      } else {
        const auto& gs = cc.gate[static_cast<std::size_t>(l)];
        const Matrix& gz = gs[static_cast<std::size_t>(t * 3 + kZ)];
        const Matrix& gr = gs[static_cast<std::size_t>(t * 3 + kR)];
        const Matrix& gn = gs[static_cast<std::size_t>(t * 3 + kN)];
        const Matrix& npre = cc.candp[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
        Matrix daz(B, H), dan(B, H);
        for (std::size_t k = 0; k < daz.a.size(); ++k) {
          const double dz = dh.a[k] * (gn.a[k] - hprev.a[k]);
          daz.a[k] = dz * gz.a[k] * (1.0 - gz.a[k]);
          const double dn = dh.a[k] * gz.a[k];
          dan.a[k] = dn * act_deriv(sa, npre.a[k], gn.a[k]);
        }
        // Candidate saw r*h_prev through its recurrent kernel.
        const Matrix dm = matmul(dan, Trans::N, vw.wh[vg + kN], Trans::T);
        Matrix dar(B, H);
        Matrix rh(B, H);
        for (std::size_t k = 0; k < dar.a.size(); ++k) {
          const double dr = dm.a[k] * hprev.a[k];
          dar.a[k] = dr * gr.a[k] * (1.0 - gr.a[k]);
          rh.a[k] = gr.a[k] * hprev.a[k];
        }
        add_at(layout_.wx(l, kZ), matmul(xin, Trans::T, daz, Trans::N));
        add_at(layout_.wh(l, kZ), matmul(hprev, Trans::T, daz, Trans::N));
        add_colsum(layout_.b(l, kZ), daz);
        add_at(layout_.wx(l, kR), matmul(xin, Trans::T, dar, Trans::N));
        add_at(layout_.wh(l, kR), matmul(hprev, Trans::T, dar, Trans::N));
        add_colsum(layout_.b(l, kR), dar);
        add_at(layout_.wx(l, kN), matmul(xin, Trans::T, dan, Trans::N));
        add_at(layout_.wh(l, kN), matmul(rh, Trans::T, dan, Trans::N));
        add_colsum(layout_.b(l, kN), dan);

        const Matrix dhz = matmul(daz, Trans::N, vw.wh[vg + kZ], Trans::T);
        const Matrix dhr = matmul(dar, Trans::N, vw.wh[vg + kR], Trans::T);
        dh_carry = Matrix(B, H);
        for (std::size_t k = 0; k < dh_carry.a.size(); ++k) {
          dh_carry.a[k] = dh.a[k] * (1.0 - gz.a[k]) + dm.a[k] * gr.a[k] + dhz.a[k] + dhr.a[k];
        }
        if (l > 0) {
          Matrix dx = matmul(daz, Trans::N, vw.wx[vg + kZ], Trans::T);
          const Matrix dxr = matmul(dar, Trans::N, vw.wx[vg + kR], Trans::T);
          const Matrix dxn = matmul(dan, Trans::N, vw.wx[vg + kN], Trans::T);
          for (std::size_t k = 0; k < dx.a.size(); ++k) dx.a[k] += dxr.a[k] + dxn.a[k];
          dbelow[static_cast<std::size_t>(t)] = std::move(dx);
        }
      }
    }
    if (l > 0) dseq = std::move(dbelow);
  }

  for (std::size_t k = 0; k < params_.size(); ++k) {
    const double w = params_[k];
    const double sgn = w > 0.0 ? 1.0 : w < 0.0 ? -1.0 : 0.0;
    grad[k] += hyper_.l1 * sgn + 2.0 * hyper_.l2 * w;
  }
  return grad;
}

std::vector<double> SeqNet::predict_proba(const WindowTensor& w) const {
  if (w.n == 0) return {};
  return run_forward(hyper_, layout_, params_, batch_from(w), nullptr);
}

TrainHistory train_net(SeqNet& net, const WindowTensor& train_set, const WindowTensor& val_set) {
  if (train_set.n == 0) fail(Err::EmptySplit, "training set is empty");
  if (val_set.n == 0) fail(Err::EmptySplit, "validation set is empty");
  const RnnHyper& hy = net.hyper();

  bool val_has_pos = false;
  for (auto y : val_set.labels) val_has_pos |= y != 0;

  TrainHistory hist;
  hist.monitor_is_loss = !val_has_pos;
  if (hist.monitor_is_loss) {
    std::fprintf(stderr, "warning: validation split has no positives; early stopping monitors loss\n");
  }

  const Batch val_batch = batch_from(val_set);
  AdamState adam;
  std::vector<double> best = net.params();
  double best_metric = hist.monitor_is_loss ? std::numeric_limits<double>::infinity()
                                            : -std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;
  constexpr double kTol = 1e-6;

  std::vector<std::int64_t> order(static_cast<std::size_t>(train_set.n));
  std::iota(order.begin(), order.end(), std::int64_t{0});

  for (int epoch = 1; epoch <= hy.max_epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(hy.seed, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::int64_t n_batches = 0;
    bool blew_up = false;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hy.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(hy.batch_size));
      const std::vector<std::int64_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Batch bb = batch_from(train_set, idx);
      try {
        const double batch_loss = net.loss(bb);
        if (!std::isfinite(batch_loss)) fail(Err::NonFiniteActivation, "non-finite training loss");
        const auto grads = net.backward(bb);
        adam_step(net.params(), grads, adam, hy.learning_rate);
        loss_sum += batch_loss;
        ++n_batches;
      } catch (const Error& e) {
        if (e.code() != Err::NonFiniteActivation) throw;
        blew_up = true;
        break;
      }
    }
    if (blew_up) {
      hist.diverged = true;
      hist.stopped_epoch = epoch;
      break;
    }
    hist.train_loss.push_back(loss_sum / static_cast<double>(n_batches));

    double metric = 0.0;
    try {
      if (hist.monitor_is_loss) {
        metric = net.loss(val_batch);
      } else {
        metric = auc_prc(val_set.labels, net.predict_proba(val_set));
      }
      if (!std::isfinite(metric)) fail(Err::NonFiniteActivation, "non-finite validation metric");
    } catch (const Error& e) {
      if (e.code() != Err::NonFiniteActivation) throw;
      hist.diverged = true;
      hist.stopped_epoch = epoch;
      break;
    }
    hist.val_metric.push_back(metric);

    const bool improved = hist.monitor_is_loss ? metric < best_metric - kTol : metric > best_metric + kTol;
    if (improved) {
      best_metric = metric;
      best = net.params();
      hist.best_epoch = epoch;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }
    hist.stopped_epoch = epoch;
    if (epochs_since_best >= hy.patience) break;
  }

  net.params() = best;
  return hist;
}

void save_checkpoint(const SeqNet& net, int epoch, const std::string& path) {
  const RnnHyper& hy = net.hyper();
  nlohmann::json j;
  j["format"] = "seqnet-checkpoint";
  j["version"] = 1;
  j["cell"] = cell_name(hy.cell);
  j["neurons"] = hy.neurons;
  j["layers"] = hy.layers;
  j["learning_rate"] = hy.learning_rate;
  j["max_epochs"] = hy.max_epochs;
  j["patience"] = hy.patience;
  j["l1"] = hy.l1;
  j["l2"] = hy.l2;
  j["batch_size"] = hy.batch_size;
  j["seed"] = hy.seed;
  j["state_act"] = hy.state_act == StateAct::Relu ? "relu" : "tanh";
  j["input_dim"] = net.input_dim();
  j["epoch"] = epoch;
  j["n_params"] = static_cast<std::int64_t>(net.params().size());
  std::string blob = j.dump();
  blob.push_back('\n');
  const std::size_t base = blob.size();
  blob.resize(base + net.params().size() * sizeof(double));
  std::memcpy(blob.data() + base, net.params().data(), net.params().size() * sizeof(double));
  write_file(path, blob);
}

SeqNet load_checkpoint(const std::string& path) {
  const std::string blob = read_file(path);
  const std::size_t nl = blob.find('\n');
  if (nl == std::string::npos) fail(Err::Io, "checkpoint has no header line: " + path);
  const nlohmann::json j = nlohmann::json::parse(blob.substr(0, nl));
  if (j.value("format", "") != "seqnet-checkpoint") fail(Err::Io, "not a network checkpoint: " + path);
  RnnHyper hy;
  hy.cell = cell_from_name(j.at("cell").get<std::string>());
  hy.neurons = j.at("neurons").get<int>();
  hy.layers = j.at("layers").get<int>();
  hy.learning_rate = j.at("learning_rate").get<double>();
  hy.max_epochs = j.at("max_epochs").get<int>();
  hy.patience = j.at("patience").get<int>();
  hy.l1 = j.at("l1").get<double>();
  hy.l2 = j.at("l2").get<double>();
  hy.batch_size = j.at("batch_size").get<int>();
  hy.seed = j.at("seed").get<std::uint64_t>();
  hy.state_act = j.at("state_act").get<std::string>() == "tanh" ? StateAct::Tanh : StateAct::Relu;
  SeqNet net(hy, j.at("input_dim").get<std::int64_t>());
  const auto want = static_cast<std::size_t>(j.at("n_params").get<std::int64_t>());
  if (net.params().size() != want || blob.size() - nl - 1 != want * sizeof(double)) {
    fail(Err::Io, "checkpoint weight blob does not match the declared architecture");
  }
  std::memcpy(net.params().data(), blob.data() + nl + 1, want * sizeof(double));
  return net;
}

}  // namespace crashwatch
