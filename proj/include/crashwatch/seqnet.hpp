#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crashwatch/core.hpp"
#include "crashwatch/windowing.hpp"

namespace crashwatch {

enum class Cell { Simple, Lstm, Gru };
enum class StateAct { Relu, Tanh };

std::string cell_name(Cell c);
Cell cell_from_name(const std::string& name);

struct RnnHyper {
  Cell cell = Cell::Simple;
  int neurons = 32;
  int layers = 1;
  double learning_rate = 0.001;
  int max_epochs = 50;
  int patience = 10;
  double l1 = 1e-5;
  double l2 = 1e-4;
  int batch_size = 32;
  std::uint64_t seed = 0;
  // Gates stay sigmoid; this picks the candidate/state activation.
  StateAct state_act = StateAct::Relu;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2; bias-corrected update.
void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state, double lr);

struct TrainHistory {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_metric;  // AUC-PRC, or validation loss when no positives
  bool monitor_is_loss = false;
  int best_epoch = 0;     // 1-based
  int stopped_epoch = 0;  // 1-based; == epochs actually run
  bool diverged = false;
  std::string init = "glorot_uniform";
};

struct Batch {
  std::int64_t n = 0;
  std::int64_t t = 0;
  std::int64_t f = 0;
  std::vector<double> x;  // [n][t][f]
  std::vector<std::uint8_t> y;
};

Batch batch_from(const WindowTensor& w);
Batch batch_from(const WindowTensor& w, const std::vector<std::int64_t>& idx);

// Parameter offsets into one flat vector: per layer, per gate, W_x (F_in x H)
// then W_h (H x H) then b (H); dense head (w, b) at the end.
struct ParamLayout {
  int gates = 1;
  int layers = 1;
  std::int64_t input_dim = 0;
  std::int64_t hidden = 0;

  std::int64_t in_dim(int layer) const { return layer == 0 ? input_dim : hidden; }
  std::int64_t gate_size(int layer) const { return in_dim(layer) * hidden + hidden * hidden + hidden; }
  std::int64_t layer_off(int layer) const;
  std::int64_t wx(int layer, int gate) const { return layer_off(layer) + gate * gate_size(layer); }
  std::int64_t wh(int layer, int gate) const { return wx(layer, gate) + in_dim(layer) * hidden; }
  std::int64_t b(int layer, int gate) const { return wh(layer, gate) + hidden * hidden; }
  std::int64_t head_w() const { return layer_off(layers); }
  std::int64_t head_b() const { return head_w() + hidden; }
  std::int64_t total() const { return head_b() + 1; }
};

class SeqNet {
 public:
  SeqNet(const RnnHyper& hyper, std::int64_t input_dim);

  const RnnHyper& hyper() const { return hyper_; }
  std::int64_t input_dim() const { return layout_.input_dim; }
  const ParamLayout& layout() const { return layout_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // One T x F sequence.
  double forward(const Matrix& x) const;
  std::vector<double> forward_batch(const Batch& b) const;
  // Mean clamped binary cross-entropy plus l1*sum|w| + l2*sum w^2 over all
  // kernel, recurrent, bias, and head parameters.
  double loss(const Batch& b) const;
  // Exact gradient of loss(b), regularization included.
  std::vector<double> backward(const Batch& b) const;
  std::vector<double> predict_proba(const WindowTensor& w) const;

 private:
  RnnHyper hyper_;
  ParamLayout layout_;
  std::vector<double> params_;

  friend struct SeqNetAccess;
};

TrainHistory train_net(SeqNet& net, const WindowTensor& train_set, const WindowTensor& val_set);

// JSON header line (architecture, hyper, seed, epoch) + little-endian float64
// weights; round-trips bit-exact.
void save_checkpoint(const SeqNet& net, int epoch, const std::string& path);
SeqNet load_checkpoint(const std::string& path);

}  // namespace crashwatch
