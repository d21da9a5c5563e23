#include "occaug/core/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "occaug/core/error.hpp"

namespace occaug {
namespace {

template <typename T>
using RowMatrix =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op,
                  const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " +
                     std::to_string(rank) + ", got shape " +
                     shape_to_string(t.shape()));
  }
}

template <typename T>
void require_same_graph(Var<T> a, Var<T> b, const char* op) {
  if (a.graph != b.graph || a.graph == nullptr) {
    throw StateError(std::string(op) + ": operands belong to different graphs");
  }
}

std::string dim_mismatch(const char* op, const char* dim, std::size_t got,
                         std::size_t want) {
  return std::string(op) + ": dimension '" + dim + "' mismatch (got " +
         std::to_string(got) + ", expected " + std::to_string(want) + ")";
}

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t kernels, kh, kw;
  std::size_t out_h, out_w;
  int stride, padding;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

/// Output columns [lo, hi) whose input column ow*stride - padding + j lies
/// inside [0, width).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out_w,
                                                       std::size_t width,
                                                       int stride, int padding,
                                                       std::size_t j) {
  const long off = static_cast<long>(j) - padding;
  long lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  long hi = (static_cast<long>(width) - off + stride - 1) / stride;
  hi = std::clamp<long>(hi, 0, static_cast<long>(out_w));
  lo = std::min<long>(lo, hi);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

/// Gathers input patches into a [C*kh*kw, B*Ho*Wo] row-major matrix.
template <typename T>
void im2col(const T* input, const ConvGeometry& g, T* cols) {
  const std::size_t P = g.positions();
  const std::size_t row_len = g.batch * P;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * row_len;
        const auto [lo, hi] =
            valid_range(g.out_w, g.width, g.stride, g.padding, j);
        const long col0 = static_cast<long>(j) - g.padding;
        for (std::size_t b = 0; b < g.batch; ++b) {
          const T* plane = input + (b * g.channels + c) * g.height * g.width;
          T* dst = row + b * P;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const long ih = static_cast<long>(oh) * g.stride - g.padding +
                            static_cast<long>(i);
            T* out_row = dst + oh * g.out_w;
            if (ih < 0 || ih >= static_cast<long>(g.height)) {
              std::fill(out_row, out_row + g.out_w, T{0});
              continue;
            }
            const T* src = plane + static_cast<std::size_t>(ih) * g.width;
            std::fill(out_row, out_row + lo, T{0});
            if (g.stride == 1) {
              std::copy(src + (static_cast<long>(lo) + col0),
                        src + (static_cast<long>(hi) + col0), out_row + lo);
            } else {
              for (std::size_t ow = lo; ow < hi; ++ow) {
                out_row[ow] = src[static_cast<long>(ow) * g.stride + col0];
              }
            }
            std::fill(out_row + hi, out_row + g.out_w, T{0});
          }
        }
      }
    }
  }
}

/// Scatter-adds a column matrix back onto the input layout.
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* input_grad) {
  const std::size_t P = g.positions();
  const std::size_t row_len = g.batch * P;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * row_len;
        const auto [lo, hi] =
            valid_range(g.out_w, g.width, g.stride, g.padding, j);
        const long col0 = static_cast<long>(j) - g.padding;
        for (std::size_t b = 0; b < g.batch; ++b) {
          T* plane = input_grad + (b * g.channels + c) * g.height * g.width;
          const T* src = row + b * P;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const long ih = static_cast<long>(oh) * g.stride - g.padding +
                            static_cast<long>(i);
            if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
            T* dst = plane + static_cast<std::size_t>(ih) * g.width;
            const T* in_row = src + oh * g.out_w;
            for (std::size_t ow = lo; ow < hi; ++ow) {
              dst[static_cast<long>(ow) * g.stride + col0] += in_row[ow];
            }
          }
        }
      }
    }
  }
}

}  // namespace

std::string_view op_name(OpTag tag) {
  switch (tag) {
    case OpTag::parameter: return "parameter";
    case OpTag::input: return "input";
    case OpTag::conv2d: return "conv2d";
    case OpTag::max_pool2d: return "max_pool2d";
    case OpTag::global_avg_pool2d: return "global_avg_pool2d";
    case OpTag::linear: return "linear";
    case OpTag::relu: return "relu";
    case OpTag::batch_norm2d: return "batch_norm2d";
    case OpTag::add: return "add";
    case OpTag::mul: return "mul";
    case OpTag::scale_by: return "scale_by";
    case OpTag::sum: return "sum";
    case OpTag::reshape: return "reshape";
    case OpTag::softmax_cross_entropy: return "softmax_cross_entropy";
  }
  return "unknown";
}

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph->node(id).value;
}

// ---------------------------------------------------------------------------
// Graph

template <typename T>
Var<T> Graph<T>::parameter(Tensor<T>& tensor) {
  Node node{OpTag::parameter, {}, tensor, {}, false, &tensor, {}};
  node.value.clear_grad();
  node.requires_grad = track_parameters_ && tensor.requires_grad();
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::input(Tensor<T> value, bool requires_grad) {
  value.clear_grad();
  nodes_.push_back(
      Node{OpTag::input, {}, std::move(value), {}, requires_grad, nullptr, {}});
  return {this, nodes_.size() - 1};
}

template <typename T>
void Graph<T>::retain_grad(Var<T> v) {
  if (v.graph != this) throw StateError("retain_grad: foreign node");
  nodes_.at(v.id).requires_grad = true;
}

template <typename T>
Var<T> Graph<T>::push(OpTag op, std::vector<std::size_t> inputs,
                      Tensor<T> value, BackwardFn backward) {
  bool needs = false;
  for (auto in : inputs) needs = needs || nodes_.at(in).requires_grad;
  Node node{op, std::move(inputs), std::move(value), {}, needs, nullptr,
            needs ? std::move(backward) : BackwardFn{}};
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <typename T>
std::span<T> Graph<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), T{0});
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Var<T> loss) {
  if (loss.graph != this) throw StateError("backward: foreign node");
  const Node& root = nodes_.at(loss.id);
  if (root.value.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     shape_to_string(root.value.shape()));
  }
  for (auto& n : nodes_) n.grad.clear();
  if (!root.requires_grad) {
    backward_done_ = true;
    return;
  }
  grad_buffer(loss.id)[0] = T{1};
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
  for (auto& n : nodes_) {
    if (n.bound == nullptr || !n.requires_grad || n.grad.empty()) continue;
    auto dst = n.bound->mutable_grad();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
  }
  backward_done_ = true;
}

template <typename T>
Tensor<T> Graph<T>::grad(Var<T> v) const {
  if (!backward_done_) {
    throw StateError("gradient requested before backward was run");
  }
  const Node& n = nodes_.at(v.id);
  if (!n.requires_grad) {
    throw StateError("node " + std::to_string(v.id) + " (" +
                     std::string(op_name(n.op)) +
                     ") does not take part in the backward pass");
  }
  if (n.grad.empty()) return Tensor<T>(n.value.shape(), T{0});
  return Tensor<T>(n.value.shape(), n.grad);
}

template class Graph<float>;
template class Graph<double>;
template struct Var<float>;
template struct Var<double>;

// ---------------------------------------------------------------------------
// Operations

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, int stride,
              int padding) {
  require_same_graph(input, weight, "conv2d");
  require_same_graph(input, bias, "conv2d");
  const auto& x = input.value();
  const auto& w = weight.value();
  const auto& b = bias.value();
  require_rank(x, 4, "conv2d", "input");
  require_rank(w, 4, "conv2d", "weight");
  require_rank(b, 1, "conv2d", "bias");
  if (stride < 1) throw DomainError("conv2d: stride must be >= 1");
  if (padding < 0) throw DomainError("conv2d: padding must be >= 0");
  if (w.dim(1) != x.dim(1)) {
    throw ShapeError(dim_mismatch("conv2d", "in_channels", w.dim(1), x.dim(1)));
  }
  if (b.dim(0) != w.dim(0)) {
    throw ShapeError(dim_mismatch("conv2d", "bias", b.dim(0), w.dim(0)));
  }
  const std::size_t padded_h = x.dim(2) + 2 * static_cast<std::size_t>(padding);
  const std::size_t padded_w = x.dim(3) + 2 * static_cast<std::size_t>(padding);
  if (w.dim(2) > padded_h) {
    throw ShapeError(dim_mismatch("conv2d", "kernel_height", w.dim(2), padded_h));
  }
  if (w.dim(3) > padded_w) {
    throw ShapeError(dim_mismatch("conv2d", "kernel_width", w.dim(3), padded_w));
  }

  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2),
                 w.dim(3), (padded_h - w.dim(2)) / stride + 1,
                 (padded_w - w.dim(3)) / stride + 1, stride, padding};
  const std::size_t P = g.positions();
  const std::size_t cols_n = g.batch * P;

  std::vector<T> cols(g.patch() * cols_n);
  im2col(x.ptr(), g, cols.data());
  RowMatrix<T> out_mat(g.kernels, cols_n);
  out_mat.noalias() = ConstMatrixMap<T>(w.ptr(), g.kernels, g.patch()) *
                      ConstMatrixMap<T>(cols.data(), g.patch(), cols_n);

  Tensor<T> out({g.batch, g.kernels, g.out_h, g.out_w});
  for (std::size_t bi = 0; bi < g.batch; ++bi) {
    for (std::size_t k = 0; k < g.kernels; ++k) {
      const T* src = out_mat.data() + k * cols_n + bi * P;
      T* dst = out.ptr() + (bi * g.kernels + k) * P;
      const T bk = b[k];
      for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + bk;
    }
  }

  auto backward = [g](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    const std::size_t xi = node.inputs[0], wi = node.inputs[1],
                      bi_ = node.inputs[2];
    const std::size_t P = g.positions();
    const std::size_t cols_n = g.batch * P;
    RowMatrix<T> gmat(g.kernels, cols_n);
    const T* gout = node.grad.data();
    for (std::size_t bi = 0; bi < g.batch; ++bi) {
      for (std::size_t k = 0; k < g.kernels; ++k) {
        std::copy_n(gout + (bi * g.kernels + k) * P, P,
                    gmat.data() + k * cols_n + bi * P);
      }
    }
    if (graph.needs_grad(bi_)) {
      auto db = graph.grad_buffer(bi_);
      for (std::size_t k = 0; k < g.kernels; ++k) db[k] += gmat.row(k).sum();
    }
    if (graph.needs_grad(wi)) {
      std::vector<T> cols(g.patch() * cols_n);
      im2col(graph.node(xi).value.ptr(), g, cols.data());
      MatrixMap<T> dw(graph.grad_buffer(wi).data(), g.kernels, g.patch());
      dw.noalias() +=
          gmat * ConstMatrixMap<T>(cols.data(), g.patch(), cols_n).transpose();
    }
    if (graph.needs_grad(xi)) {
      RowMatrix<T> dcols(g.patch(), cols_n);
      dcols.noalias() =
          ConstMatrixMap<T>(graph.node(wi).value.ptr(), g.kernels, g.patch())
              .transpose() *
          gmat;
      col2im(dcols.data(), g, graph.grad_buffer(xi).data());
    }
  };
  return input.graph->push(OpTag::conv2d, {input.id, weight.id, bias.id},
                           std::move(out), std::move(backward));
}

template <typename T>
Var<T> max_pool2d(Var<T> input, int k, int stride) {
  const auto& x = input.value();
  require_rank(x, 4, "max_pool2d", "input");
  if (k < 1 || stride < 1) {
    throw DomainError("max_pool2d: window and stride must be >= 1");
  }
  const auto ku = static_cast<std::size_t>(k);
  if (ku > x.dim(2)) throw ShapeError(dim_mismatch("max_pool2d", "height", x.dim(2), ku));
  if (ku > x.dim(3)) throw ShapeError(dim_mismatch("max_pool2d", "width", x.dim(3), ku));
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = (H - ku) / stride + 1, Wo = (W - ku) / stride + 1;
  Tensor<T> out({B, C, Ho, Wo});
  std::vector<std::size_t> argmax(out.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < B * C; ++plane) {
    const std::size_t base = plane * H * W;
    for (std::size_t oh = 0; oh < Ho; ++oh) {
      for (std::size_t ow = 0; ow < Wo; ++ow, ++o) {
        std::size_t best = base + (oh * stride) * W + ow * stride;
        T best_v = x[best];
        for (std::size_t i = 0; i < ku; ++i) {
          const std::size_t row = base + (oh * stride + i) * W + ow * stride;
          for (std::size_t j = 0; j < ku; ++j) {
            if (x[row + j] > best_v) {
              best_v = x[row + j];
              best = row + j;
            }
          }
        }
        out[o] = best_v;
        argmax[o] = best;
      }
    }
  }
  auto backward = [argmax = std::move(argmax)](Graph<T>& graph,
                                               std::size_t self) {
    const auto& node = graph.node(self);
    auto dx = graph.grad_buffer(node.inputs[0]);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
      dx[argmax[i]] += node.grad[i];
    }
  };
  return input.graph->push(OpTag::max_pool2d, {input.id}, std::move(out),
                           std::move(backward));
}

template <typename T>
Var<T> linear(Var<T> input, Var<T> weight, Var<T> bias) {
  require_same_graph(input, weight, "linear");
  require_same_graph(input, bias, "linear");
  const auto& x = input.value();
  const auto& w = weight.value();
  const auto& b = bias.value();
  require_rank(x, 2, "linear", "input");
  require_rank(w, 2, "linear", "weight");
  require_rank(b, 1, "linear", "bias");
  if (w.dim(1) != x.dim(1)) {
    throw ShapeError(dim_mismatch("linear", "in_features", w.dim(1), x.dim(1)));
  }
  if (b.dim(0) != w.dim(0)) {
    throw ShapeError(dim_mismatch("linear", "bias", b.dim(0), w.dim(0)));
  }
  const std::size_t B = x.dim(0), D = x.dim(1), O = w.dim(0);
  Tensor<T> out({B, O});
  MatrixMap<T> y(out.ptr(), B, O);
  y.noalias() = ConstMatrixMap<T>(x.ptr(), B, D) *
                ConstMatrixMap<T>(w.ptr(), O, D).transpose();
  for (std::size_t r = 0; r < B; ++r) {
    for (std::size_t c = 0; c < O; ++c) y(r, c) += b[c];
  }
  auto backward = [B, D, O](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    const std::size_t xi = node.inputs[0], wi = node.inputs[1],
                      bi = node.inputs[2];
    ConstMatrixMap<T> gy(node.grad.data(), B, O);
    if (graph.needs_grad(xi)) {
      MatrixMap<T> dx(graph.grad_buffer(xi).data(), B, D);
      dx.noalias() += gy * ConstMatrixMap<T>(graph.node(wi).value.ptr(), O, D);
    }
    if (graph.needs_grad(wi)) {
      MatrixMap<T> dw(graph.grad_buffer(wi).data(), O, D);
      dw.noalias() +=
          gy.transpose() * ConstMatrixMap<T>(graph.node(xi).value.ptr(), B, D);
    }
    if (graph.needs_grad(bi)) {
      auto db = graph.grad_buffer(bi);
      for (std::size_t c = 0; c < O; ++c) db[c] += gy.col(c).sum();
    }
  };
  return input.graph->push(OpTag::linear, {input.id, weight.id, bias.id},
                           std::move(out), std::move(backward));
}

template <typename T>
Var<T> relu(Var<T> input) {
  Tensor<T> out = input.value();
  for (auto& v : out.storage()) v = v > T{0} ? v : T{0};
  auto backward = [](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    const auto& x = graph.node(node.inputs[0]).value;
    auto dx = graph.grad_buffer(node.inputs[0]);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx[i] += x[i] > T{0} ? node.grad[i] : T{0};
    }
  };
  return input.graph->push(OpTag::relu, {input.id}, std::move(out),
                           std::move(backward));
}

template <typename T>
Var<T> batch_norm2d(Var<T> input, Var<T> gamma, Var<T> beta,
                    BatchNormState<T>& state, const BatchNormOptions& options) {
  require_same_graph(input, gamma, "batch_norm2d");
  require_same_graph(input, beta, "batch_norm2d");
  const auto& x = input.value();
  require_rank(x, 4, "batch_norm2d", "input");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (gamma.value().size() != C) {
    throw ShapeError(dim_mismatch("batch_norm2d", "gamma", gamma.value().size(), C));
  }
  if (beta.value().size() != C) {
    throw ShapeError(dim_mismatch("batch_norm2d", "beta", beta.value().size(), C));
  }
  if (state.running_mean.size() != C || state.running_var.size() != C) {
    throw ShapeError(dim_mismatch("batch_norm2d", "running_stats",
                                  state.running_mean.size(), C));
  }
  const bool train = options.mode == BatchNormMode::train;
  const std::size_t N = B * HW;
  if (train && N < 2) {
    throw DomainError("batch_norm2d: training mode needs at least 2 values "
                      "per channel, got " + std::to_string(N));
  }
  if (!train && !state.initialized) {
    throw StateError("batch_norm2d: eval mode before any training-mode call "
                     "(running statistics uninitialised)");
  }

  const auto& g = gamma.value();
  const auto& bt = beta.value();
  std::vector<T> inv_std(C);
  Tensor<T> xhat(x.shape());
  Tensor<T> out(x.shape());
  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (train) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* p = x.ptr() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += p[i];
      }
      mean = s / static_cast<double>(N);
      double ss = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* p = x.ptr() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          const double d = p[i] - mean;
          ss += d * d;
        }
      }
      var = ss / static_cast<double>(N);
      if (options.update_running) {
        const double m = options.momentum;
        const double unbiased = ss / static_cast<double>(N - 1);
        state.running_mean[c] =
            static_cast<T>((1.0 - m) * state.running_mean[c] + m * mean);
        state.running_var[c] =
            static_cast<T>((1.0 - m) * state.running_var[c] + m * unbiased);
      }
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + options.eps);
    inv_std[c] = static_cast<T>(is);
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t off = (b * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        const T xh = static_cast<T>((x[off + i] - mean) * is);
        xhat[off + i] = xh;
        out[off + i] = g[c] * xh + bt[c];
      }
    }
  }
  if (train && options.update_running) state.initialized = true;

  auto backward = [train, B, C, HW, inv_std = std::move(inv_std),
                   xhat = std::move(xhat)](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    const std::size_t xi = node.inputs[0], gi = node.inputs[1],
                      bi = node.inputs[2];
    const auto& gam = graph.node(gi).value;
    const T* dy = node.grad.data();
    const double N = static_cast<double>(B * HW);
    std::span<T> dx, dg, db;
    if (graph.needs_grad(xi)) dx = graph.grad_buffer(xi);
    if (graph.needs_grad(gi)) dg = graph.grad_buffer(gi);
    if (graph.needs_grad(bi)) db = graph.grad_buffer(bi);
    for (std::size_t c = 0; c < C; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t off = (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          sum_dy += dy[off + i];
          sum_dy_xhat += dy[off + i] * xhat[off + i];
        }
      }
      if (!dg.empty()) dg[c] += static_cast<T>(sum_dy_xhat);
      if (!db.empty()) db[c] += static_cast<T>(sum_dy);
      if (dx.empty()) continue;
      const double scale = gam[c] * inv_std[c];
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t off = (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          if (train) {
            dx[off + i] += static_cast<T>(
                scale * (dy[off + i] - sum_dy / N -
                         xhat[off + i] * sum_dy_xhat / N));
          } else {
            dx[off + i] += static_cast<T>(scale * dy[off + i]);
          }
        }
      }
    }
  };
  return input.graph->push(OpTag::batch_norm2d, {input.id, gamma.id, beta.id},
                           std::move(out), std::move(backward));
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_graph(a, b, "add");
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto backward = [](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    for (auto in : node.inputs) {
      if (!graph.needs_grad(in)) continue;
      auto d = graph.grad_buffer(in);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += node.grad[i];
    }
  };
  return a.graph->push(OpTag::add, {a.id, b.id}, std::move(out),
                       std::move(backward));
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_graph(a, b, "mul");
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shape " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  auto backward = [](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    const std::size_t ai = node.inputs[0], bi = node.inputs[1];
    if (graph.needs_grad(ai)) {
      auto d = graph.grad_buffer(ai);
      const auto& other = graph.node(bi).value;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += node.grad[i] * other[i];
    }
    if (graph.needs_grad(bi)) {
      auto d = graph.grad_buffer(bi);
      const auto& other = graph.node(ai).value;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += node.grad[i] * other[i];
    }
  };
  return a.graph->push(OpTag::mul, {a.id, b.id}, std::move(out),
                       std::move(backward));
}

template <typename T>
Var<T> scale_by(Var<T> input, const Tensor<T>& factor) {
  if (input.shape() != factor.shape()) {
    throw ShapeError("scale_by: shape " + shape_to_string(input.shape()) +
                     " vs factor " + shape_to_string(factor.shape()));
  }
  Tensor<T> out = input.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  auto backward = [f = factor.storage()](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    auto d = graph.grad_buffer(node.inputs[0]);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += node.grad[i] * f[i];
  };
  return input.graph->push(OpTag::scale_by, {input.id}, std::move(out),
                           std::move(backward));
}

template <typename T>
Var<T> sum(Var<T> input) {
  double s = 0.0;
  for (T v : input.value().data()) s += v;
  auto backward = [](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    auto d = graph.grad_buffer(node.inputs[0]);
    for (auto& v : d) v += node.grad[0];
  };
  return input.graph->push(OpTag::sum, {input.id},
                           Tensor<T>::scalar(static_cast<T>(s)),
                           std::move(backward));
}

template <typename T>
Var<T> reshape(Var<T> input, Shape shape) {
  Tensor<T> out = input.value().reshaped(std::move(shape));
  auto backward = [](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    auto d = graph.grad_buffer(node.inputs[0]);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += node.grad[i];
  };
  return input.graph->push(OpTag::reshape, {input.id}, std::move(out),
                           std::move(backward));
}

template <typename T>
Var<T> flatten(Var<T> input) {
  const auto& s = input.shape();
  if (s.empty()) throw ShapeError("flatten: scalar input");
  return reshape(input, Shape{s[0], input.value().size() / s[0]});
}

template <typename T>
Var<T> global_avg_pool2d(Var<T> input) {
  const auto& x = input.value();
  require_rank(x, 4, "global_avg_pool2d", "input");
  const std::size_t rows = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw == 0) throw ShapeError("global_avg_pool2d: empty spatial extent");
  Tensor<T> out({x.dim(0), x.dim(1)});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += x[r * hw + p];
    out[r] = static_cast<T>(s / static_cast<double>(hw));
  }
  auto backward = [rows, hw](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    auto d = graph.grad_buffer(node.inputs[0]);
    const T scale = static_cast<T>(1.0 / static_cast<double>(hw));
    for (std::size_t r = 0; r < rows; ++r) {
      const T g = node.grad[r] * scale;
      for (std::size_t p = 0; p < hw; ++p) d[r * hw + p] += g;
    }
  };
  return input.graph->push(OpTag::global_avg_pool2d, {input.id}, std::move(out),
                           std::move(backward));
}

namespace {

template <typename T>
void validate_targets(const Tensor<T>& logits, const Tensor<T>& targets) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  if (targets.shape() != logits.shape()) {
    throw ShapeError("softmax_cross_entropy: targets shape " +
                     shape_to_string(targets.shape()) + " vs logits " +
                     shape_to_string(logits.shape()));
  }
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  for (std::size_t r = 0; r < B; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double t = targets[r * K + k];
      if (t < 0.0) {
        throw DomainError("softmax_cross_entropy: negative target in row " +
                          std::to_string(r));
      }
      s += t;
    }
    if (std::abs(s - 1.0) > 1e-6) {
      throw DomainError("softmax_cross_entropy: target row " +
                        std::to_string(r) + " sums to " + std::to_string(s) +
                        ", expected 1");
    }
  }
}

/// Row-wise log-softmax in double precision.
template <typename T>
std::vector<double> log_softmax_rows(const Tensor<T>& logits) {
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  std::vector<double> out(B * K);
  for (std::size_t r = 0; r < B; ++r) {
    const T* z = logits.ptr() + r * K;
    double m = z[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, static_cast<double>(z[k]));
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(z[k] - m);
    const double lse = m + std::log(s);
    for (std::size_t k = 0; k < K; ++k) out[r * K + k] = z[k] - lse;
  }
  return out;
}

}  // namespace

template <typename T>
double softmax_cross_entropy_value(const Tensor<T>& logits,
                                   const Tensor<T>& targets) {
  validate_targets(logits, targets);
  const auto lsm = log_softmax_rows(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < lsm.size(); ++i) {
    if (targets[i] != T{0}) loss -= targets[i] * lsm[i];
  }
  return loss / static_cast<double>(logits.dim(0));
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, const Tensor<T>& targets) {
  const auto& z = logits.value();
  validate_targets(z, targets);
  const std::size_t B = z.dim(0), K = z.dim(1);
  const auto lsm = log_softmax_rows(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < lsm.size(); ++i) {
    if (targets[i] != T{0}) loss -= targets[i] * lsm[i];
  }
  loss /= static_cast<double>(B);
  auto backward = [B, K, lsm, t = targets.storage()](Graph<T>& graph,
                                                      std::size_t self) {
    const auto& node = graph.node(self);
    auto d = graph.grad_buffer(node.inputs[0]);
    const double upstream = node.grad[0] / static_cast<double>(B);
    for (std::size_t r = 0; r < B; ++r) {
      double row_mass = 0.0;
      for (std::size_t k = 0; k < K; ++k) row_mass += t[r * K + k];
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t i = r * K + k;
        d[i] += static_cast<T>(upstream *
                               (std::exp(lsm[i]) * row_mass - t[i]));
      }
    }
  };
  return logits.graph->push(OpTag::softmax_cross_entropy, {logits.id},
                            Tensor<T>::scalar(static_cast<T>(loss)),
                            std::move(backward));
}

#define OCCAUG_INSTANTIATE_OPS(T)                                             \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, int, int);                   \
  template Var<T> max_pool2d(Var<T>, int, int);                               \
  template Var<T> global_avg_pool2d(Var<T>);                                  \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                             \
  template Var<T> relu(Var<T>);                                               \
  template Var<T> batch_norm2d(Var<T>, Var<T>, Var<T>, BatchNormState<T>&,    \
                               const BatchNormOptions&);                      \
  template Var<T> add(Var<T>, Var<T>);                                        \
  template Var<T> mul(Var<T>, Var<T>);                                        \
  template Var<T> scale_by(Var<T>, const Tensor<T>&);                         \
  template Var<T> sum(Var<T>);                                                \
  template Var<T> reshape(Var<T>, Shape);                                     \
  template Var<T> flatten(Var<T>);                                            \
  template Var<T> softmax_cross_entropy(Var<T>, const Tensor<T>&);            \
  template double softmax_cross_entropy_value(const Tensor<T>&,               \
                                              const Tensor<T>&);

OCCAUG_INSTANTIATE_OPS(float)
OCCAUG_INSTANTIATE_OPS(double)

}  // namespace occaug
