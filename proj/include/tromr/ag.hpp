#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tromr/common.hpp"

namespace tromr::ag {

using tromr::Mat;

// Reverse-mode tape over dense Eigen matrices. A fresh tape is built per
// forward pass; backward() replays it in reverse creation order and flushes
// leaf gradients into a parameter-indexed sink.
template <class S>
class Tape {
 public:
  using H = int;

  struct Node {
    Mat<S> value;
    Mat<S> grad;
    const Mat<S>* external = nullptr;  // leaves may alias external storage
    int param = -1;
    std::function<void(Tape&, Node&)> back;
  };

  const Mat<S>& val(H h) const {
    const Node& n = nodes_[static_cast<std::size_t>(h)];
    return n.external ? *n.external : n.value;
  }

  std::size_t size() const { return nodes_.size(); }

  H leaf(const Mat<S>& external, int param_id = -1) {
    Node n;
    n.external = &external;
    n.param = param_id;
    return push(std::move(n));
  }

  H constant(Mat<S> value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
  }

  H matmul(H a, H b) {
    Node n;
    n.value.noalias() = val(a) * val(b);
    n.back = [a, b](Tape& t, Node& self) {
      t.acc(a, self.grad.rows(), t.val(b).rows()).noalias() += self.grad * t.val(b).transpose();
      t.acc(b, t.val(a).cols(), self.grad.cols()).noalias() += t.val(a).transpose() * self.grad;
    };
    return push(std::move(n));
  }

  H add(H a, H b) {
    require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "add shape");
    Node n;
    n.value = val(a) + val(b);
    n.back = [a, b](Tape& t, Node& self) {
      t.acc_like(a, self.grad) += self.grad;
      t.acc_like(b, self.grad) += self.grad;
    };
    return push(std::move(n));
  }

  H sub(H a, H b) {
    require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "sub shape");
    Node n;
    n.value = val(a) - val(b);
    n.back = [a, b](Tape& t, Node& self) {
      t.acc_like(a, self.grad) += self.grad;
      t.acc_like(b, self.grad) -= self.grad;
    };
    return push(std::move(n));
  }

  // bias: 1 x C broadcast over rows of a.
  H add_rowvec(H a, H bias) {
    require(val(bias).rows() == 1 && val(bias).cols() == val(a).cols(), "add_rowvec shape");
    Node n;
    n.value = val(a);
    n.value.rowwise() += val(bias).row(0);
    n.back = [a, bias](Tape& t, Node& self) {
      t.acc_like(a, self.grad) += self.grad;
      t.acc(bias, 1, self.grad.cols()).row(0) += self.grad.colwise().sum();
    };
    return push(std::move(n));
  }

  H add_const(H a, Mat<S> c) {
    require(val(a).rows() == c.rows() && val(a).cols() == c.cols(), "add_const shape");
    Node n;
    n.value = val(a) + c;
    n.back = [a](Tape& t, Node& self) { t.acc_like(a, self.grad) += self.grad; };
    return push(std::move(n));
  }

  H scale(H a, S c) {
    Node n;
    n.value = val(a) * c;
    n.back = [a, c](Tape& t, Node& self) { t.acc_like(a, self.grad) += c * self.grad; };
    return push(std::move(n));
  }

  H relu(H a) {
    Node n;
    n.value = val(a).cwiseMax(S(0));
    n.back = [a](Tape& t, Node& self) {
      t.acc_like(a, self.grad).array() +=
          self.grad.array() * (t.val(a).array() > S(0)).template cast<S>();
    };
    return push(std::move(n));
  }

  H gelu(H a) {
    const S k = S(std::sqrt(2.0 / M_PI));
    const S c = S(0.044715);
    Node n;
    const auto& x = val(a).array();
    n.value = (S(0.5) * x * (S(1) + (k * (x + c * x.cube())).tanh())).matrix();
    n.back = [a, k, c](Tape& t, Node& self) {
      const auto& x = t.val(a).array();
      const auto u = (k * (x + c * x.cube())).tanh();
      const auto du = (S(1) - u.square()) * k * (S(1) + S(3) * c * x.square());
      t.acc_like(a, self.grad).array() +=
          self.grad.array() * (S(0.5) * (S(1) + u) + S(0.5) * x * du);
    };
    return push(std::move(n));
  }

  H softmax_rows(H a) {
    Node n;
    n.value = val(a);
    for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
      const S m = n.value.row(i).maxCoeff();
      n.value.row(i) = (n.value.row(i).array() - m).exp();
      n.value.row(i) /= n.value.row(i).sum();
    }
    n.back = [a](Tape& t, Node& self) {
      const Mat<S>& y = self.value;
      Vec<S> dot = (self.grad.array() * y.array()).rowwise().sum();
      t.acc_like(a, self.grad).array() +=
          y.array() * (self.grad.array().colwise() - dot.array());
    };
    return push(std::move(n));
  }

  H layernorm_rows(H a, H gamma, H beta, S eps = S(1e-5)) {
    const Mat<S>& x = val(a);
    require(val(gamma).rows() == 1 && val(gamma).cols() == x.cols(), "layernorm gamma shape");
    require(val(beta).rows() == 1 && val(beta).cols() == x.cols(), "layernorm beta shape");
    auto cache = std::make_shared<std::pair<Mat<S>, Vec<S>>>();
    Mat<S>& xhat = cache->first;
    Vec<S>& inv = cache->second;
    const Vec<S> mu = x.rowwise().mean();
    xhat = x.colwise() - mu;
    inv = (xhat.array().square().rowwise().mean() + eps).rsqrt();
    xhat.array().colwise() *= inv.array();
    Node n;
    n.value = (xhat.array().rowwise() * val(gamma).row(0).array()).matrix();
    n.value.rowwise() += val(beta).row(0);
    n.back = [a, gamma, beta, cache](Tape& t, Node& self) {
      const Mat<S>& xh = cache->first;
      const Vec<S>& rstd = cache->second;
      t.acc(gamma, 1, xh.cols()).row(0) +=
          (self.grad.array() * xh.array()).colwise().sum().matrix();
      t.acc(beta, 1, xh.cols()).row(0) += self.grad.colwise().sum();
      Mat<S> gg = (self.grad.array().rowwise() * t.val(gamma).row(0).array()).matrix();
      const Vec<S> mean_gg = gg.rowwise().mean();
      const Vec<S> mean_ggx = (gg.array() * xh.array()).rowwise().mean();
      t.acc_like(a, self.grad).array() +=
          ((gg.array().colwise() - mean_gg.array()) -
           xh.array().colwise() * mean_ggx.array())
              .colwise() *
          rstd.array();
    };
    return push(std::move(n));
  }

  H slice_cols(H a, int c0, int nc) {
    require(c0 >= 0 && c0 + nc <= val(a).cols(), "slice_cols range");
    Node n;
    n.value = val(a).middleCols(c0, nc);
    n.back = [a, c0, nc](Tape& t, Node& self) {
      t.acc(a, self.grad.rows(), t.val(a).cols()).middleCols(c0, nc) += self.grad;
    };
    return push(std::move(n));
  }

  H concat_cols(const std::vector<H>& parts) {
    require(!parts.empty(), "concat_cols empty");
    Eigen::Index rows = val(parts[0]).rows(), cols = 0;
    for (H p : parts) cols += val(p).cols();
    Node n;
    n.value.resize(rows, cols);
    Eigen::Index c = 0;
    for (H p : parts) {
      n.value.middleCols(c, val(p).cols()) = val(p);
      c += val(p).cols();
    }
    n.back = [parts](Tape& t, Node& self) {
      Eigen::Index c = 0;
      for (H p : parts) {
        const Eigen::Index pc = t.val(p).cols();
        t.acc_like(p, t.val(p)) += self.grad.middleCols(c, pc);
        c += pc;
      }
    };
    return push(std::move(n));
  }

  H transpose(H a) {
    Node n;
    n.value = val(a).transpose();
    n.back = [a](Tape& t, Node& self) {
      t.acc(a, self.grad.cols(), self.grad.rows()) += self.grad.transpose();
    };
    return push(std::move(n));
  }

  H rows_gather(H table, std::vector<int> ids) {
    const Mat<S>& tab = val(table);
    for (int id : ids) require(id >= 0 && id < tab.rows(), "rows_gather id range");
    Node n;
    n.value.resize(static_cast<Eigen::Index>(ids.size()), tab.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) n.value.row(static_cast<Eigen::Index>(i)) = tab.row(ids[i]);
    n.back = [table, ids = std::move(ids)](Tape& t, Node& self) {
      Mat<S>& g = t.acc(table, t.val(table).rows(), t.val(table).cols());
      for (std::size_t i = 0; i < ids.size(); ++i)
        g.row(ids[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    };
    return push(std::move(n));
  }

  H abs(H a) {
    Node n;
    n.value = val(a).cwiseAbs();
    n.back = [a](Tape& t, Node& self) {
      t.acc_like(a, self.grad).array() += self.grad.array() * t.val(a).array().sign();
    };
    return push(std::move(n));
  }

  // Scalar node: sum_i w_i * sum_j a(i,j).
  H weighted_rowsum(H a, Vec<S> w) {
    require(w.size() == val(a).rows(), "weighted_rowsum weight length");
    Node n;
    n.value.resize(1, 1);
    n.value(0, 0) = (val(a).rowwise().sum().array() * w.array()).sum();
    n.back = [a, w = std::move(w)](Tape& t, Node& self) {
      const S g = self.grad(0, 0);
      t.acc_like(a, t.val(a)).array().colwise() += g * w.array();
    };
    return push(std::move(n));
  }

  H colwise_mean(H a) {
    Node n;
    n.value = val(a).colwise().mean();
    n.back = [a](Tape& t, Node& self) {
      const S inv = S(1) / S(t.val(a).rows());
      t.acc_like(a, t.val(a)) += (self.grad * inv).replicate(t.val(a).rows(), 1);
    };
    return push(std::move(n));
  }

  // Token cross-entropy, fused with softmax. Scalar value: sum_i w_i * nll_i.
  H ce_with_logits(H logits, std::vector<int> targets, Vec<S> w) {
    const Mat<S>& x = val(logits);
    require(static_cast<Eigen::Index>(targets.size()) == x.rows(), "ce targets length");
    require(w.size() == x.rows(), "ce weights length");
    for (std::size_t i = 0; i < targets.size(); ++i)
      require(targets[i] >= 0 && targets[i] < x.cols(), "ce target range");
    auto probs = std::make_shared<Mat<S>>(x);
    S total = S(0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const S m = x.row(i).maxCoeff();
      probs->row(i) = (x.row(i).array() - m).exp();
      const S z = probs->row(i).sum();
      probs->row(i) /= z;
      total += w(i) * (std::log(z) + m - x(i, targets[static_cast<std::size_t>(i)]));
    }
    Node n;
    n.value.resize(1, 1);
    n.value(0, 0) = total;
    n.back = [logits, targets = std::move(targets), w = std::move(w), probs](Tape& t, Node& self) {
      const S g = self.grad(0, 0);
      Mat<S>& gx = t.acc_like(logits, *probs);
      for (Eigen::Index i = 0; i < probs->rows(); ++i) {
        gx.row(i) += (g * w(i)) * probs->row(i);
        gx(i, targets[static_cast<std::size_t>(i)]) -= g * w(i);
      }
    };
    return push(std::move(n));
  }

  // Binary cross-entropy with logits, averaged over all entries.
  H bce_with_logits(H logits, Mat<S> targets) {
    const Mat<S>& x = val(logits);
    require(x.rows() == targets.rows() && x.cols() == targets.cols(), "bce shape");
    const S inv = S(1) / S(x.size());
    // softplus(x) - t*x, with softplus stabilized for large |x|.
    S total = S(0);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const S v = x(i, j);
        const S sp = v > S(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
        total += (sp - targets(i, j) * v) * inv;
      }
    Node n;
    n.value.resize(1, 1);
    n.value(0, 0) = total;
    n.back = [logits, targets = std::move(targets), inv](Tape& t, Node& self) {
      const S g = self.grad(0, 0) * inv;
      const auto& x = t.val(logits).array();
      t.acc_like(logits, t.val(logits)).array() +=
          g * (S(1) / (S(1) + (-x).exp()) - targets.array());
    };
    return push(std::move(n));
  }

  // input: (H*W) x Cin feature map, row index y*W + x. 'same'-style zero
  // padding of (k-1)/2; output (Ho*Wo) x Cout with Ho = (H+2p-k)/stride+1.
  H conv2d(H input, int height, int width, int cin, H kernel, H bias, int k, int stride) {
    const int pad = (k - 1) / 2;
    const int ho = (height + 2 * pad - k) / stride + 1;
    const int wo = (width + 2 * pad - k) / stride + 1;
    require(val(input).rows() == static_cast<Eigen::Index>(height) * width, "conv2d input rows");
    require(val(input).cols() == cin, "conv2d input channels");
    require(val(kernel).rows() == static_cast<Eigen::Index>(k) * k * cin, "conv2d kernel rows");
    require(val(bias).rows() == 1 && val(bias).cols() == val(kernel).cols(), "conv2d bias shape");

    auto col = std::make_shared<Mat<S>>(Mat<S>::Zero(static_cast<Eigen::Index>(ho) * wo,
                                                     static_cast<Eigen::Index>(k) * k * cin));
    const Mat<S>& x = val(input);
    for (int yo = 0; yo < ho; ++yo)
      for (int xo = 0; xo < wo; ++xo) {
        const Eigen::Index row = static_cast<Eigen::Index>(yo) * wo + xo;
        for (int ky = 0; ky < k; ++ky) {
          const int yi = yo * stride - pad + ky;
          if (yi < 0 || yi >= height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int xi = xo * stride - pad + kx;
            if (xi < 0 || xi >= width) continue;
            col->block(row, static_cast<Eigen::Index>(ky * k + kx) * cin, 1, cin) =
                x.block(static_cast<Eigen::Index>(yi) * width + xi, 0, 1, cin);
          }
        }
      }
    Node n;
    n.value.noalias() = (*col) * val(kernel);
    n.value.rowwise() += val(bias).row(0);
    n.back = [input, kernel, bias, col, height, width, cin, k, stride, ho, wo, pad](Tape& t,
                                                                                    Node& self) {
      t.acc(kernel, col->cols(), self.grad.cols()).noalias() += col->transpose() * self.grad;
      t.acc(bias, 1, self.grad.cols()).row(0) += self.grad.colwise().sum();
      Mat<S> dcol = self.grad * t.val(kernel).transpose();
      Mat<S>& gx = t.acc(input, static_cast<Eigen::Index>(height) * width, cin);
      for (int yo = 0; yo < ho; ++yo)
        for (int xo = 0; xo < wo; ++xo) {
          const Eigen::Index row = static_cast<Eigen::Index>(yo) * wo + xo;
          for (int ky = 0; ky < k; ++ky) {
            const int yi = yo * stride - pad + ky;
            if (yi < 0 || yi >= height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int xi = xo * stride - pad + kx;
              if (xi < 0 || xi >= width) continue;
              gx.block(static_cast<Eigen::Index>(yi) * width + xi, 0, 1, cin) +=
                  dcol.block(row, static_cast<Eigen::Index>(ky * k + kx) * cin, 1, cin);
            }
          }
        }
    };
    return push(std::move(n));
  }

  // Nearest-neighbour 2x upsampling of an (H*W) x C map.
  H upsample2x(H a, int height, int width) {
    const Mat<S>& x = val(a);
    require(x.rows() == static_cast<Eigen::Index>(height) * width, "upsample2x input rows");
    Node n;
    n.value.resize(x.rows() * 4, x.cols());
    const int w2 = width * 2;
    for (int y = 0; y < height; ++y)
      for (int x0 = 0; x0 < width; ++x0) {
        const auto src = x.row(static_cast<Eigen::Index>(y) * width + x0);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            n.value.row(static_cast<Eigen::Index>(2 * y + dy) * w2 + (2 * x0 + dx)) = src;
      }
    n.back = [a, height, width](Tape& t, Node& self) {
      Mat<S>& gx = t.acc_like(a, t.val(a));
      const int w2 = width * 2;
      for (int y = 0; y < height; ++y)
        for (int x0 = 0; x0 < width; ++x0) {
          auto dst = gx.row(static_cast<Eigen::Index>(y) * width + x0);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              dst += self.grad.row(static_cast<Eigen::Index>(2 * y + dy) * w2 + (2 * x0 + dx));
        }
    };
    return push(std::move(n));
  }

  // Seeds d(loss)/d(loss) = 1 and replays the tape; leaf gradients are added
  // into sink (indexed by param id) when provided.
  void backward(H loss, std::vector<Mat<S>>* sink = nullptr) {
    require(val(loss).rows() == 1 && val(loss).cols() == 1, "backward needs a scalar loss");
    Node& ln = nodes_[static_cast<std::size_t>(loss)];
    ln.grad = Mat<S>::Ones(1, 1);
    for (H h = loss; h >= 0; --h) {
      Node& n = nodes_[static_cast<std::size_t>(h)];
      if (n.grad.size() == 0) continue;
      if (n.back) n.back(*this, n);
      if (sink && n.param >= 0) {
        auto& slot = (*sink)[static_cast<std::size_t>(n.param)];
        if (slot.size() == 0) slot = Mat<S>::Zero(n.grad.rows(), n.grad.cols());
        slot += n.grad;
      }
    }
  }

  // Gradient of a non-leaf node after backward (test hook).
  const Mat<S>& grad_of(H h) const { return nodes_[static_cast<std::size_t>(h)].grad; }

 private:
  friend struct NodeAccess;

  H push(Node&& n) {
    nodes_.push_back(std::move(n));
    return static_cast<H>(nodes_.size() - 1);
  }

  Mat<S>& acc(H h, Eigen::Index rows, Eigen::Index cols) {
    Node& n = nodes_[static_cast<std::size_t>(h)];
    if (n.grad.size() == 0) n.grad = Mat<S>::Zero(rows, cols);
    return n.grad;
  }

  Mat<S>& acc_like(H h, const Mat<S>& like) { return acc(h, like.rows(), like.cols()); }

  static void require(bool ok, const char* what) {
    if (!ok) throw ShapeError(std::string("autograd: ") + what);
  }

  std::vector<Node> nodes_;
};

// Named parameter storage shared by the models; Adam state and checkpoints
// index it by position.
template <class S>
struct ParamStore {
  struct Entry {
    std::string name;
    Mat<S> w;
  };
  std::vector<Entry> entries;

  int add(const std::string& name, Mat<S> w) {
    entries.push_back({name, std::move(w)});
    return static_cast<int>(entries.size() - 1);
  }
  Mat<S>& operator[](int id) { return entries[static_cast<std::size_t>(id)].w; }
  const Mat<S>& operator[](int id) const { return entries[static_cast<std::size_t>(id)].w; }
  int find(const std::string& name) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].name == name) return static_cast<int>(i);
    return -1;
  }
  std::size_t count() const { return entries.size(); }
  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries) n += e.w.size();
    return n;
  }
  std::vector<Mat<S>> zero_grads() const { return std::vector<Mat<S>>(entries.size()); }
};

}  // namespace tromr::ag
