#pragma once

// Small reverse-mode autodiff core over 2-D row-major matrices.
// Graphs are rebuilt per forward pass; parameters are persistent leaf
// nodes whose gradients accumulate until zero_grad().

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

namespace sst::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
struct Node {
  Mat<T> val;
  Mat<T> grad;  // allocated lazily, same shape as val
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward;  // scatters this->grad into parents
  bool requires_grad = true;

  void ensure_grad() {
    if (grad.size() == 0) grad = Mat<T>::Zero(val.rows(), val.cols());
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> make_var(Mat<T> v, bool requires_grad = true) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(v);
  n->requires_grad = requires_grad;
  return n;
}

template <class T>
Var<T> constant(Mat<T> v) {
  return make_var<T>(std::move(v), false);
}

namespace detail {

template <class T>
Var<T> unary(const Var<T>& a, Mat<T> val, std::function<void(Node<T>&, Node<T>&)> back) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(val);
  n->parents = {a};
  n->requires_grad = a->requires_grad;
  if (n->requires_grad) {
    n->backward = [back](Node<T>& self) {
      Node<T>& p = *self.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      back(self, p);
    };
  }
  return n;
}

template <class T>
Var<T> binary(const Var<T>& a, const Var<T>& b, Mat<T> val,
              std::function<void(Node<T>&, Node<T>&, Node<T>&)> back) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(val);
  n->parents = {a, b};
  n->requires_grad = a->requires_grad || b->requires_grad;
  if (n->requires_grad) {
    n->backward = [back](Node<T>& self) {
      Node<T>& pa = *self.parents[0];
      Node<T>& pb = *self.parents[1];
      if (pa.requires_grad) pa.ensure_grad();
      if (pb.requires_grad) pb.ensure_grad();
      back(self, pa, pb);
    };
  }
  return n;
}

}  // namespace detail

// ---- arithmetic ----

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>(a, b, a->val + b->val, [](Node<T>& s, Node<T>& pa, Node<T>& pb) {
    if (pa.requires_grad) pa.grad += s.grad;
    if (pb.requires_grad) pb.grad += s.grad;
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>(a, b, a->val - b->val, [](Node<T>& s, Node<T>& pa, Node<T>& pb) {
    if (pa.requires_grad) pa.grad += s.grad;
    if (pb.requires_grad) pb.grad -= s.grad;
  });
}

template <class T>
Var<T> hadamard(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>(a, b, a->val.cwiseProduct(b->val),
                           [](Node<T>& s, Node<T>& pa, Node<T>& pb) {
                             if (pa.requires_grad) pa.grad += s.grad.cwiseProduct(pb.val);
                             if (pb.requires_grad) pb.grad += s.grad.cwiseProduct(pa.val);
                           });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  return detail::unary<T>(a, a->val * s,
                          [s](Node<T>& self, Node<T>& p) { p.grad += self.grad * s; });
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  return detail::binary<T>(a, b, a->val * b->val, [](Node<T>& s, Node<T>& pa, Node<T>& pb) {
    if (pa.requires_grad) pa.grad.noalias() += s.grad * pb.val.transpose();
    if (pb.requires_grad) pb.grad.noalias() += pa.val.transpose() * s.grad;
  });
}

// X (N x d) + bias (1 x d), broadcast over rows
template <class T>
Var<T> add_rowvec(const Var<T>& x, const Var<T>& b) {
  Mat<T> v = x->val;
  v.rowwise() += Eigen::Matrix<T, 1, Eigen::Dynamic>(b->val.row(0));
  return detail::binary<T>(x, b, std::move(v), [](Node<T>& s, Node<T>& px, Node<T>& pb) {
    if (px.requires_grad) px.grad += s.grad;
    if (pb.requires_grad) pb.grad += s.grad.colwise().sum();
  });
}

// X (N x d) scaled per-row by c (N x 1)
template <class T>
Var<T> mul_colvec(const Var<T>& x, const Var<T>& c) {
  Mat<T> v = x->val.array().colwise() * c->val.col(0).array();
  return detail::binary<T>(x, c, std::move(v), [](Node<T>& s, Node<T>& px, Node<T>& pc) {
    if (px.requires_grad)
      px.grad.array() += s.grad.array().colwise() * pc.val.col(0).array();
    if (pc.requires_grad)
      pc.grad.col(0) += s.grad.cwiseProduct(px.val).rowwise().sum();
  });
}

// X multiplied elementwise by a scalar node (1 x 1)
template <class T>
Var<T> mul_scalar(const Var<T>& x, const Var<T>& s) {
  return detail::binary<T>(x, s, x->val * s->val(0, 0),
                           [](Node<T>& self, Node<T>& px, Node<T>& ps) {
                             if (px.requires_grad) px.grad += self.grad * ps.val(0, 0);
                             if (ps.requires_grad)
                               ps.grad(0, 0) += self.grad.cwiseProduct(px.val).sum();
                           });
}

// ---- elementwise nonlinearities ----

template <class T>
Var<T> relu(const Var<T>& a) {
  return detail::unary<T>(a, a->val.cwiseMax(T(0)), [](Node<T>& s, Node<T>& p) {
    p.grad.array() += s.grad.array() * (p.val.array() > T(0)).template cast<T>();
  });
}

template <class T>
Var<T> gelu(const Var<T>& a) {
  // tanh approximation
  const T c = std::sqrt(T(2) / T(M_PI));
  Mat<T> x = a->val;
  Mat<T> inner = (c * (x.array() + T(0.044715) * x.array().cube())).matrix();
  Mat<T> th = inner.array().tanh().matrix();
  Mat<T> v = (T(0.5) * x.array() * (T(1) + th.array())).matrix();
  return detail::unary<T>(a, std::move(v), [c, th](Node<T>& s, Node<T>& p) {
    auto x = p.val.array();
    auto t = th.array();
    auto dinner = c * (T(1) + T(3) * T(0.044715) * x.square());
    auto d = T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t.square()) * dinner;
    p.grad.array() += s.grad.array() * d;
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  Mat<T> v = (T(1) / (T(1) + (-a->val.array()).exp())).matrix();
  return detail::unary<T>(a, v, [v](Node<T>& s, Node<T>& p) {
    p.grad.array() += s.grad.array() * v.array() * (T(1) - v.array());
  });
}

template <class T>
Var<T> exp(const Var<T>& a) {
  Mat<T> v = a->val.array().exp().matrix();
  return detail::unary<T>(a, v, [v](Node<T>& s, Node<T>& p) {
    p.grad.array() += s.grad.array() * v.array();
  });
}

template <class T>
Var<T> log(const Var<T>& a) {
  return detail::unary<T>(a, a->val.array().log().matrix(), [](Node<T>& s, Node<T>& p) {
    p.grad.array() += s.grad.array() / p.val.array();
  });
}

// log(1 + e^x), numerically stable
template <class T>
Var<T> softplus(const Var<T>& a) {
  Mat<T> v = a->val.unaryExpr([](T x) {
    return x > T(30) ? x : std::log1p(std::exp(std::min(x, T(30))));
  });
  return detail::unary<T>(a, std::move(v), [](Node<T>& s, Node<T>& p) {
    p.grad.array() += s.grad.array() / (T(1) + (-p.val.array()).exp());
  });
}

template <class T>
Var<T> tanh_op(const Var<T>& a) {
  Mat<T> v = a->val.array().tanh().matrix();
  return detail::unary<T>(a, v, [v](Node<T>& s, Node<T>& p) {
    p.grad.array() += s.grad.array() * (T(1) - v.array().square());
  });
}

// ---- shape ops ----

template <class T>
Var<T> transpose(const Var<T>& a) {
  return detail::unary<T>(a, a->val.transpose(),
                          [](Node<T>& s, Node<T>& p) { p.grad += s.grad.transpose(); });
}

template <class T>
Var<T> slice_cols(const Var<T>& a, int c0, int n) {
  return detail::unary<T>(a, a->val.middleCols(c0, n), [c0, n](Node<T>& s, Node<T>& p) {
    p.grad.middleCols(c0, n) += s.grad;
  });
}

template <class T>
Var<T> slice_rows(const Var<T>& a, int r0, int n) {
  return detail::unary<T>(a, a->val.middleRows(r0, n), [r0, n](Node<T>& s, Node<T>& p) {
    p.grad.middleRows(r0, n) += s.grad;
  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& xs) {
  int rows = (int)xs.at(0)->val.rows();
  int cols = 0;
  for (auto& x : xs) cols += (int)x->val.cols();
  Mat<T> v(rows, cols);
  int c = 0;
  for (auto& x : xs) {
    v.middleCols(c, x->val.cols()) = x->val;
    c += (int)x->val.cols();
  }
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(v);
  n->parents = xs;
  n->requires_grad = false;
  for (auto& x : xs) n->requires_grad |= x->requires_grad;
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      int c = 0;
      for (auto& p : self.parents) {
        if (p->requires_grad) {
          p->ensure_grad();
          p->grad += self.grad.middleCols(c, p->val.cols());
        }
        c += (int)p->val.cols();
      }
    };
  }
  return n;
}

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& xs) {
  int cols = (int)xs.at(0)->val.cols();
  int rows = 0;
  for (auto& x : xs) rows += (int)x->val.rows();
  Mat<T> v(rows, cols);
  int r = 0;
  for (auto& x : xs) {
    v.middleRows(r, x->val.rows()) = x->val;
    r += (int)x->val.rows();
  }
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(v);
  n->parents = xs;
  n->requires_grad = false;
  for (auto& x : xs) n->requires_grad |= x->requires_grad;
  if (n->requires_grad) {
    n->backward = [](Node<T>& self) {
      int r = 0;
      for (auto& p : self.parents) {
        if (p->requires_grad) {
          p->ensure_grad();
          p->grad += self.grad.middleRows(r, p->val.rows());
        }
        r += (int)p->val.rows();
      }
    };
  }
  return n;
}

template <class T>
Var<T> gather_rows(const Var<T>& a, std::vector<int> idx) {
  Mat<T> v((int)idx.size(), a->val.cols());
  for (int i = 0; i < (int)idx.size(); ++i) v.row(i) = a->val.row(idx[i]);
  return detail::unary<T>(a, std::move(v), [idx](Node<T>& s, Node<T>& p) {
    for (int i = 0; i < (int)idx.size(); ++i) p.grad.row(idx[i]) += s.grad.row(i);
  });
}

// ---- reductions ----

template <class T>
Var<T> sum_all(const Var<T>& a) {
  Mat<T> v(1, 1);
  v(0, 0) = a->val.sum();
  return detail::unary<T>(a, std::move(v), [](Node<T>& s, Node<T>& p) {
    p.grad.array() += s.grad(0, 0);
  });
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  T n = T(a->val.size());
  Mat<T> v(1, 1);
  v(0, 0) = a->val.sum() / n;
  return detail::unary<T>(a, std::move(v), [n](Node<T>& s, Node<T>& p) {
    p.grad.array() += s.grad(0, 0) / n;
  });
}

// Euclidean norm of each row; N x d -> N x 1. Gradient guarded at 0.
template <class T>
Var<T> rowwise_norm(const Var<T>& a) {
  Mat<T> v = a->val.rowwise().norm();
  return detail::unary<T>(a, v, [v](Node<T>& s, Node<T>& p) {
    const T tiny = std::numeric_limits<T>::min() * T(1e4);
    for (int i = 0; i < p.val.rows(); ++i) {
      T d = std::max(v(i, 0), tiny);
      p.grad.row(i) += (s.grad(i, 0) / d) * p.val.row(i);
    }
  });
}

// 1/x on a 1x1 scalar node
template <class T>
Var<T> recip(const Var<T>& a) {
  Mat<T> v(1, 1);
  v(0, 0) = T(1) / a->val(0, 0);
  return detail::unary<T>(a, std::move(v), [](Node<T>& s, Node<T>& p) {
    T x = p.val(0, 0);
    p.grad(0, 0) -= s.grad(0, 0) / (x * x);
  });
}

// ---- row-wise softmax / layer norm ----

template <class T>
Var<T> softmax_rows(const Var<T>& a) {
  Mat<T> v = a->val;
  for (int i = 0; i < v.rows(); ++i) {
    auto row = v.row(i).array();
    T m = row.maxCoeff();
    v.row(i) = (row - m).exp();
    v.row(i) /= v.row(i).sum();
  }
  return detail::unary<T>(a, v, [v](Node<T>& s, Node<T>& p) {
    for (int i = 0; i < v.rows(); ++i) {
      T dot = s.grad.row(i).cwiseProduct(v.row(i)).sum();
      p.grad.row(i).array() += v.row(i).array() * (s.grad.row(i).array() - dot);
    }
  });
}

// Per-row layer norm with affine parameters gamma, beta (1 x d each).
template <class T>
Var<T> layernorm_rows(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                      T eps = T(1e-5)) {
  const int N = (int)x->val.rows(), d = (int)x->val.cols();
  Mat<T> xhat(N, d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> istd(N);
  for (int i = 0; i < N; ++i) {
    T mu = x->val.row(i).mean();
    T var = (x->val.row(i).array() - mu).square().mean();
    istd(i) = T(1) / std::sqrt(var + eps);
    xhat.row(i) = (x->val.row(i).array() - mu) * istd(i);
  }
  Mat<T> v = (xhat.array().rowwise() *
              Eigen::Array<T, 1, Eigen::Dynamic>(gamma->val.row(0).array()))
                 .matrix();
  v.rowwise() += Eigen::Matrix<T, 1, Eigen::Dynamic>(beta->val.row(0));

  auto n = std::make_shared<Node<T>>();
  n->val = std::move(v);
  n->parents = {x, gamma, beta};
  n->requires_grad = x->requires_grad || gamma->requires_grad || beta->requires_grad;
  if (n->requires_grad) {
    n->backward = [xhat, istd, d](Node<T>& self) {
      Node<T>& px = *self.parents[0];
      Node<T>& pg = *self.parents[1];
      Node<T>& pb = *self.parents[2];
      if (pg.requires_grad) {
        pg.ensure_grad();
        pg.grad.row(0) += self.grad.cwiseProduct(xhat).colwise().sum();
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        pb.grad.row(0) += self.grad.colwise().sum();
      }
      if (px.requires_grad) {
        px.ensure_grad();
        const auto& g = pg.val;
        for (int i = 0; i < xhat.rows(); ++i) {
          Eigen::Array<T, 1, Eigen::Dynamic> dy =
              self.grad.row(i).array() * g.row(0).array();
          T m1 = dy.mean();
          T m2 = (dy * xhat.row(i).array()).mean();
          px.grad.row(i).array() +=
              istd(i) * (dy - m1 - xhat.row(i).array() * m2);
        }
      }
    };
  }
  return n;
}

// ---- backprop driver ----

template <class T>
void backward(const Var<T>& loss, T seed = T(1)) {
  if (loss->val.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  // topological order by iterative DFS
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({loss.get(), 0});
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node<T>* p = n->parents[i++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  loss->ensure_grad();
  loss->grad(0, 0) += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

}  // namespace sst::nn
