#pragma once

// Differentiable image-shaped ops. Feature maps are stored as (H*W) x C
// matrices, rows in row-major pixel order.

#include "sst/nn/tensor.hpp"

namespace sst::nn {

// Bilinear resize from (h0, w0) to (h1, w1), align-corners=false convention.
template <class T>
Var<T> bilinear_resize(const Var<T>& x, int h0, int w0, int h1, int w1) {
  const int C = (int)x->val.cols();
  if ((int)x->val.rows() != h0 * w0)
    throw std::invalid_argument("bilinear_resize: shape mismatch");

  struct Tap {
    int src;
    T w;
  };
  auto taps = std::make_shared<std::vector<std::array<Tap, 4>>>(h1 * w1);
  auto axis = [](int o, int n1, int n0, int& i0, int& i1, T& f) {
    T c = (T(o) + T(0.5)) * T(n0) / T(n1) - T(0.5);
    T fl = std::floor(c);
    i0 = std::clamp((int)fl, 0, n0 - 1);
    i1 = std::clamp((int)fl + 1, 0, n0 - 1);
    f = c - fl;
  };
  for (int r = 0; r < h1; ++r) {
    int r0, r1i;
    T fr;
    axis(r, h1, h0, r0, r1i, fr);
    for (int c = 0; c < w1; ++c) {
      int c0, c1i;
      T fc;
      axis(c, w1, w0, c0, c1i, fc);
      (*taps)[r * w1 + c] = {{{r0 * w0 + c0, (T(1) - fr) * (T(1) - fc)},
                              {r0 * w0 + c1i, (T(1) - fr) * fc},
                              {r1i * w0 + c0, fr * (T(1) - fc)},
                              {r1i * w0 + c1i, fr * fc}}};
    }
  }
  Mat<T> v = Mat<T>::Zero(h1 * w1, C);
  for (int i = 0; i < h1 * w1; ++i)
    for (auto& t : (*taps)[i]) v.row(i) += t.w * x->val.row(t.src);

  return detail::unary<T>(x, std::move(v), [taps](Node<T>& s, Node<T>& p) {
    for (int i = 0; i < (int)taps->size(); ++i)
      for (auto& t : (*taps)[i]) p.grad.row(t.src) += t.w * s.grad.row(i);
  });
}

// 3x3 convolution with zero padding; weight is (9*Cin) x Cout, bias 1 x Cout.
// Implemented with an explicit im2col matrix.
template <class T>
Var<T> conv3x3(const Var<T>& x, const Var<T>& w, const Var<T>& b, int h, int wd) {
  const int Cin = (int)x->val.cols();
  if ((int)x->val.rows() != h * wd) throw std::invalid_argument("conv3x3: shape mismatch");
  if ((int)w->val.rows() != 9 * Cin) throw std::invalid_argument("conv3x3: weight mismatch");

  Mat<T> col = Mat<T>::Zero(h * wd, 9 * Cin);
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) {
      int k = (dr + 1) * 3 + (dc + 1);
      for (int r = 0; r < h; ++r) {
        int sr = r + dr;
        if (sr < 0 || sr >= h) continue;
        int c_lo = std::max(0, -dc), c_hi = std::min(wd, wd - dc);
        for (int c = c_lo; c < c_hi; ++c)
          col.row(r * wd + c).segment(k * Cin, Cin) = x->val.row(sr * wd + c + dc);
      }
    }

  Mat<T> v = col * w->val;
  v.rowwise() += Eigen::Matrix<T, 1, Eigen::Dynamic>(b->val.row(0));

  auto colp = std::make_shared<Mat<T>>(std::move(col));
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(v);
  n->parents = {x, w, b};
  n->requires_grad = x->requires_grad || w->requires_grad || b->requires_grad;
  if (n->requires_grad) {
    n->backward = [colp, h, wd, Cin](Node<T>& self) {
      Node<T>& px = *self.parents[0];
      Node<T>& pw = *self.parents[1];
      Node<T>& pb = *self.parents[2];
      if (pw.requires_grad) {
        pw.ensure_grad();
        pw.grad.noalias() += colp->transpose() * self.grad;
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        pb.grad.row(0) += self.grad.colwise().sum();
      }
      if (px.requires_grad) {
        px.ensure_grad();
        Mat<T> dcol = self.grad * pw.val.transpose();
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            int k = (dr + 1) * 3 + (dc + 1);
            for (int r = 0; r < h; ++r) {
              int sr = r + dr;
              if (sr < 0 || sr >= h) continue;
              int c_lo = std::max(0, -dc), c_hi = std::min(wd, wd - dc);
              for (int c = c_lo; c < c_hi; ++c)
                px.grad.row(sr * wd + c + dc) +=
                    dcol.row(r * wd + c).segment(k * Cin, Cin);
            }
          }
      }
    };
  }
  return n;
}

}  // namespace sst::nn
