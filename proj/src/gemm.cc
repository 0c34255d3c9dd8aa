// src/gemm.cc

// Copyright 2026  The mfa authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "gemm.h"

#include <Eigen/Core>

namespace mfa {
namespace internal {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

template <typename L, typename R>
void Assign(MutMap &c, const L &l, const R &r, bool accumulate) {
  if (accumulate)
    c.noalias() += l * r;
  else
    c.noalias() = l * r;
}

}  // namespace

void Gemm(bool trans_a, bool trans_b, Index m, Index n, Index k,
          const double *a, const double *b, double *c, bool accumulate) {
  MutMap cm(c, m, n);
  if (k == 0) {
    if (!accumulate) cm.setZero();
    return;
  }
  ConstMap am(a, trans_a ? k : m, trans_a ? m : k);
  ConstMap bm(b, trans_b ? n : k, trans_b ? k : n);
  if (!trans_a && !trans_b)
    Assign(cm, am, bm, accumulate);
  else if (trans_a && !trans_b)
    Assign(cm, am.transpose(), bm, accumulate);
  else if (!trans_a && trans_b)
    Assign(cm, am, bm.transpose(), accumulate);
  else
    Assign(cm, am.transpose(), bm.transpose(), accumulate);
}

}  // namespace internal
}  // namespace mfa
