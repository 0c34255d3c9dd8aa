// src/gemm.h

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

#ifndef MFA_SRC_GEMM_H_
#define MFA_SRC_GEMM_H_

#include "mfa/tensor.h"

namespace mfa {
namespace internal {

// c[m, n] = op(a) * op(b), or += when accumulate. op(a) is [m, k] and op(b)
// is [k, n]; all buffers row-major and contiguous.
void Gemm(bool trans_a, bool trans_b, Index m, Index n, Index k,
          const double *a, const double *b, double *c, bool accumulate);

}  // namespace internal
}  // namespace mfa

#endif  // MFA_SRC_GEMM_H_
