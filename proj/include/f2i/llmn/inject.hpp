#pragma once

#include "f2i/core/ops.hpp"

namespace f2i {

/// Residual control injection: F_sd + alpha * Z(F^l). Z is applied by the
/// control branch; this adds its (already zero-convolved) output, scaled.
/// Exactly linear in alpha; alpha = 0 or a zero map leaves F_sd untouched.
template <class T>
VarT<T> inject(GraphT<T>& g, VarT<T> f_sd, VarT<T> zero_conv_out, double alpha) {
    if (!f_sd->val.same_shape(zero_conv_out->val)) throw ShapeError("inject: shape mismatch");
    return ops::add(g, f_sd, ops::scale(g, zero_conv_out, alpha));
}

}  // namespace f2i
