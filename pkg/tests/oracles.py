"""Independent reference implementations used as test oracles.

These deliberately use the slowest, most literal formulation of each
operation (direct summation, explicit loops) so they share no code with
the fast paths they check.
"""

import numpy as np


def naive_conv2d(x, weights, biases, stride=1, padding=0, groups=1):
    """Direct-summation grouped convolution of one [C, H, W] image."""
    c_in, h, w = x.shape
    c_out, cg, kh, kw = weights.shape
    og = c_out // groups
    if padding:
        xp = np.zeros((c_in, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
        xp[:, padding:-padding, padding:-padding] = x
    else:
        xp = x
    oh = (xp.shape[1] - kh) // stride + 1
    ow = (xp.shape[2] - kw) // stride + 1
    out = np.zeros((c_out, oh, ow), dtype=np.float64)
    for oc in range(c_out):
        g = oc // og
        chans = range(g * cg, (g + 1) * cg)
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for ci, cx in enumerate(chans):
                    for a in range(kh):
                        for b in range(kw):
                            acc += xp[cx, i * stride + a, j * stride + b] * weights[oc, ci, a, b]
                out[oc, i, j] = acc + biases[oc]
    return out


def numerical_gradient(loss_fn, array, step=1e-5):
    """Central finite differences of a scalar function wrt one array."""
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = loss_fn()
        flat[i] = orig - step
        lo = loss_fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def relative_error(a, b):
    """Scale-normalized worst-case deviation between two gradient arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-8)
    return float(np.abs(a - b).max(initial=0.0) / scale)
