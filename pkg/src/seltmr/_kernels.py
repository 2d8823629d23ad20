"""JIT-compiled layer kernels.

Every accumulation runs in float64 with a fixed operand order (ascending
input index, kernel positions row-major) so that results are bit-reproducible
and can be checked against plain-Python loop oracles. Outputs are rounded to
float32 once per neuron. fastmath stays off; LLVM must not reassociate.
"""

import numba as nb
import numpy as np

F32 = np.float32
F64 = np.float64


@nb.njit(cache=True)
def dense_forward(x, w, b):
    out = np.empty(w.shape[0], dtype=F32)
    for o in range(w.shape[0]):
        acc = 0.0
        for i in range(w.shape[1]):
            acc += F64(w[o, i]) * F64(x[i])
        acc += F64(b[o])
        out[o] = F32(acc)
    return out


@nb.njit(cache=True)
def conv2d_forward(x, w, b, stride, pad):
    in_c, in_h, in_w = x.shape
    out_c, _, kh, kw = w.shape
    out_h = (in_h + 2 * pad - kh) // stride + 1
    out_w = (in_w + 2 * pad - kw) // stride + 1
    out = np.empty((out_c, out_h, out_w), dtype=F32)
    for oc in range(out_c):
        for oy in range(out_h):
            for ox in range(out_w):
                acc = 0.0
                for ic in range(in_c):
                    for r in range(kh):
                        iy = oy * stride + r - pad
                        if iy < 0 or iy >= in_h:
                            continue
                        for c in range(kw):
                            ix = ox * stride + c - pad
                            if ix < 0 or ix >= in_w:
                                continue
                            acc += F64(w[oc, ic, r, c]) * F64(x[ic, iy, ix])
                acc += F64(b[oc])
                out[oc, oy, ox] = F32(acc)
    return out


@nb.njit(cache=True)
def maxpool_forward(x, k):
    in_c, in_h, in_w = x.shape
    out_h = in_h // k
    out_w = in_w // k
    out = np.empty((in_c, out_h, out_w), dtype=F32)
    for c in range(in_c):
        for py in range(out_h):
            for px in range(out_w):
                # First strictly-greater element wins; ties keep the earliest
                # (row-major) position, matching the relevance router below.
                best = x[c, py * k, px * k]
                for wy in range(k):
                    for wx in range(k):
                        v = x[c, py * k + wy, px * k + wx]
                        if v > best:
                            best = v
                out[c, py, px] = best
    return out


@nb.njit(cache=True)
def dense_relevance(x, w, b, rel_out, eps, gamma, use_gamma, scores, want_scores):
    """Redistribute rel_out over the layer inputs; returns (rel_in, bad_neuron).

    bad_neuron is the first output index whose stabilized denominator is
    exactly zero, or -1. When want_scores is set, |message| per weight edge is
    accumulated into scores (same shape as w).
    """
    n_out, n_in = w.shape
    rel_in = np.zeros(n_in, dtype=F64)
    bad = -1
    for o in range(n_out):
        total = 0.0
        for i in range(n_in):
            wv = F64(w[o, i])
            if use_gamma and wv > 0.0:
                wv += gamma * wv
            total += wv * F64(x[i])
        bv = F64(b[o])
        if use_gamma and bv > 0.0:
            bv += gamma * bv
        total += bv
        denom = total + eps if total >= 0.0 else total - eps
        if denom == 0.0:
            if bad < 0:
                bad = o
            continue
        scale = rel_out[o] / denom
        for i in range(n_in):
            wv = F64(w[o, i])
            if use_gamma and wv > 0.0:
                wv += gamma * wv
            msg = wv * F64(x[i]) * scale
            rel_in[i] += msg
            if want_scores:
                scores[o, i] += abs(msg)
    return rel_in, bad


@nb.njit(cache=True)
def conv2d_relevance(
    x, w, b, rel_out, stride, pad, eps, gamma, use_gamma, scores, want_scores
):
    """Conv counterpart of dense_relevance; bad_neuron is a flat output index."""
    in_c, in_h, in_w = x.shape
    out_c, _, kh, kw = w.shape
    out_h = rel_out.shape[1]
    out_w = rel_out.shape[2]
    rel_in = np.zeros((in_c, in_h, in_w), dtype=F64)
    bad = -1
    for oc in range(out_c):
        for oy in range(out_h):
            for ox in range(out_w):
                total = 0.0
                for ic in range(in_c):
                    for r in range(kh):
                        iy = oy * stride + r - pad
                        if iy < 0 or iy >= in_h:
                            continue
                        for c in range(kw):
                            ix = ox * stride + c - pad
                            if ix < 0 or ix >= in_w:
                                continue
                            wv = F64(w[oc, ic, r, c])
                            if use_gamma and wv > 0.0:
                                wv += gamma * wv
                            total += wv * F64(x[ic, iy, ix])
                bv = F64(b[oc])
                if use_gamma and bv > 0.0:
                    bv += gamma * bv
                total += bv
                denom = total + eps if total >= 0.0 else total - eps
                if denom == 0.0:
                    if bad < 0:
                        bad = (oc * out_h + oy) * out_w + ox
                    continue
                scale = rel_out[oc, oy, ox] / denom
                for ic in range(in_c):
                    for r in range(kh):
                        iy = oy * stride + r - pad
                        if iy < 0 or iy >= in_h:
                            continue
                        for c in range(kw):
                            ix = ox * stride + c - pad
                            if ix < 0 or ix >= in_w:
                                continue
                            wv = F64(w[oc, ic, r, c])
                            if use_gamma and wv > 0.0:
                                wv += gamma * wv
                            msg = wv * F64(x[ic, iy, ix]) * scale
                            rel_in[ic, iy, ix] += msg
                            if want_scores:
                                scores[oc, ic, r, c] += abs(msg)
    return rel_in, bad


@nb.njit(cache=True)
def maxpool_relevance(x, k, rel_out):
    """Winner-take-all: each pooled output's relevance goes to its max input."""
    in_c, in_h, in_w = x.shape
    out_h = rel_out.shape[1]
    out_w = rel_out.shape[2]
    rel_in = np.zeros((in_c, in_h, in_w), dtype=F64)
    for c in range(in_c):
        for py in range(out_h):
            for px in range(out_w):
                best = x[c, py * k, px * k]
                by = py * k
                bx = px * k
                for wy in range(k):
                    for wx in range(k):
                        v = x[c, py * k + wy, px * k + wx]
                        if v > best:
                            best = v
                            by = py * k + wy
                            bx = px * k + wx
                rel_in[c, by, bx] += rel_out[c, py, px]
    return rel_in
