"""Independent brute-force reference implementations used only by tests.

Everything here is nested loops over Python scalars, written without
looking at the library kernels, so the two sides can disagree. The
convolution oracles also count every multiply they perform, which is what
the analytic cost model is checked against.
"""
import numpy as np


def pad_same(x, d_k, fill=0.0):
    h, w, c = x.shape
    lo = (d_k - 1) // 2
    hi = d_k - 1 - lo
    out = np.full((h + lo + hi, w + lo + hi, c), fill, dtype=np.float64)
    out[lo : lo + h, lo : lo + w, :] = x
    return out


def conv2d_loops(x, w, b, stride=1, padding="valid"):
    """Six-nested-loop cross-correlation. Returns (float32 output, multiply count)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    d_k, _, m, n = w.shape
    if padding == "same":
        x = pad_same(x, d_k)
    h_out = (x.shape[0] - d_k) // stride + 1
    w_out = (x.shape[1] - d_k) // stride + 1
    out = np.zeros((h_out, w_out, n), dtype=np.float64)
    mults = 0
    for oy in range(h_out):
        for ox in range(w_out):
            for oc in range(n):
                acc = 0.0
                for ky in range(d_k):
                    for kx in range(d_k):
                        for ic in range(m):
                            acc += x[oy * stride + ky, ox * stride + kx, ic] * w[ky, kx, ic, oc]
                            mults += 1
                out[oy, ox, oc] = acc + float(b[oc])
    return out.astype(np.float32), mults


def depthwise_loops(x, dw, stride=1, padding="valid"):
    x = np.asarray(x, dtype=np.float64)
    dw = np.asarray(dw, dtype=np.float64)
    d_k, _, m = dw.shape
    if padding == "same":
        x = pad_same(x, d_k)
    h_out = (x.shape[0] - d_k) // stride + 1
    w_out = (x.shape[1] - d_k) // stride + 1
    out = np.zeros((h_out, w_out, m), dtype=np.float64)
    mults = 0
    for oy in range(h_out):
        for ox in range(w_out):
            for c in range(m):
                acc = 0.0
                for ky in range(d_k):
                    for kx in range(d_k):
                        acc += x[oy * stride + ky, ox * stride + kx, c] * dw[ky, kx, c]
                        mults += 1
                out[oy, ox, c] = acc
    return out.astype(np.float32), mults


def pointwise_loops(x, pw, b):
    """Per-pixel channel matmul; pw is (1, 1, M, N)."""
    x = np.asarray(x, dtype=np.float64)
    pw = np.asarray(pw, dtype=np.float64)
    m, n = pw.shape[2], pw.shape[3]
    h, w, _ = x.shape
    out = np.zeros((h, w, n), dtype=np.float64)
    mults = 0
    for oy in range(h):
        for ox in range(w):
            for oc in range(n):
                acc = 0.0
                for ic in range(m):
                    acc += x[oy, ox, ic] * pw[0, 0, ic, oc]
                    mults += 1
                out[oy, ox, oc] = acc + float(b[oc])
    return out.astype(np.float32), mults


def ds_conv_loops(x, dw, pw, b, stride=1, padding="valid"):
    mid, n1 = depthwise_loops(x, dw, stride, padding)
    out, n2 = pointwise_loops(mid.astype(np.float64), pw, b)
    return out, n1 + n2


def matvec_loops(x, w, b):
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    l = w.shape[1]
    out = np.zeros(l, dtype=np.float64)
    mults = 0
    for j in range(l):
        acc = 0.0
        for k in range(x.shape[0]):
            acc += x[k] * w[k, j]
            mults += 1
        out[j] = acc + float(b[j])
    return out.astype(np.float32), mults


def maxpool_loops(x, p):
    x = np.asarray(x, dtype=np.float64)
    h, w, c = x.shape
    out = np.zeros((h // p, w // p, c), dtype=np.float64)
    for oy in range(h // p):
        for ox in range(w // p):
            for ch in range(c):
                best = -np.inf
                for ky in range(p):
                    for kx in range(p):
                        best = max(best, x[oy * p + ky, ox * p + kx, ch])
                out[oy, ox, ch] = best
    return out.astype(np.float32)


def count_conv_mults(h_out, w_out, n, d_k, m):
    """Count multiplies a traditional conv would execute, by enumeration."""
    c = 0
    for _oy in range(h_out):
        for _ox in range(w_out):
            for _oc in range(n):
                for _ky in range(d_k):
                    for _kx in range(d_k):
                        for _ic in range(m):
                            c += 1
    return c


def count_ds_mults(h_out, w_out, n, d_k, m):
    """Count multiplies of the depthwise stage plus the pointwise stage."""
    c = 0
    for _oy in range(h_out):
        for _ox in range(w_out):
            for _ch in range(m):
                for _ky in range(d_k):
                    for _kx in range(d_k):
                        c += 1
    for _oy in range(h_out):
        for _ox in range(w_out):
            for _oc in range(n):
                for _ic in range(m):
                    c += 1
    return c


def count_dense_mults(k, l):
    c = 0
    for _j in range(l):
        for _i in range(k):
            c += 1
    return c


def dyadic(rng, shape, step=0.25, lo=-8, hi=8):
    """Random values on a coarse dyadic grid: float arithmetic on them is exact."""
    return (rng.integers(lo, hi + 1, size=shape) * step).astype(np.float32)


# -- integer arithmetic simulated with exact Python ints / IEEE doubles --------

def requant_scalar(acc, s_in, s_w, out_scale, out_zp, qmin, qmax):
    mult = (s_in * s_w) / out_scale
    q = _round_half_even(acc * mult) + out_zp
    return min(max(q, qmin), qmax)


def _round_half_even(x):
    # mirror IEEE round-half-to-even on a python float
    import math
    f = math.floor(x)
    d = x - f
    if d > 0.5:
        return f + 1
    if d < 0.5:
        return f
    return f if f % 2 == 0 else f + 1


def conv2d_int_sim(q_in, in_params, q_w, w_scale, bias, out_params, stride=1, padding="valid"):
    """Real-number simulation of the integer convolution, scalar by scalar."""
    d_k, _, m, n = q_w.shape
    zp = in_params.zero_point
    x = np.asarray(q_in, dtype=object)
    if padding == "same":
        h, w, _ = x.shape
        lo = (d_k - 1) // 2
        hi = d_k - 1 - lo
        padded = np.full((h + lo + hi, w + lo + hi, m), zp, dtype=object)
        padded[lo : lo + h, lo : lo + w, :] = x
        x = padded
    h_out = (x.shape[0] - d_k) // stride + 1
    w_out = (x.shape[1] - d_k) // stride + 1
    out = np.zeros((h_out, w_out, n), dtype=np.int32)
    for oy in range(h_out):
        for ox in range(w_out):
            for oc in range(n):
                acc = int(bias[oc])
                for ky in range(d_k):
                    for kx in range(d_k):
                        for ic in range(m):
                            acc += (int(x[oy * stride + ky, ox * stride + kx, ic]) - zp) * int(q_w[ky, kx, ic, oc])
                out[oy, ox, oc] = requant_scalar(
                    acc, in_params.scale, w_scale, out_params.scale,
                    out_params.zero_point, out_params.qmin, out_params.qmax,
                )
    return out


def dense_int_sim(q_in, in_params, q_w, w_scale, bias, out_params):
    zp = in_params.zero_point
    k, l = q_w.shape
    out = np.zeros(l, dtype=np.int32)
    for j in range(l):
        acc = int(bias[j])
        for i in range(k):
            acc += (int(q_in[i]) - zp) * int(q_w[i, j])
        out[j] = requant_scalar(
            acc, in_params.scale, w_scale, out_params.scale,
            out_params.zero_point, out_params.qmin, out_params.qmax,
        )
    return out


def depthwise_int_sim(q_in, in_params, q_dw, dw_scale, mid_params, stride=1, padding="valid"):
    d_k, _, m = q_dw.shape
    zp = in_params.zero_point
    x = np.asarray(q_in, dtype=object)
    if padding == "same":
        h, w, _ = x.shape
        lo = (d_k - 1) // 2
        hi = d_k - 1 - lo
        padded = np.full((h + lo + hi, w + lo + hi, m), zp, dtype=object)
        padded[lo : lo + h, lo : lo + w, :] = x
        x = padded
    h_out = (x.shape[0] - d_k) // stride + 1
    w_out = (x.shape[1] - d_k) // stride + 1
    out = np.zeros((h_out, w_out, m), dtype=np.int32)
    for oy in range(h_out):
        for ox in range(w_out):
            for c in range(m):
                acc = 0
                for ky in range(d_k):
                    for kx in range(d_k):
                        acc += (int(x[oy * stride + ky, ox * stride + kx, c]) - zp) * int(q_dw[ky, kx, c])
                out[oy, ox, c] = requant_scalar(
                    acc, in_params.scale, dw_scale, mid_params.scale,
                    mid_params.zero_point, mid_params.qmin, mid_params.qmax,
                )
    return out


def pointwise_int_sim(q_mid, mid_params, q_pw, pw_scale, bias, out_params):
    m, n = q_pw.shape[2], q_pw.shape[3]
    zp = mid_params.zero_point
    h, w, _ = q_mid.shape
    out = np.zeros((h, w, n), dtype=np.int32)
    for oy in range(h):
        for ox in range(w):
            for oc in range(n):
                acc = int(bias[oc])
                for ic in range(m):
                    acc += (int(q_mid[oy, ox, ic]) - zp) * int(q_pw[0, 0, ic, oc])
                out[oy, ox, oc] = requant_scalar(
                    acc, mid_params.scale, pw_scale, out_params.scale,
                    out_params.zero_point, out_params.qmin, out_params.qmax,
                )
    return out


def dft_filter_energies(frame, filterbank, n_fft):
    """Mel energies of one frame via a direct DFT summation (no FFT)."""
    frame = np.asarray(frame, dtype=np.float64)
    bins = n_fft // 2 + 1
    mag = np.zeros(bins)
    for k in range(bins):
        re = 0.0
        im = 0.0
        for t in range(len(frame)):
            ang = -2.0 * np.pi * k * t / n_fft
            re += frame[t] * np.cos(ang)
            im += frame[t] * np.sin(ang)
        mag[k] = np.hypot(re, im)
    return filterbank @ mag
