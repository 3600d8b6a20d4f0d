"""Scalar-loop reference implementations used as independent test oracles."""

import math

import numpy as np


def conv_loop(x, W, b, stride=1, pad=0):
    n, c, h, w = x.shape
    o, _, kh, kw = W.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for bi in range(n):
        for oc in range(o):
            for i in range(oh):
                for j in range(ow):
                    acc = b[oc]
                    for ic in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                r = i * stride + di - pad
                                q = j * stride + dj - pad
                                if 0 <= r < h and 0 <= q < w:
                                    acc += x[bi, ic, r, q] * W[oc, ic, di, dj]
                    out[bi, oc, i, j] = acc
    return out


def bilinear_double_sum(U, xs, ys):
    """V^c = sum_n sum_m U[c, n, m] max(0, 1-|xs-m|) max(0, 1-|ys-n|)."""
    c, h, w = U.shape
    V = np.zeros((c,) + np.shape(xs))
    for idx in np.ndindex(np.shape(xs)):
        x, y = xs[idx], ys[idx]
        for ch in range(c):
            acc = 0.0
            for n in range(h):
                for m in range(w):
                    acc += U[ch, n, m] * max(0.0, 1 - abs(x - m)) * max(0.0, 1 - abs(y - n))
            V[(ch,) + idx] = acc
    return V


def lookup_loop(features, stride, x, y):
    """Hand-rolled 4-term blend of grid features at pixel (x, y)."""
    _, d, gh, gw = features.shape
    gx = min(x / stride, gw - 1)
    gy = min(y / stride, gh - 1)
    x0 = min(int(math.floor(gx)), max(gw - 2, 0))
    y0 = min(int(math.floor(gy)), max(gh - 2, 0))
    x1 = min(x0 + 1, gw - 1)
    y1 = min(y0 + 1, gh - 1)
    fx, fy = gx - x0, gy - y0
    out = np.zeros(d)
    for k in range(d):
        out[k] = ((1 - fx) * (1 - fy) * features[0, k, y0, x0] + fx * (1 - fy) * features[0, k, y0, x1]
                  + (1 - fx) * fy * features[0, k, y1, x0] + fx * fy * features[0, k, y1, x1])
    return out


def nearest_loop(query, features):
    """Exhaustive scan; strict '<' keeps the lowest linear index on ties."""
    _, d, gh, gw = features.shape
    best, best_d, second_d = -1, math.inf, math.inf
    for i in range(gh):
        for j in range(gw):
            acc = 0.0
            for k in range(d):
                diff = query[k] - features[0, k, i, j]
                acc += diff * diff
            dist = math.sqrt(acc)
            if dist < best_d:
                second_d = best_d
                best, best_d = i * gw + j, dist
            elif dist < second_d:
                second_d = dist
    return best, best_d, second_d


def mine_loop(f1, f2, stride, pts, radius):
    """Hard negatives as (x, y, nn_x, nn_y) tuples."""
    gw = f2.shape[3]
    out = []
    for x, y, xp, yp in pts:
        q = lookup_loop(f1, stride, x, y)
        idx, _, _ = nearest_loop(q, f2)
        nx, ny = (idx % gw) * stride, (idx // gw) * stride
        if math.hypot(nx - xp, ny - yp) > radius:
            out.append((x, y, float(nx), float(ny)))
    return out


def pck_loop(pred, gt, threshold):
    hits = 0
    for (px, py), (gx, gy) in zip(pred, gt):
        if math.sqrt((px - gx) ** 2 + (py - gy) ** 2) < threshold:
            hits += 1
    return hits / len(pred)
