"""Independent reference computations used as test oracles.

Nothing here imports the code paths it checks: densities use closed-form
2x2 algebra or 1-D products, assignments are enumerated, and the reference
GM-PHD filter is a plain per-component loop with explicit inverses.
"""
import itertools
import math

import numpy as np


def normal_1d(x, mu, var):
    return math.exp(-0.5 * (x - mu) ** 2 / var) / math.sqrt(2 * math.pi * var)


def normal_2d(z, mu, S):
    """Closed-form bivariate normal density."""
    a, b, c = S[0][0], S[0][1], S[1][1]
    det = a * c - b * b
    dx, dy = z[0] - mu[0], z[1] - mu[1]
    maha = (c * dx * dx - 2 * b * dx * dy + a * dy * dy) / det
    return math.exp(-0.5 * maha) / (2 * math.pi * math.sqrt(det))


def brute_assignment_cost(C):
    C = np.asarray(C, dtype=float)
    m, n = C.shape
    if m > n:
        C = C.T
        m, n = n, m
    best = math.inf
    for cols in itertools.permutations(range(n), m):
        best = min(best, sum(C[i, j] for i, j in enumerate(cols)))
    return 0.0 if m == 0 else best


def brute_ospa(X, Y, c=100.0, p=1.0):
    X = [tuple(x) for x in X]
    Y = [tuple(y) for y in Y]
    if len(X) > len(Y):
        X, Y = Y, X
    m, n = len(X), len(Y)
    if n == 0:
        return 0.0
    best = math.inf
    for cols in itertools.permutations(range(n), m):
        s = sum(min(math.dist(X[i], Y[j]), c) ** p for i, j in enumerate(cols))
        best = min(best, s)
    return ((best + c ** p * (n - m)) / n) ** (1 / p)


def midpoint_quad_2d(f, center, half_width, n):
    """Midpoint rule for a vectorized f(x, y) over a square box."""
    h = 2 * half_width / n
    xs = center[0] - half_width + h * (np.arange(n) + 0.5)
    ys = center[1] - half_width + h * (np.arange(n) + 0.5)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return float(np.sum(f(X, Y)) * h * h)


class ReferenceGMPHD:
    """Textbook single-type GM-PHD filter with measurement-driven births."""

    def __init__(self, F, Q, H, R, p_s, p_d, clutter_rate, region, birth_w, birth_P,
                 T=1e-5, U=4.0):
        self.F, self.Q, self.H, self.R = F, Q, H, R
        self.p_s, self.p_d = p_s, p_d
        (x0, x1), (y0, y1) = region
        self.region = region
        self.c_s = clutter_rate / ((x1 - x0) * (y1 - y0))
        self.birth_w, self.birth_P = birth_w, birth_P
        self.T, self.U = T, U
        self.comps = []  # list of (w, m, P)

    def _clutter(self, z):
        (x0, x1), (y0, y1) = self.region
        return self.c_s if (x0 <= z[0] <= x1 and y0 <= z[1] <= y1) else 0.0

    def step(self, Z):
        F, Q, H, R = self.F, self.Q, self.H, self.R
        pred = [(self.p_s * w, F @ m, Q + F @ P @ F.T) for w, m, P in self.comps]
        for z in Z:
            pred.append((self.birth_w, np.array([z[0], z[1], 0.0, 0.0]), self.birth_P.copy()))

        pre = []
        for w, m, P in pred:
            S = H @ P @ H.T + R
            K = P @ H.T @ np.linalg.inv(S)
            P_upd = (np.eye(4) - K @ H) @ P
            pre.append((H @ m, S, K, 0.5 * (P_upd + P_upd.T)))

        out = [((1 - self.p_d) * w, m, P) for w, m, P in pred]
        for z in Z:
            terms = []
            for (w, m, P), (eta, S, K, P_upd) in zip(pred, pre):
                q = normal_2d(z, eta, S)
                terms.append((self.p_d * w * q, m + K @ (z - eta), P_upd))
            denom = self._clutter(z) + sum(t[0] for t in terms)
            for num, m, P in terms:
                out.append((num / denom if denom > 0 else 0.0, m, P))
        self.updated = out
        self.comps = self._prune_merge(out)
        return self.comps

    def _prune_merge(self, comps):
        I = [v for v, c in enumerate(comps) if c[0] > self.T]
        merged = []
        while I:
            u = max(I, key=lambda v: (comps[v][0], -v))
            mu = comps[u][1]
            L = [v for v in I
                 if (comps[v][1] - mu) @ np.linalg.inv(comps[v][2]) @ (comps[v][1] - mu) <= self.U]
            w = sum(comps[v][0] for v in L)
            m = sum(comps[v][0] * comps[v][1] for v in L) / w
            P = sum(comps[v][0] * (comps[v][2] + np.outer(m - comps[v][1], m - comps[v][1]))
                    for v in L) / w
            merged.append((w, m, 0.5 * (P + P.T)))
            I = [v for v in I if v not in L]
        return merged


def random_spd(rng, d, scale=1.0, jitter=0.1):
    A = rng.normal(size=(d, d)) * scale
    return A @ A.T + jitter * scale ** 2 * np.eye(d)
