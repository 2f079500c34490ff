"""No-U-turn Hamiltonian sampler with step-size and metric adaptation.

The tree building follows the efficient slice-sampling variant of the
original no-U-turn algorithm. Warmup adapts the step size by dual averaging
towards a target acceptance statistic and estimates a dense or diagonal
inverse metric in doubling windows between a fast initial and terminal buffer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

_MAX_DELTA_H = 1000.0


@dataclass
class _Tree:
    z_minus: np.ndarray
    r_minus: np.ndarray
    g_minus: np.ndarray
    z_plus: np.ndarray
    r_plus: np.ndarray
    g_plus: np.ndarray
    z_prop: np.ndarray
    g_prop: np.ndarray
    lp_prop: float
    n: int
    ok: bool
    alpha: float
    n_alpha: int
    divergent: bool


@dataclass
class ChainOutput:
    draws: np.ndarray          # (n_samples, dim) unconstrained
    log_prob: np.ndarray       # (n_samples,)
    accept_stat: np.ndarray    # (n_samples,)
    tree_depth: np.ndarray     # (n_samples,)
    divergent: np.ndarray      # (n_samples,) bool
    step_size: float
    inv_metric: np.ndarray


class _DualAveraging:
    def __init__(self, eps, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = np.log(10.0 * eps)
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.h_bar = 0.0
        self.log_eps_bar = 0.0
        self.m = 0

    def update(self, accept):
        self.m += 1
        m = self.m
        w = 1.0 / (m + self.t0)
        self.h_bar = (1 - w) * self.h_bar + w * (self.target - accept)
        log_eps = self.mu - np.sqrt(m) / self.gamma * self.h_bar
        mk = m ** -self.kappa
        self.log_eps_bar = mk * log_eps + (1 - mk) * self.log_eps_bar
        return float(np.exp(log_eps))

    @property
    def final(self):
        return float(np.exp(self.log_eps_bar))


def adaptation_windows(n_warmup):
    """End indices (exclusive) of the slow metric-adaptation windows."""
    if n_warmup < 20:
        return []
    init, term, base = 75, 50, 25
    if init + term + base > n_warmup:
        init, term = int(0.15 * n_warmup), int(0.1 * n_warmup)
        base = n_warmup - init - term
    last = n_warmup - term
    ends, start, size = [], init, base
    while start < last:
        end = start + size
        if end + 2 * size > last:
            end = last
        ends.append(end)
        start, size = end, 2 * size
    return [(s, e) for s, e in zip([init] + ends[:-1], ends)]


class NUTS:
    """Sampler for a log density ``f(z) -> (log_prob, grad)`` on R^dim.

    ``metric`` selects a dense (default) or diagonal inverse mass matrix,
    estimated from warmup draws.
    """

    def __init__(self, logp_grad, dim, rng, target_accept=0.8, max_depth=10, metric="dense"):
        if metric not in ("diag", "dense"):
            raise ValueError("metric must be 'diag' or 'dense'")
        self.f = logp_grad
        self.dim = dim
        self.rng = rng
        self.target = target_accept
        self.max_depth = max_depth
        self.dense = metric == "dense"
        self._set_metric(np.eye(dim) if self.dense else np.ones(dim))

    def _set_metric(self, inv_m):
        self.inv_m = inv_m
        if self.dense:
            self._chol = linalg.cholesky(inv_m, lower=True)

    def _vel(self, r):
        return self.inv_m @ r if self.dense else self.inv_m * r

    def _momentum(self):
        n = self.rng.normal(size=self.dim)
        if self.dense:
            # covariance inv(inv_m) = L^-T L^-1
            return linalg.solve_triangular(self._chol, n, lower=True, trans="T")
        return n / np.sqrt(self.inv_m)

    # -- integrator ---------------------------------------------------------
    def _leapfrog(self, z, r, g, eps):
        r = r + 0.5 * eps * g
        z = z + eps * self._vel(r)
        lp, g = self.f(z)
        if not np.isfinite(lp):
            return z, r, g, -np.inf
        r = r + 0.5 * eps * g
        return z, r, g, lp

    def _kinetic(self, r):
        return 0.5 * float(r @ self._vel(r))

    def _no_uturn(self, z_minus, z_plus, r_minus, r_plus):
        dz = z_plus - z_minus
        return dz @ self._vel(r_minus) >= 0 and dz @ self._vel(r_plus) >= 0

    def _build(self, z, r, g, log_u, v, depth, eps, H0):
        if depth == 0:
            z1, r1, g1, lp1 = self._leapfrog(z, r, g, v * eps)
            H = lp1 - self._kinetic(r1) if np.isfinite(lp1) else -np.inf
            n = int(log_u <= H)
            ok = bool(log_u < _MAX_DELTA_H + H)
            alpha = math.exp(min(0.0, H - H0)) if H > -np.inf else 0.0
            return _Tree(z1, r1, g1, z1, r1, g1, z1, g1, lp1, n, ok, alpha, 1, not ok)
        t = self._build(z, r, g, log_u, v, depth - 1, eps, H0)
        if not t.ok:
            return t
        if v < 0:
            t2 = self._build(t.z_minus, t.r_minus, t.g_minus, log_u, v, depth - 1, eps, H0)
            t.z_minus, t.r_minus, t.g_minus = t2.z_minus, t2.r_minus, t2.g_minus
        else:
            t2 = self._build(t.z_plus, t.r_plus, t.g_plus, log_u, v, depth - 1, eps, H0)
            t.z_plus, t.r_plus, t.g_plus = t2.z_plus, t2.r_plus, t2.g_plus
        tot = t.n + t2.n
        if tot > 0 and self.rng.random() < t2.n / tot:
            t.z_prop, t.g_prop, t.lp_prop = t2.z_prop, t2.g_prop, t2.lp_prop
        t.alpha += t2.alpha
        t.n_alpha += t2.n_alpha
        t.ok = t2.ok and self._no_uturn(t.z_minus, t.z_plus, t.r_minus, t.r_plus)
        t.n = tot
        t.divergent = t.divergent or t2.divergent
        return t

    def step(self, z, lp, g, eps):
        """One transition. Returns (z, lp, g, accept_stat, depth, divergent)."""
        r0 = self._momentum()
        H0 = lp - self._kinetic(r0)
        log_u = H0 - self.rng.exponential()
        zm = zp = z
        rm = rp = r0
        gm = gp = g
        n, ok, depth = 1, True, 0
        alpha, n_alpha, divergent = 0.0, 1, False
        while ok and depth < self.max_depth:
            v = 1 if self.rng.random() < 0.5 else -1
            if v < 0:
                t = self._build(zm, rm, gm, log_u, v, depth, eps, H0)
                zm, rm, gm = t.z_minus, t.r_minus, t.g_minus
            else:
                t = self._build(zp, rp, gp, log_u, v, depth, eps, H0)
                zp, rp, gp = t.z_plus, t.r_plus, t.g_plus
            if t.ok and self.rng.random() < t.n / n:
                z, g, lp = t.z_prop, t.g_prop, t.lp_prop
            n += t.n
            ok = t.ok and self._no_uturn(zm, zp, rm, rp)
            alpha, n_alpha = t.alpha, t.n_alpha
            divergent = divergent or t.divergent
            depth += 1
        return z, lp, g, alpha / n_alpha, depth, divergent

    def _reasonable_eps(self, z, lp, g):
        eps = 1.0
        r = self._momentum()
        H0 = lp - self._kinetic(r)

        def log_ratio(e):
            _, r1, _, lp1 = self._leapfrog(z, r, g, e)
            return lp1 - self._kinetic(r1) - H0 if np.isfinite(lp1) else -np.inf

        lr = log_ratio(eps)
        direction = 1.0 if lr > np.log(0.5) else -1.0
        for _ in range(100):
            if direction > 0 and not lr > np.log(0.5):
                break
            if direction < 0 and not lr < np.log(0.5):
                break
            eps *= 2.0**direction
            lr = log_ratio(eps)
        return eps

    # -- driver ---------------------------------------------------------------
    def run(self, z0, n_warmup, n_samples):
        z = np.asarray(z0, dtype=float).copy()
        lp, g = self.f(z)
        if not np.isfinite(lp):
            raise ValueError("non-finite log density at the initial point")
        eps = self._reasonable_eps(z, lp, g)
        da = _DualAveraging(eps, self.target)
        windows = adaptation_windows(n_warmup)
        win_idx, buf = 0, []
        for it in range(n_warmup):
            z, lp, g, acc, _, _ = self.step(z, lp, g, eps)
            eps = da.update(acc)
            if win_idx < len(windows):
                start, end = windows[win_idx]
                if start <= it < end:
                    buf.append(z)
                if it == end - 1:
                    arr = np.asarray(buf)
                    k = arr.shape[0]
                    shrink = 1e-3 * (5.0 / (k + 5.0))
                    if self.dense:
                        cov = np.atleast_2d(np.cov(arr.T)) if k > 1 else np.eye(self.dim)
                        self._set_metric((k / (k + 5.0)) * cov + shrink * np.eye(self.dim))
                    else:
                        var = arr.var(axis=0, ddof=1) if k > 1 else np.ones(self.dim)
                        self._set_metric((k / (k + 5.0)) * var + shrink)
                    buf = []
                    win_idx += 1
                    eps = self._reasonable_eps(z, lp, g)
                    da = _DualAveraging(eps, self.target)
        if n_warmup > 0:
            eps = da.final
        draws = np.empty((n_samples, self.dim))
        lps = np.empty(n_samples)
        accs = np.empty(n_samples)
        depths = np.empty(n_samples, dtype=int)
        divs = np.zeros(n_samples, dtype=bool)
        for i in range(n_samples):
            z, lp, g, accs[i], depths[i], divs[i] = self.step(z, lp, g, eps)
            draws[i], lps[i] = z, lp
        return ChainOutput(draws, lps, accs, depths, divs, eps, self.inv_m.copy())


# --- convergence diagnostics -------------------------------------------------

def split_rhat(chains):
    """Split potential-scale-reduction statistic for one scalar.

    ``chains`` has shape (n_chains, n_draws). Each chain is halved so a
    single chain still yields a value.
    """
    chains = np.asarray(chains, dtype=float)
    n = chains.shape[1] // 2
    if n < 2:
        return np.nan
    halves = np.concatenate([chains[:, :n], chains[:, -n:]], axis=0)
    means = halves.mean(axis=1)
    W = halves.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else np.inf
    var_plus = (n - 1) / n * W + B / n
    return float(max(np.sqrt(var_plus / W), 1.0))


def _autocov(x):
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    ac = np.fft.irfft(f * np.conj(f), size)[:n]
    return ac / n


def effective_sample_size(chains):
    """Multi-chain effective sample size with Geyer's initial monotone sequence.

    The result is clamped to the total number of draws.
    """
    chains = np.asarray(chains, dtype=float)
    m, n = chains.shape
    total = m * n
    if n < 4:
        return float(total)
    acov = np.array([_autocov(c) for c in chains])
    chain_var = acov[:, 0] * n / (n - 1)
    W = chain_var.mean()
    var_plus = W * (n - 1) / n
    if m > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return float(total)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer: sum adjacent pairs while positive, enforcing monotone decrease
    tau_sum = 0.0
    prev = np.inf
    t = 0
    while t + 1 < n:
        p = rho[t] + rho[t + 1]
        if p <= 0:
            break
        p = min(p, prev)
        tau_sum += p
        prev = p
        t += 2
    tau = -1.0 + 2.0 * tau_sum
    if tau <= 0:
        return float(total)
    return float(min(total / tau, total))
