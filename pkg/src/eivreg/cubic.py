"""Real roots of ``a u^3 + b u^2 + c u + d = 0`` in closed form.

The branch structure is the classical one built from

    delta0 = b^2 - 3ac,    delta1 = 2b^3 - 9abc + 27a^2 d,
    C+ = cbrt((delta1 + sqrt(delta1^2 - 4 delta0^3)) / 2)

with the three-real-root case handled in trigonometric form so no complex
arithmetic is ever needed.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import optimize


_DISC_RTOL = 16 * np.finfo(float).eps


class CubicCoeffs(NamedTuple):
    a: float
    b: float
    c: float
    d: float

    @property
    def delta0(self) -> float:
        return self.b * self.b - 3.0 * self.a * self.c

    @property
    def delta1(self) -> float:
        a, b, c, d = self
        return 2.0 * b**3 - 9.0 * a * b * c + 27.0 * a * a * d


def _coeffs(coeffs, b=None, c=None, d=None) -> CubicCoeffs:
    if b is not None:
        coeffs = (coeffs, b, c, d)
    cc = CubicCoeffs(*(float(v) for v in coeffs))
    if not all(math.isfinite(v) for v in cc):
        raise ValueError("cubic coefficients must be finite")
    if cc.a == 0.0:
        raise ValueError("not a cubic: leading coefficient is zero")
    return cc


def _q_plus(delta0, delta1, disc):
    # (delta1 + sqrt(disc)) / 2, rewritten when delta1 < 0 to avoid cancellation
    root = math.sqrt(disc)
    if delta1 >= 0.0:
        return 0.5 * (delta1 + root)
    denom = delta1 - root
    return 2.0 * delta0**3 / denom


def _polish(roots, a, b, c, d):
    # one guarded Newton step per root; the closed form loses digits on
    # small roots when |a| is tiny relative to the other coefficients
    out = []
    for r in roots:
        p = ((a * r + b) * r + c) * r + d
        dp = (3.0 * a * r + 2.0 * b) * r + c
        if dp != 0.0:
            r_new = r - p / dp
            if abs(((a * r_new + b) * r_new + c) * r_new + d) < abs(p):
                r = r_new
        out.append(float(r))
    return out


def real_roots_with_branch(coeffs, b=None, c=None, d=None):
    """Real roots plus the name of the branch that produced them.

    Branches: ``"single"`` (C+ != 0, one real root), ``"three"`` (C+ != 0,
    trigonometric form), ``"single-minus"`` (C+ == 0, C- != 0) and
    ``"triple"`` (C+ == C- == 0, root -b/3a repeated three times).
    """
    a, b, c, d = _coeffs(coeffs, b, c, d)
    # normalise so delta0/delta1 stay well scaled; roots are unchanged
    scale = max(abs(a), abs(b), abs(c), abs(d))
    a, b, c, d = a / scale, b / scale, c / scale, d / scale
    cc = CubicCoeffs(a, b, c, d)
    delta0, delta1 = cc.delta0, cc.delta1
    disc = delta1 * delta1 - 4.0 * delta0**3
    # a discriminant within rounding of zero is the repeated-root boundary
    if abs(disc) <= _DISC_RTOL * max(delta1 * delta1, 4.0 * abs(delta0) ** 3):
        disc = 0.0

    if disc > 0.0:
        q_plus = _q_plus(delta0, delta1, disc)
    elif disc == 0.0:
        q_plus = 0.5 * delta1
    else:
        q_plus = None  # complex; |C+| = sqrt(delta0) > 0

    c_plus_nonzero = q_plus is None or q_plus != 0.0
    if c_plus_nonzero:
        if disc > 0.0:
            cp = np.cbrt(q_plus)
            return _polish([-(b + cp + delta0 / cp) / (3.0 * a)], a, b, c, d), "single"
        theta = math.atan2(math.sqrt(max(-disc, 0.0)), delta1) / 3.0
        amp = 2.0 * math.sqrt(max(delta0, 0.0))
        roots = [
            -(b + amp * math.cos(theta)) / (3.0 * a),
            -(b + amp * math.cos(theta + 2.0 * math.pi / 3.0)) / (3.0 * a),
            -(b + amp * math.cos(theta - 2.0 * math.pi / 3.0)) / (3.0 * a),
        ]
        return _polish(roots, a, b, c, d), "three"

    q_minus = 0.5 * (delta1 - math.sqrt(max(disc, 0.0)))
    if q_minus != 0.0:
        cm = np.cbrt(q_minus)
        return _polish([-(b + cm + delta0 / cm) / (3.0 * a)], a, b, c, d), "single-minus"
    w0 = float(-b / (3.0 * a))
    return [w0, w0, w0], "triple"


def real_roots(coeffs, b=None, c=None, d=None) -> list:
    """Real roots of the cubic, one or three values with multiplicity.

    Accepts either a 4-sequence ``(a, b, c, d)`` or four scalars.

    >>> sorted(round(r, 12) for r in real_roots(1, -6, 11, -6))
    [1.0, 2.0, 3.0]
    """
    return real_roots_with_branch(coeffs, b, c, d)[0]


def real_roots_oracle(coeffs, b=None, c=None, d=None) -> list:
    """Independent root finder for cross-checking :func:`real_roots`.

    Locates the turning points of the cubic, brackets each monotone piece
    and refines sign changes with Brent's method. Touching roots at a turning
    point are reported with multiplicity two (three at an inflection).
    """
    a, b, c, d = _coeffs(coeffs, b, c, d)
    scale = max(abs(a), abs(b), abs(c), abs(d))
    a, b, c, d = a / scale, b / scale, c / scale, d / scale
    if a < 0:
        a, b, c, d = -a, -b, -c, -d

    def p(u):
        return ((a * u + b) * u + c) * u + d

    def p_tol(u):
        # rounding error bound of Horner evaluation at u
        au = abs(u)
        return 8 * np.finfo(float).eps * (((abs(a) * au + abs(b)) * au + abs(c)) * au + abs(d))

    # Cauchy bound on root magnitude
    bound = 1.0 + max(abs(b), abs(c), abs(d)) / a
    disc_d = b * b - 3 * a * c
    if disc_d > 0:
        sq = math.sqrt(disc_d)
        # stable quadratic roots of 3a u^2 + 2b u + c
        q = -(b + math.copysign(sq, b))
        t1 = q / (3 * a)
        t2 = c / q if q != 0 else t1
        turning = sorted([t1, t2])
    elif disc_d == 0:
        turning = [-b / (3 * a)]
    else:
        turning = []

    knots = [-bound] + [t for t in turning if -bound < t < bound] + [bound]
    roots = []
    for t in turning:
        if abs(p(t)) <= p_tol(t):
            mult = 3 if len(turning) == 1 else 2
            roots.extend([t] * mult)
    if roots:
        touched = set(roots)
    else:
        touched = set()
    for lo, hi in zip(knots[:-1], knots[1:]):
        plo, phi = p(lo), p(hi)
        if lo in touched or hi in touched:
            continue
        if plo == 0.0:
            roots.append(lo)
        elif plo * phi < 0:
            roots.append(optimize.brentq(p, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))
    if p(knots[-1]) == 0.0 and knots[-1] not in roots:
        roots.append(knots[-1])
    return sorted(roots)
