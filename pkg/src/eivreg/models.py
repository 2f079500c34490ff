"""Parametric curves y = f(x, theta) together with their x- and theta-derivatives."""

from __future__ import annotations

import ast
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

_FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)


@dataclass(frozen=True)
class ModelFunction:
    """A curve ``f(x, theta)`` evaluated elementwise over a vector of x.

    ``deriv`` gives df/dx per point. Models where y_i depends on several x
    (``pointwise=False``) must supply ``jacobian`` returning the full N x N
    matrix. ``param_grad`` optionally returns ``(df/dtheta, d(df/dx)/dtheta)``,
    each of shape (N, n_params); central differences are used otherwise.
    """

    param_names: tuple
    func: Callable
    deriv_func: Optional[Callable] = None
    jacobian_func: Optional[Callable] = None
    param_grad_func: Optional[Callable] = None
    defaults: Optional[tuple] = None
    name: str = "custom"
    pointwise: bool = True

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def eval(self, x, theta):
        return np.asarray(self.func(np.asarray(x, dtype=float), np.asarray(theta, dtype=float)), dtype=float) \
            * np.ones_like(x, dtype=float)

    def deriv(self, x, theta):
        x = np.asarray(x, dtype=float)
        if self.deriv_func is not None:
            return np.asarray(self.deriv_func(x, np.asarray(theta, dtype=float)), dtype=float) * np.ones_like(x)
        if not self.pointwise:
            return np.diag(self.jacobian(x, theta)).copy()
        h = _FD_STEP * (1.0 + np.abs(x))
        return (self.eval(x + h, theta) - self.eval(x - h, theta)) / (2 * h)

    def second_deriv(self, x, theta):
        """d2f/dx2 by central differences of :meth:`deriv`."""
        x = np.asarray(x, dtype=float)
        h = _FD_STEP * (1.0 + np.abs(x))
        return (self.deriv(x + h, theta) - self.deriv(x - h, theta)) / (2 * h)

    def jacobian(self, x, theta):
        """The matrix G_ij = d f_i / d x_j at x."""
        x = np.asarray(x, dtype=float)
        if self.jacobian_func is not None:
            return np.asarray(self.jacobian_func(x, np.asarray(theta, dtype=float)), dtype=float)
        if self.pointwise:
            return np.diag(self.deriv(x, theta))
        n = x.size
        G = np.empty((n, n))
        for j in range(n):
            h = _FD_STEP * (1.0 + abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            G[:, j] = (self.eval(xp, theta) - self.eval(xm, theta)) / (2 * h)
        return G

    def linearise(self, x, theta):
        """Return ``(f(x), slopes, intercepts)`` of the local tangent lines at x."""
        f = self.eval(x, theta)
        slopes = self.deriv(x, theta)
        return f, slopes, f - slopes * x

    def param_grad(self, x, theta):
        """(df/dtheta, d(df/dx)/dtheta) at x, each of shape (N, n_params)."""
        theta = np.asarray(theta, dtype=float)
        if self.param_grad_func is not None:
            return self.param_grad_func(np.asarray(x, dtype=float), theta)
        x = np.asarray(x, dtype=float)
        df = np.empty((x.size, theta.size))
        dslope = np.empty_like(df)
        for k in range(theta.size):
            h = _FD_STEP * (1.0 + abs(theta[k]))
            tp, tm = theta.copy(), theta.copy()
            tp[k] += h
            tm[k] -= h
            df[:, k] = (self.eval(x, tp) - self.eval(x, tm)) / (2 * h)
            dslope[:, k] = (self.deriv(x, tp) - self.deriv(x, tm)) / (2 * h)
        return df, dslope


def _lin_f(x, t):
    return t[0] * x + t[1]


def _lin_df(x, t):
    return np.full_like(x, t[0])


def _lin_pgrad(x, t):
    df = np.column_stack([x, np.ones_like(x)])
    dslope = np.column_stack([np.ones_like(x), np.zeros_like(x)])
    return df, dslope


def linear(names: Sequence[str] = ("A", "B")) -> ModelFunction:
    """Straight line ``A x + B``."""
    return ModelFunction(tuple(names), _lin_f, _lin_df, None, _lin_pgrad, (1.0, 0.0), "linear")


def power_law_log() -> ModelFunction:
    """Power law written in log space: ``log Y = alpha log X + log(1 - b)``.

    Columns must already hold natural logs (of X and Y divided by the pivot);
    the fitted intercept converts back through ``1 - b = exp(log_1mb)``.
    """
    return ModelFunction(("alpha", "log_1mb"), _lin_f, _lin_df, None, _lin_pgrad, (1.0, 0.0),
                         "power-law-log")


# --- expression models -------------------------------------------------------

_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)
_ALLOWED_FUNCS = {"exp", "log"}


def parse_expression(expr: str, param_names: Sequence[str], var: str = "x"):
    """Parse ``expr`` into a sympy expression after whitelisting its syntax.

    Only ``+ - * / **``, ``exp``, ``log``, numeric constants, the variable and
    the named parameters are accepted (``^`` is read as a power).
    """
    import sympy

    text = expr.replace("^", "**")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse model expression {expr!r}: {exc.msg}") from None
    allowed_names = set(param_names) | {var} | _ALLOWED_FUNCS
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ValueError(f"unsupported syntax in model expression: {type(node).__name__}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _ALLOWED_FUNCS or len(node.args) != 1:
                raise ValueError("only exp(.) and log(.) may be called in a model expression")
        if isinstance(node, ast.Name) and node.id not in allowed_names:
            raise ValueError(f"unknown name {node.id!r} in model expression")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ValueError("only numeric constants are allowed in a model expression")
    symbols = {name: sympy.Symbol(name, real=True) for name in list(param_names) + [var]}
    local = dict(symbols, exp=sympy.exp, log=sympy.log)
    return sympy.sympify(text, locals=local), symbols


def expression_model(expr: str, param_names: Sequence[str], defaults=None, var: str = "x") -> ModelFunction:
    """Build a pointwise :class:`ModelFunction` from a text expression.

    The x-derivative and parameter derivatives come from symbolic
    differentiation of the parsed expression.

    >>> m = expression_model("a * x**2 + b", ["a", "b"])
    >>> float(m.deriv([3.0], [2.0, 1.0])[0])
    12.0
    """
    import sympy

    param_names = tuple(param_names)
    sym, symbols = parse_expression(expr, param_names, var)
    xs = symbols[var]
    ps = [symbols[p] for p in param_names]
    dsym = sympy.diff(sym, xs)
    f_num = sympy.lambdify((xs, *ps), sym, modules="numpy")
    d_num = sympy.lambdify((xs, *ps), dsym, modules="numpy")
    pf = [sympy.lambdify((xs, *ps), sympy.diff(sym, p), modules="numpy") for p in ps]
    pd = [sympy.lambdify((xs, *ps), sympy.diff(dsym, p), modules="numpy") for p in ps]

    def func(x, t):
        return f_num(x, *t)

    def deriv(x, t):
        return d_num(x, *t)

    def pgrad(x, t):
        ones = np.ones_like(x)
        df = np.column_stack([np.asarray(g(x, *t), dtype=float) * ones for g in pf])
        ds = np.column_stack([np.asarray(g(x, *t), dtype=float) * ones for g in pd])
        return df, ds

    if defaults is None:
        defaults = tuple(1.0 for _ in param_names)
    return ModelFunction(param_names, func, deriv, None, pgrad, tuple(defaults), f"expr:{expr}")


BUILTIN_MODELS = {"linear": linear, "power-law-log": power_law_log}
