"""Polynomial low-pass filters sum_k a_k P^k (k >= 1) and their frequency responses.

A filter on P acts on the spectrum of L = I - P as h(lam) = sum_k a_k (1 - lam)^k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import FitError, ParameterError, ParseError

KINDS = ("linear", "second_order", "ideal_approx", "custom")
MAX_BUILTIN_ORDER = 3
DEFAULT_TAU = 0.1
DEFAULT_BETA = 0.5


def default_grid(lam_max: float = 1.0, points: int = 1001) -> np.ndarray:
    return np.linspace(0.0, lam_max, points)


@dataclass(frozen=True)
class FilterSpec:
    """Coefficients a_1..a_K of sum_k a_k P^k.

    For ``ideal_approx`` the coefficients describe the approximated ideal filter
    alone; when ``beta`` is set the applied filter is P + beta * (that filter).
    """

    coeffs: tuple[float, ...]
    kind: str = "custom"
    tau: float | None = None
    beta: float | None = None

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if not coeffs:
            raise ParameterError("filter needs at least one coefficient")
        if not all(math.isfinite(c) for c in coeffs):
            raise ParameterError(f"filter coefficients must be finite, got {coeffs}")
        if self.kind not in KINDS:
            raise ParameterError(f"unknown filter kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "linear" and coeffs != (1.0,):
            raise ParameterError("a linear filter has coefficients [1]")
        if self.kind == "second_order" and coeffs != (2.0, -1.0):
            raise ParameterError("a second-order filter has coefficients [2, -1]")
        if self.beta is not None and not (math.isfinite(self.beta) and self.beta >= 0):
            raise ParameterError(f"beta must be finite and >= 0, got {self.beta}")

    @property
    def order(self) -> int:
        return len(self.coeffs)

    @property
    def effective_coeffs(self) -> tuple[float, ...]:
        """Coefficients of the polynomial actually applied, trailing zeros trimmed."""
        coeffs = list(self.coeffs)
        if self.kind == "ideal_approx" and self.beta is not None:
            coeffs = [self.beta * c for c in coeffs]
            coeffs[0] += 1.0
        while len(coeffs) > 1 and coeffs[-1] == 0.0:
            coeffs.pop()
        return tuple(coeffs)


class ResponseCurve(NamedTuple):
    lambdas: np.ndarray
    gains: np.ndarray


class FitResult(NamedTuple):
    coeffs: tuple[float, ...]
    rms: float


def polynomial_response(coeffs: Sequence[float], lambdas) -> np.ndarray:
    """sum_k a_k (1 - lam)^k, evaluated by Horner's rule in x = 1 - lam."""
    x = 1.0 - np.asarray(lambdas, dtype=np.float64)
    acc = np.zeros_like(x)
    for a in reversed(coeffs):
        acc = (acc + a) * x
    return acc


def frequency_response(f: FilterSpec, lambdas) -> ResponseCurve:
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.ndim != 1 or (lambdas.size > 1 and np.any(np.diff(lambdas) <= 0)):
        raise ParameterError("frequency grid must be one-dimensional and strictly increasing")
    return ResponseCurve(lambdas, polynomial_response(f.effective_coeffs, lambdas))


def _design(order, grid):
    x = 1.0 - grid
    return np.stack([x**k for k in range(1, order + 1)], axis=1)


def fit_response(
    target: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    order: int,
    grid=None,
    weights=None,
    method: str = "linear",
) -> FitResult:
    """Weighted least-squares fit of sum_k a_k (1 - lam)^k to ``target`` on ``grid``.

    The model is linear in the coefficients, so the default ``method="linear"``
    solves the order x order normal equations. ``method="nonlinear"`` runs a
    generic trust-region solver on the same objective from a zero start.
    """
    if order < 1:
        raise ParameterError(f"order must be >= 1, got {order}")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    y = target(grid) if callable(target) else np.asarray(target, dtype=np.float64)
    w = np.ones_like(grid) if weights is None else np.asarray(weights, dtype=np.float64)
    if y.shape != grid.shape or w.shape != grid.shape:
        raise ParameterError("target and weights must match the grid")
    if np.any(w < 0):
        raise ParameterError("weights must be nonnegative")
    X = _design(order, grid)

    if method == "linear":
        G = X.T @ (w[:, None] * X)
        b = X.T @ (w * y)
        if np.linalg.matrix_rank(G) < order:
            raise FitError(f"normal matrix is singular: the grid cannot determine {order} coefficients")
        coeffs = np.linalg.solve(G, b)
    elif method == "nonlinear":
        from scipy.optimize import least_squares

        sw = np.sqrt(w)
        if np.linalg.matrix_rank(sw[:, None] * X) < order:
            raise FitError(f"design is rank deficient: the grid cannot determine {order} coefficients")
        sol = least_squares(lambda a: sw * (X @ a - y), np.zeros(order), method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        coeffs = sol.x
    else:
        raise ParameterError(f"unknown fit method {method!r}")

    resid = X @ coeffs - y
    rms = math.sqrt(float(np.sum(w * resid**2) / np.sum(w)))
    return FitResult(tuple(float(c) for c in coeffs), rms)


def ideal_lpf(tau: float):
    return lambda lam: (lam <= tau).astype(np.float64)


def fit_ideal_lpf(tau: float, order: int = 3, grid=None, weights=None, method="linear") -> FitResult:
    """Polynomial approximation of the step 1[lam <= tau]."""
    if not 0.0 < tau < 1.0:
        raise ParameterError(f"cutoff tau must lie in (0, 1), got {tau}")
    return fit_response(ideal_lpf(tau), order, grid, weights, method)


def predefined_filter(kind: str, tau: float = DEFAULT_TAU, beta: float = DEFAULT_BETA) -> FilterSpec:
    if kind == "linear":
        return FilterSpec((1.0,), "linear")
    if kind == "second_order":
        return FilterSpec((2.0, -1.0), "second_order")
    if kind == "ideal_approx":
        if not (tau is not None and 0.0 < tau < 1.0):
            raise ParameterError(f"cutoff tau must lie in (0, 1), got {tau}")
        if not (beta is not None and math.isfinite(beta) and beta >= 0):
            raise ParameterError(f"beta must be finite and >= 0, got {beta}")
        fit = fit_ideal_lpf(tau, MAX_BUILTIN_ORDER)
        return FilterSpec(fit.coeffs, "ideal_approx", tau=float(tau), beta=float(beta))
    raise ParameterError(f"unknown predefined filter {kind!r}; expected linear, second_order or ideal_approx")


def write_filter(path, f: FilterSpec):
    lines = [f"kind = {f.kind}", "coeffs = " + ",".join(repr(c) for c in f.coeffs)]
    if f.tau is not None:
        lines.append(f"tau = {f.tau!r}")
    if f.beta is not None:
        lines.append(f"beta = {f.beta!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_filter(path) -> FilterSpec:
    """Read a key = value filter file (kind, tau, beta, comma-separated coeffs)."""
    entries = {}
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {line!r}", number)
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    try:
        coeffs = tuple(float(c) for c in entries["coeffs"].split(","))
        tau = float(entries["tau"]) if "tau" in entries else None
        beta = float(entries["beta"]) if "beta" in entries else None
    except KeyError:
        raise ParseError(f"{path}: missing coeffs") from None
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return FilterSpec(coeffs, entries.get("kind", "custom"), tau=tau, beta=beta)
