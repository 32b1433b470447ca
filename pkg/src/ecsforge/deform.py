"""Deformed coefficient profiles with a prescribed transfer spectrum.

A deformed profile is f = f* + f_a, where f_a(t) = (a**2 - 1/4) / t**2 is a
power law and f*(t) = t**-2 g(log t / log q) is built from a 1-periodic
trigonometric polynomial g with g(0) = 0.  Both pieces satisfy the
self-similarity q**2 f(q t) = f(t) identically, so the transfer operator
(T y)(t) = y(t/q) acts on the solutions of y'' = f y; its matrix always has
determinant 1/q, and the one remaining invariant is the trace H(f*, a).

For f* = 0 the eigenfunctions are t**(-+a + 1/2) with eigenvalues
q**(+-a - 1/2), hence H(0, a) = 2 q**(-1/2) cosh(a log q).  `solve_a` tunes
a so that the perturbed trace hits the unperturbed target at a requested
c > 0, which forces the transfer spectrum {q**(c - 1/2), q**(-c - 1/2)}
while f itself is genuinely non-homogeneous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .exact import QFieldContext
from .funcspace import OdeFn, transfer_matrix_T
from .model import PROFILE_DECODERS

__all__ = [
    "PerturbationF0",
    "DeformedF",
    "trace_H",
    "target_trace_value",
    "solve_a",
    "eig_positivity",
    "recovered_base",
]


@dataclass(frozen=True)
class PerturbationF0:
    """A 1-periodic perturbation g and its profile f*(t) = t**-2 g(x),
    x = log t / log q.

    `fourier_coeffs[j-1] = (A_j, B_j)` contributes
    A_j (cos 2 pi j x - 1) + B_j sin 2 pi j x, so g(0) = 0 holds by
    construction and f* vanishes at t = 1 (and at every power of q).
    """

    fourier_coeffs: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        coeffs = tuple(
            (float(pair[0]), float(pair[1])) for pair in self.fourier_coeffs
        )
        for a_j, b_j in coeffs:
            if not (math.isfinite(a_j) and math.isfinite(b_j)):
                raise ValueError("perturbation coefficients must be finite")
        object.__setattr__(self, "fourier_coeffs", coeffs)

    @classmethod
    def zero(cls) -> "PerturbationF0":
        return cls(())

    @property
    def is_zero(self) -> bool:
        return all(a == 0.0 and b == 0.0 for a, b in self.fourier_coeffs)

    def g(self, x: float) -> float:
        total = 0.0
        for j, (a_j, b_j) in enumerate(self.fourier_coeffs, start=1):
            angle = 2.0 * math.pi * j * x
            total += a_j * (math.cos(angle) - 1.0) + b_j * math.sin(angle)
        return total

    def g_deriv(self, x: float) -> float:
        total = 0.0
        for j, (a_j, b_j) in enumerate(self.fourier_coeffs, start=1):
            angle = 2.0 * math.pi * j * x
            freq = 2.0 * math.pi * j
            total += freq * (-a_j * math.sin(angle) + b_j * math.cos(angle))
        return total

    def max_abs_g(self, samples: int = 4096) -> float:
        """Amplitude of g over one period, by dense sampling (g is a low
        order trigonometric polynomial, so this resolves the maximum)."""
        if self.is_zero:
            return 0.0
        grid = np.linspace(0.0, 1.0, samples, endpoint=False)
        return max(abs(self.g(x)) for x in grid)

    def fstar_value(self, t: float, log_q: float) -> float:
        return self.g(math.log(t) / log_q) / (t * t)

    def fstar_deriv(self, t: float, log_q: float) -> float:
        x = math.log(t) / log_q
        return (-2.0 * self.g(x) + self.g_deriv(x) / log_q) / (t * t * t)

    def to_json_list(self) -> list[list[float]]:
        return [[a_j, b_j] for a_j, b_j in self.fourier_coeffs]


@dataclass(frozen=True)
class _TrialProfile:
    """f* + f_a for a candidate a, as fed to the transfer-matrix solver."""

    perturbation: PerturbationF0
    a: float
    log_q: float

    def value(self, t: float) -> float:
        return self.perturbation.fstar_value(t, self.log_q) + (
            self.a * self.a - 0.25
        ) / (t * t)


@dataclass(frozen=True)
class DeformedF:
    """The solved profile f = f* + f_{a_solved} over Q(sqrt(p**2 - 4)).

    `c` is the requested half-gap: the transfer spectrum of f is
    {q**(c - 1/2), q**(-c - 1/2)}, matching the power-law profile of gap
    k = 2c whenever 2c is an odd integer.  `a_solved` is the tuned base
    exponent (equal to c exactly when the perturbation vanishes) and
    `target_trace` the trace both profiles share.
    """

    perturbation: PerturbationF0
    c: float
    a_solved: float
    target_trace: float
    p: int

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise ValueError(f"half-gap c must be positive, got {self.c}")
        if self.a_solved <= 0:
            raise ValueError(f"base exponent must be positive, got {self.a_solved}")
        if self.p < 3:
            raise ValueError(f"trace parameter p must be >= 3, got {self.p}")
        object.__setattr__(self, "_log_q", math.log(float(QFieldContext(self.p).q)))

    @property
    def k(self) -> float:
        """Gap seen by the model layer; equals the system gap when 2c does."""
        return 2 * self.c

    @property
    def log_q(self) -> float:
        return self._log_q

    def value(self, t: float) -> float:
        base = (self.a_solved * self.a_solved - 0.25) / (t * t)
        return base + self.perturbation.fstar_value(t, self._log_q)

    def deriv(self, t: float) -> float:
        base = -2.0 * (self.a_solved * self.a_solved - 0.25) / (t * t * t)
        return base + self.perturbation.fstar_deriv(t, self._log_q)

    def to_json_dict(self) -> dict:
        return {
            "variant": "deformed",
            "p": self.p,
            "c": self.c,
            "a_solved": self.a_solved,
            "target_trace": self.target_trace,
            "fourier": self.perturbation.to_json_list(),
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "DeformedF":
        return cls(
            perturbation=PerturbationF0(
                tuple((pair[0], pair[1]) for pair in data["fourier"])
            ),
            c=float(data["c"]),
            a_solved=float(data["a_solved"]),
            target_trace=float(data["target_trace"]),
            p=int(data["p"]),
        )


PROFILE_DECODERS["deformed"] = DeformedF.from_json_dict


def target_trace_value(c: float, ctx: QFieldContext) -> float:
    """2 q**(-1/2) cosh(c log q) = q**(c - 1/2) + q**(-c - 1/2)."""
    log_q = math.log(float(ctx.q))
    return 2.0 * math.exp(-0.5 * log_q) * math.cosh(c * log_q)


def trace_H(fstar: PerturbationF0, a: float, ctx: QFieldContext) -> float:
    """Trace of T on the solution space of y'' = (f* + f_a) y.

    Propagated from t = 1 down to 1/q in the basis of initial conditions,
    so the value is u1(1/q) + u2'(1/q)/q; the companion determinant is
    pinned at 1/q and carries no information about f.
    """
    if a <= 0:
        raise ValueError(f"base exponent must be positive, got {a}")
    q = float(ctx.q)
    profile = _TrialProfile(fstar, a, math.log(q))
    matrix = transfer_matrix_T(profile, q)
    return float(matrix[0, 0] + matrix[1, 1])


def solve_a(
    fstar: PerturbationF0,
    c: float,
    ctx: QFieldContext,
    *,
    trace_tol: float = 1e-10,
) -> DeformedF:
    """Tune a so that trace_H(f*, a) equals the unperturbed target at c.

    Bisection on the bracket [c - 1/2, c + 1/2] isolates the root (the
    trace is strictly increasing in a when the perturbation is small), and
    a central-difference Newton polish brings the trace residual down to
    rounding level.  Rejects perturbations with max|g| > (c**2 - 1/4)/2:
    beyond that the bracket is not guaranteed to contain exactly one root.
    """
    if c <= 0.5:
        raise ValueError(f"half-gap c must exceed 1/2, got {c}")
    amplitude = fstar.max_abs_g()
    guard = 0.5 * (c * c - 0.25)
    if amplitude > guard:
        raise ValueError(
            f"perturbation amplitude {amplitude:.6g} exceeds the guard "
            f"{guard:.6g} for c = {c}"
        )
    target = target_trace_value(c, ctx)

    def residual(a: float) -> float:
        return trace_H(fstar, a, ctx) - target

    lo, hi = c - 0.5, c + 0.5
    r_lo, r_hi = residual(lo), residual(hi)
    if r_lo == 0.0:
        root = lo
    elif r_hi == 0.0:
        root = hi
    elif r_lo * r_hi > 0:
        raise ValueError(
            "no sign change across [c - 1/2, c + 1/2]: the perturbation "
            "moved the trace outside the bracket"
        )
    else:
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            r_mid = residual(mid)
            if r_mid == 0.0:
                lo = hi = mid
                break
            if r_lo * r_mid < 0:
                hi, r_hi = mid, r_mid
            else:
                lo, r_lo = mid, r_mid
        root = 0.5 * (lo + hi)

    step = 1e-6
    for _ in range(6):
        r_root = residual(root)
        if abs(r_root) <= 0.25 * trace_tol:
            break
        slope = (residual(root + step) - residual(root - step)) / (2.0 * step)
        if slope == 0.0:
            break
        delta = r_root / slope
        root -= delta
        if abs(delta) < 1e-13 * max(1.0, abs(root)):
            break

    achieved = trace_H(fstar, root, ctx)
    if abs(achieved - target) > trace_tol:
        raise ValueError(
            f"trace residual {abs(achieved - target):.3e} did not reach "
            f"{trace_tol:.1e}; the root finder stalled"
        )
    return DeformedF(
        perturbation=fstar,
        c=float(c),
        a_solved=float(root),
        target_trace=target,
        p=ctx.p,
    )


def _positive_on_grid(fn, lo: float, hi: float, count: int = 241) -> bool:
    """Strict positivity of fn.value on a geometric grid of [lo, hi]."""
    return all(fn.value(t) > 0.0 for t in np.geomspace(lo, hi, count))


def eig_positivity(df: DeformedF, ctx: QFieldContext | None = None) -> bool:
    """Whether both T-eigenfunctions of the solved profile are positive.

    The eigenvectors of the transfer matrix give initial conditions at
    t = 1; each eigenfunction is sign-normalized to be positive there and
    then sampled across one full period [1/q, q].  Positivity on a period
    propagates to all of (0, oo) because the function rescales by a
    positive eigenvalue under t -> t/q.
    """
    if ctx is None:
        ctx = QFieldContext(df.p)
    q = float(ctx.q)
    matrix = transfer_matrix_T(df, q)
    eigvals, eigvecs = np.linalg.eig(matrix)
    if np.max(np.abs(eigvals.imag)) > 1e-12 * np.max(np.abs(eigvals)):
        return False  # complex pair: no real eigenbasis, let alone a positive one
    for j in range(2):
        vec = np.real(eigvecs[:, j])
        value_at_one = vec[0]
        if value_at_one == 0.0:
            return False
        if value_at_one < 0.0:
            vec = -vec
        fn = OdeFn(df, vec[0], vec[1])
        if not _positive_on_grid(fn, 1.0 / q, q):
            return False
    return True


def recovered_base(df: DeformedF) -> float:
    """Read the base exponent back off the profile: g(0) = 0 forces
    f(1) = a**2 - 1/4, so a = sqrt(f(1) + 1/4).  Injectivity witness."""
    return math.sqrt(df.value(1.0) + 0.25)
