"""Solution spaces of the characteristic ODE and the transfer operator.

Scalar layer: solutions of y'' = f(t) y on t > 0, either exact monomials
(power-law profile) or numerically integrated functions (any self-similar
profile with q**2 f(q t) = f(t)).  The transfer operator (T y)(t) = y(t/q)
preserves the two-dimensional solution space; its matrix in the basis of
initial conditions at t = 1 has determinant exactly 1/q.

Vector layer: L-valued solutions of u'' = f u + A u.  The operator
(CT u)(t) = C u(t/q) acts on the 2m-dimensional solution space with simple
spectrum q**E(1), ..., q**E(2m); the eigenbasis consists of single-component
solutions y(t) e_i plus, in the top slot, a correction z(t) e_1 solving the
forced equation z'' = f z + y.  The form
Omega(u, v) = <u', v> - <u, v'> is t-independent and rescales by exactly 1/q
under CT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .exact import QFieldContext
from .model import HomogeneousF, ModelData

__all__ = [
    "MonomialFn",
    "OdeFn",
    "ForcedOdeFn",
    "LinCombFn",
    "TimeScaledFn",
    "wronskian",
    "w_basis",
    "transfer_matrix_T",
    "particular_solutions",
    "ESolution",
    "ct_eigenbasis",
    "omega",
    "omega_exact",
    "omega_matrix",
    "expected_omega_matrix",
    "ct_image",
    "ct_eigencheck_exact",
    "ct_eigencheck_residual",
    "verify_ct_omega_scaling",
    "qt_eigen_residual",
]


# ---------------------------------------------------------------------------
# scalar functions


@dataclass(frozen=True)
class MonomialFn:
    """coef * t**power with exact rational data.

    The exact fields matter: for the power-law profile all eigenvalue
    bookkeeping reduces to integer arithmetic on `power`, so exact checks
    read these attributes instead of sampling values.
    """

    coef: Fraction
    power: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "coef", Fraction(self.coef))
        object.__setattr__(self, "power", Fraction(self.power))

    def value(self, t: float) -> float:
        return float(self.coef) * t ** float(self.power)

    def deriv(self, t: float) -> float:
        if self.power == 0:
            return 0.0
        return float(self.coef * self.power) * t ** float(self.power - 1)


class OdeFn:
    """A solution of y'' = f(t) y, integrated lazily in log-time.

    The substitution tau = log t turns the equation into the first-order
    system Y' = (Y2, Y2 + t**2 f(t) Y1) with t = e^tau, in which the
    self-similar profiles become literally periodic coefficients; dense
    output segments are cached and extended on demand in either direction.
    """

    def __init__(
        self,
        profile,
        y0: float,
        dy0: float,
        *,
        t0: float = 1.0,
        rtol: float = 1e-12,
        atol: float = 1e-14,
    ) -> None:
        if t0 <= 0:
            raise ValueError("solutions live on t > 0")
        self.profile = profile
        self.rtol = rtol
        self.atol = atol
        self._tau0 = math.log(t0)
        self._init = np.array([float(y0), float(dy0) * t0])
        self._lo = self._hi = self._tau0
        self._state_lo = self._init.copy()
        self._state_hi = self._init.copy()
        self._segments: list[tuple[float, float, object]] = []

    def _rhs(self, tau: float, state):
        t = math.exp(tau)
        return (state[1], state[1] + t * t * self.profile.value(t) * state[0])

    def _extend(self, tau: float) -> None:
        margin = 0.5
        if tau > self._hi:
            target = tau + margin
            sol = solve_ivp(
                self._rhs,
                (self._hi, target),
                self._state_hi,
                method="DOP853",
                dense_output=True,
                rtol=self.rtol,
                atol=self.atol,
            )
            if not sol.success:
                raise RuntimeError(f"integration failed: {sol.message}")
            self._segments.append((self._hi, target, sol.sol))
            self._hi = target
            self._state_hi = sol.y[:, -1].copy()
        else:
            target = tau - margin
            sol = solve_ivp(
                self._rhs,
                (self._lo, target),
                self._state_lo,
                method="DOP853",
                dense_output=True,
                rtol=self.rtol,
                atol=self.atol,
            )
            if not sol.success:
                raise RuntimeError(f"integration failed: {sol.message}")
            self._segments.append((target, self._lo, sol.sol))
            self._lo = target
            self._state_lo = sol.y[:, -1].copy()

    def _state(self, t: float):
        if t <= 0:
            raise ValueError("solutions live on t > 0")
        tau = math.log(t)
        while not (self._lo <= tau <= self._hi):
            self._extend(tau)
        for lo, hi, interp in self._segments:
            if lo - 1e-12 <= tau <= hi + 1e-12:
                return interp(tau)
        return self._init  # tau is the base point and nothing was integrated yet

    def value(self, t: float) -> float:
        return float(self._state(t)[0])

    def deriv(self, t: float) -> float:
        return float(self._state(t)[1]) / t


class ForcedOdeFn:
    """The particular solution of x'' = f x + y with x(1) = x'(1) = 0,
    where y is itself the solution of y'' = f y with the given start data.

    Source and response are co-integrated as one four-dimensional linear
    system (in log-time, like OdeFn), which sidesteps any interpolation of
    the source into the quadrature."""

    def __init__(
        self,
        profile,
        source_y0: float,
        source_dy0: float,
        *,
        rtol: float = 1e-12,
        atol: float = 1e-14,
    ) -> None:
        self.profile = profile
        self.rtol = rtol
        self.atol = atol
        self._init = np.array([float(source_y0), float(source_dy0), 0.0, 0.0])
        self._lo = self._hi = 0.0  # tau of the base point t = 1
        self._state_lo = self._init.copy()
        self._state_hi = self._init.copy()
        self._segments: list[tuple[float, float, object]] = []

    def _rhs(self, tau: float, state):
        t = math.exp(tau)
        t2f = t * t * self.profile.value(t)
        y, wy, x, wx = state
        return (wy, wy + t2f * y, wx, wx + t2f * x + t * t * y)

    # the lazy-extension plumbing mirrors OdeFn
    _extend = OdeFn._extend
    _state = OdeFn._state

    def value(self, t: float) -> float:
        return float(self._state(t)[2])

    def deriv(self, t: float) -> float:
        return float(self._state(t)[3]) / t

    def source_value(self, t: float) -> float:
        return float(self._state(t)[0])


@dataclass(frozen=True)
class LinCombFn:
    """Pointwise linear combination of scalar functions."""

    funcs: tuple
    coeffs: tuple[float, ...]

    def value(self, t: float) -> float:
        return sum(c * f.value(t) for c, f in zip(self.coeffs, self.funcs))

    def deriv(self, t: float) -> float:
        return sum(c * f.deriv(t) for c, f in zip(self.coeffs, self.funcs))


@dataclass(frozen=True)
class TimeScaledFn:
    """prefactor * fn(time_scale * t); the building block of CT images."""

    fn: object
    prefactor: float
    time_scale: float

    def value(self, t: float) -> float:
        return self.prefactor * self.fn.value(self.time_scale * t)

    def deriv(self, t: float) -> float:
        return self.prefactor * self.time_scale * self.fn.deriv(self.time_scale * t)


def wronskian(f1, f2, t: float) -> float:
    return f1.value(t) * f2.deriv(t) - f1.deriv(t) * f2.value(t)


# ---------------------------------------------------------------------------
# scalar transfer operator


def transfer_matrix_T(profile, q: float, *, rtol: float = 1e-13, atol: float = 1e-15):
    """Matrix of (T y)(t) = y(t/q) on solutions of y'' = f y, in the basis
    of initial conditions (y(1), y'(1)) = (1, 0) and (0, 1).

    Column j holds ((T u_j)(1), (T u_j)'(1)) = (u_j(1/q), u_j'(1/q)/q).  The
    determinant equals 1/q exactly: T scales the (constant) Wronskian of a
    solution pair by the chain-rule factor 1/q.
    """
    if q <= 1:
        raise ValueError(f"scale q must exceed 1, got {q}")
    u1 = OdeFn(profile, 1.0, 0.0, rtol=rtol, atol=atol)
    u2 = OdeFn(profile, 0.0, 1.0, rtol=rtol, atol=atol)
    s = 1.0 / q
    return np.array(
        [
            [u1.value(s), u2.value(s)],
            [u1.deriv(s) / q, u2.deriv(s) / q],
        ]
    )


def w_basis(model: ModelData):
    """The T-eigenbasis (y+, y-) of the scalar solution space.

    For the power-law profile these are the exact monomials t**((1 -+ k)/2)
    with eigenvalues mu+- = q**((-1 +- k)/2).  For any other self-similar
    profile the eigenvectors are extracted from the transfer matrix at the
    same target eigenvalues — which exist precisely when the profile's trace
    has been matched — and returned as integrated solutions normalized to
    y(1) = 1 where possible.
    """
    k = model.k
    if isinstance(model.f, HomogeneousF):
        return (
            MonomialFn(Fraction(1), Fraction(1 - k, 2)),
            MonomialFn(Fraction(1), Fraction(1 + k, 2)),
        )
    ctx = model.context()
    q = float(ctx.q)
    matrix = transfer_matrix_T(model.f, q)
    out = []
    for exp in model.mu_exponents:
        lam = float(ctx.q_power(exp))
        # null vector of (M - lam I): rows are parallel, take the larger one
        rows = matrix - lam * np.eye(2)
        row = rows[0] if np.linalg.norm(rows[0]) >= np.linalg.norm(rows[1]) else rows[1]
        vec = np.array([row[1], -row[0]])
        residual = np.linalg.norm(matrix @ vec - lam * vec)
        if residual > 1e-8 * max(1.0, abs(lam)) * np.linalg.norm(vec):
            raise ValueError(
                "profile does not have the requested transfer spectrum "
                f"(eigen-residual {residual:.3e} at exponent {exp})"
            )
        if abs(vec[0]) > 1e-12 * np.linalg.norm(vec):
            vec = vec / vec[0]
        else:
            vec = vec / vec[1]
        out.append(OdeFn(model.f, vec[0], vec[1]))
    return tuple(out)


def particular_solutions(model: ModelData):
    """The corrections (z+, z-) that complete the top basis slot.

    z solves z'' = f z + y and is the unique such solution satisfying
    (qT) z = lambda z with lambda = mu * q**a(m); uniqueness holds because
    qT acts on the homogeneous ambiguity span{y+, y-} with eigenvalues
    q**E(1), q**E(2), both different from lambda.

    Power-law profile: z is exactly the monomial t**((5 -+ k)/2) / (4 -+ 2k)
    (the qT eigen-identity is re-checked here in integer arithmetic).  Other
    profiles: a zero-start particular solution is integrated, and its defect
    d = (qT)x - lambda x — a homogeneous solution — is removed by dividing
    its eigen-coordinates by q**E(1,2) - lambda.
    """
    k, m = model.k, model.m
    slots = (2 * m - 1, 2 * m)
    if isinstance(model.f, HomogeneousF):
        out = []
        for sign, slot in ((1, slots[0]), (-1, slots[1])):
            power = Fraction(5 - sign * k, 2)
            denom = 4 - sign * 2 * k
            # qT multiplies t**e by q**(1 - e); the correction must carry the
            # same CT weight as the top slot, i.e. 1 - e = E(slot)
            if 1 - power != model.system.E_of(slot):
                raise ValueError(
                    "power-law correction exponent does not meet its slot"
                )
            out.append(MonomialFn(Fraction(1, denom), power))
        return tuple(out)

    ctx = model.context()
    q = float(ctx.q)
    y_plus, y_minus = w_basis(model)
    basis_at_one = np.array(
        [
            [y_plus.value(1.0), y_minus.value(1.0)],
            [y_plus.deriv(1.0), y_minus.deriv(1.0)],
        ]
    )
    ambiguity_eigs = np.array(
        [
            float(ctx.q_power(model.system.E_of(1))),
            float(ctx.q_power(model.system.E_of(2))),
        ]
    )
    out = []
    for y_src, slot in ((y_plus, slots[0]), (y_minus, slots[1])):
        lam = float(ctx.q_power(model.system.E_of(slot)))
        forced = ForcedOdeFn(model.f, y_src.value(1.0), y_src.deriv(1.0))
        # defect of the zero-start solution under the eigen-equation; it
        # solves the homogeneous equation, so two numbers determine it
        s = 1.0 / q
        d_val = q * forced.value(s) - lam * forced.value(1.0)
        d_der = forced.deriv(s) - lam * forced.deriv(1.0)
        alpha = np.linalg.solve(basis_at_one, np.array([d_val, d_der]))
        coeffs = alpha / (lam - ambiguity_eigs)
        out.append(
            LinCombFn((forced, y_plus, y_minus), (1.0, coeffs[0], coeffs[1]))
        )
    return tuple(out)


def qt_eigen_residual(model: ModelData, fn, lam_exponent: int, ts=(1.3, 1.9, 2.6)) -> float:
    """Worst relative defect of (qT) fn = q**lam_exponent * fn over sample points."""
    ctx = model.context()
    q = float(ctx.q)
    lam = float(ctx.q_power(lam_exponent))
    worst = 0.0
    for t in ts:
        lhs = q * fn.value(t / q)
        rhs = lam * fn.value(t)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return worst


# ---------------------------------------------------------------------------
# L-valued solutions


@dataclass(frozen=True)
class ESolution:
    """A solution of u'' = f u + A u, stored sparsely by component index."""

    m: int
    components: tuple[tuple[int, object], ...]

    def value(self, t: float) -> np.ndarray:
        out = np.zeros(self.m)
        for idx, fn in self.components:
            out[idx] += fn.value(t)
        return out

    def deriv(self, t: float) -> np.ndarray:
        out = np.zeros(self.m)
        for idx, fn in self.components:
            out[idx] += fn.deriv(t)
        return out

    def scaled(self, factor: float) -> "ESolution":
        comps = tuple(
            (idx, LinCombFn((fn,), (factor,))) for idx, fn in self.components
        )
        return ESolution(self.m, comps)


def ct_eigenbasis(model: ModelData) -> tuple[ESolution, ...]:
    """The CT-eigenbasis (u_1+, u_1-, ..., u_m+, u_m-).

    Slot x of the returned tuple (1-based) has CT-eigenvalue q**E(x):
    u_i+- = y+- e_i for i < m, and the top pair picks up the forced
    correction on e_1, u_m+- = y+- e_m + z+- e_1.
    """
    y_plus, y_minus = w_basis(model)
    z_plus, z_minus = particular_solutions(model)
    m = model.m
    basis = []
    for i in range(1, m + 1):
        for y_fn, z_fn in ((y_plus, z_plus), (y_minus, z_minus)):
            comps = [(i - 1, y_fn)]
            if i == m:
                comps.append((0, z_fn))
            basis.append(ESolution(m, tuple(comps)))
    return tuple(basis)


def omega(model: ModelData, u: ESolution, v: ESolution, t: float = 1.0) -> float:
    """Omega(u, v) = <u'(t), v(t)> - <u(t), v'(t)>; t-independent because A
    is self-adjoint for the anti-diagonal inner product."""
    return model.inner(u.deriv(t), v.value(t)) - model.inner(u.value(t), v.deriv(t))


def omega_matrix(model: ModelData, basis: Sequence[ESolution], t: float = 1.0) -> np.ndarray:
    size = len(basis)
    out = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            out[i, j] = omega(model, basis[i], basis[j], t)
    return out


def expected_omega_matrix(model: ModelData) -> np.ndarray:
    """Frozen shape of Omega on the eigenbasis: anti-diagonal +-k*eps.

    Slot x pairs only with slot 2m+1-x, giving -k*eps for odd x and +k*eps
    for even x; every other entry vanishes identically.
    """
    size = 2 * model.m
    out = np.zeros((size, size))
    for x in range(1, size + 1):
        out[x - 1, size - x] = -model.k * model.eps if x % 2 == 1 else model.k * model.eps
    return out


def omega_exact(model: ModelData, u: ESolution, v: ESolution) -> dict[Fraction, Fraction]:
    """Omega(u, v) in exact rational arithmetic, as the power -> coefficient
    table of sum_p c_p t**p.

    Only solutions whose components are all monomials qualify (the power-law
    profile); anything else raises.  The pairing <e_i, e_j> is eps when
    i + j = m - 1 and zero otherwise, so each surviving component pair
    contributes eps * c_u * c_v * (e_u - e_v) at power e_u + e_v - 1.  A
    conserved pairing collapses to {} (identically zero) or {0: constant},
    and the caller can assert either with no tolerance at all.
    """
    for sol in (u, v):
        for _, fn in sol.components:
            if not isinstance(fn, MonomialFn):
                raise ValueError("exact omega requires monomial components")
    table: dict[Fraction, Fraction] = {}
    for idx_u, fu in u.components:
        for idx_v, fv in v.components:
            if idx_u + idx_v != model.m - 1:
                continue
            weight = model.eps * fu.coef * fv.coef * (fu.power - fv.power)
            power = fu.power + fv.power - 1
            table[power] = table.get(power, Fraction(0)) + weight
    return {p: c for p, c in table.items() if c != 0}


def ct_image(model: ModelData, u: ESolution) -> ESolution:
    """(CT u)(t) = C u(t/q) as a new solution object."""
    ctx = model.context()
    q = float(ctx.q)
    comps = tuple(
        (
            idx,
            TimeScaledFn(
                fn,
                prefactor=float(ctx.q_power(model.a[idx])),
                time_scale=1.0 / q,
            ),
        )
        for idx, fn in u.components
    )
    return ESolution(u.m, comps)


def ct_eigencheck_exact(model: ModelData) -> bool:
    """Integer-arithmetic proof that slot x of the eigenbasis has
    CT-eigenvalue q**E(x), valid for the power-law profile.

    Every basis component is a monomial c*t**e sitting in slot e_j, and CT
    multiplies it by q**(a(j) - e); the check is the tuple of integer
    equalities a(j) - e = E(x) over all components of all 2m slots.
    """
    basis = ct_eigenbasis(model)
    for x, u in enumerate(basis, start=1):
        target = model.system.E_of(x)
        for idx, fn in u.components:
            if not isinstance(fn, MonomialFn):
                raise ValueError("exact eigencheck requires the power-law profile")
            weight = model.a[idx] - fn.power
            if weight.denominator != 1 or int(weight) != target:
                return False
    return True


def ct_eigencheck_residual(
    model: ModelData,
    basis: Sequence[ESolution] | None = None,
    ts: Sequence[float] = (1.0, 1.7, 2.4),
) -> float:
    """Numeric route to the same eigen-statement: worst relative defect of
    (CT)u_x = q**E(x) u_x over the basis and sample points."""
    if basis is None:
        basis = ct_eigenbasis(model)
    ctx = model.context()
    worst = 0.0
    for x, u in enumerate(basis, start=1):
        lam = float(ctx.q_power(model.system.E_of(x)))
        image = ct_image(model, u)
        for t in ts:
            lhs = image.value(t)
            rhs = lam * u.value(t)
            scale = max(1.0, float(np.linalg.norm(rhs)))
            worst = max(worst, float(np.linalg.norm(lhs - rhs)) / scale)
            lhs_d = image.deriv(t)
            rhs_d = lam * u.deriv(t)
            scale_d = max(1.0, float(np.linalg.norm(rhs_d)))
            worst = max(worst, float(np.linalg.norm(lhs_d - rhs_d)) / scale_d)
    return worst


def verify_ct_omega_scaling(
    model: ModelData,
    basis: Sequence[ESolution] | None = None,
    ts: Sequence[float] = (1.0, 1.6, 2.3),
) -> tuple[bool, float]:
    """(CT)*Omega = Omega/q, certified twice.

    Exact route: Omega pairs slot x only with slot 2m+1-x, and axiom (b)
    makes the eigen-weights of such a pair multiply to exactly
    q**(E(x) + E(2m+1-x)) = q**-1 — an integer statement.  Numeric route:
    Omega is recomputed on explicit CT images at several t and compared
    entrywise with Omega/q.  Returns (exact_ok, worst numeric residual).
    """
    size = 2 * model.m
    exact_ok = all(
        model.system.E_of(x) + model.system.E_of(size + 1 - x) == -1
        for x in range(1, size + 1)
    )
    if basis is None:
        basis = ct_eigenbasis(model)
    images = [ct_image(model, u) for u in basis]
    q = float(model.context().q)
    worst = 0.0
    for t in ts:
        direct = omega_matrix(model, basis, t)
        moved = omega_matrix(model, images, t)
        worst = max(worst, float(np.max(np.abs(moved - direct / q))))
    return exact_ok, worst
