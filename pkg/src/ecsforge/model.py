"""Model data assembled from a spectral system.

From a spectral system of order m and a trace parameter p this builds the
finite-dimensional ingredients of an (m+2)-dimensional plane-wave model:

* the anti-diagonal inner product <e_i, e_j> = eps when i + j = m + 1 on
  the span L of e_1..e_m (signature split evenly up to the middle vector);
* the rank-one shift A with A e_m = e_1 and A e_j = 0 otherwise;
* the diagonal scaling C = diag(q**a(i)) with integer exponents
  a(i) = E(2i-1) + (1-k)/2, an isometry of the inner product conjugating
  A to q**2 A;
* a curvature profile f(t), by default the power law (k**2 - 1)/(4 t**2).

All structural identities here are checked in integer or quadratic-field
arithmetic; nothing numeric enters until the geometry layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .exact import QFieldContext, QFieldElement
from .spectral import ZSpectralSystem

__all__ = [
    "HomogeneousF",
    "ModelData",
    "build_model",
    "check_model",
    "kappa",
    "bridging_checks",
    "conjugation_checks",
    "isometry_checks",
    "PROFILE_DECODERS",
]


@dataclass(frozen=True)
class HomogeneousF:
    """Power-law profile f(t) = (k**2 - 1) / (4 t**2).

    Exactly self-similar: q**2 * f(q*t) = f(t) for every scale q.  The
    associated solution space of y'' = f y is spanned by the monomials
    t**((1 -+ k)/2).
    """

    k: int

    def __post_init__(self) -> None:
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError(f"profile gap k must be odd and positive, got {self.k}")

    def value(self, t):
        return (self.k * self.k - 1) / (4.0 * t * t)

    def deriv(self, t):
        return -(self.k * self.k - 1) / (2.0 * t * t * t)

    def to_json_dict(self) -> dict:
        return {"variant": "homogeneous", "k": self.k}

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "HomogeneousF":
        return cls(k=int(data["k"]))


# profile decoders by JSON variant; the deformation module registers its own
PROFILE_DECODERS: dict[str, Callable[[Mapping], object]] = {
    "homogeneous": HomogeneousF.from_json_dict,
}


@dataclass(frozen=True)
class ModelData:
    """A complete model: dimension n = m + 2, trace parameter p, sign eps,
    spectral system, scaling exponents a(1..m) and curvature profile f."""

    n: int
    p: int
    eps: int
    system: ZSpectralSystem
    a: tuple[int, ...]
    f: object

    @property
    def m(self) -> int:
        return self.n - 2

    @property
    def k(self) -> int:
        return self.system.k

    @property
    def mu_exponents(self) -> tuple[int, int]:
        """Exponents of mu+- = q**((-1 +- k)/2), the scalar transfer
        eigenvalues of the power-law profile."""
        return ((self.k - 1) // 2, -(self.k + 1) // 2)

    def context(self) -> QFieldContext:
        ctx = getattr(self, "_ctx", None)
        if ctx is None:
            ctx = QFieldContext(self.p)
            object.__setattr__(self, "_ctx", ctx)
        return ctx

    # -- inner product and maps on L -----------------------------------------

    def inner(self, v: Sequence[float], w: Sequence[float]) -> float:
        """<v, w> = eps * sum_i v_i w_{m+1-i} (anti-diagonal pairing)."""
        m = self.m
        return self.eps * sum(v[i] * w[m - 1 - i] for i in range(m))

    def h_rows(self) -> tuple[tuple[int, ...], ...]:
        m = self.m
        return tuple(
            tuple(self.eps if i + j == m - 1 else 0 for j in range(m))
            for i in range(m)
        )

    def shift_rows(self) -> tuple[tuple[int, ...], ...]:
        """The rank-one map A in the e-basis: a 1 in entry (1, m)."""
        m = self.m
        return tuple(
            tuple(1 if (i, j) == (0, m - 1) else 0 for j in range(m))
            for i in range(m)
        )

    def apply_shift(self, v: Sequence[float]) -> list[float]:
        out = [0.0] * self.m
        out[0] = v[self.m - 1]
        return out

    # -- serialization ----------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "schema": "ecs-forge/1",
            "n": self.n,
            "p": self.p,
            "eps": self.eps,
            "a": list(self.a),
            "system": self.system.to_json_dict(),
            "f": self.f.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "ModelData":
        if data.get("schema") != "ecs-forge/1":
            raise ValueError(f"unsupported schema {data.get('schema')!r}")
        system = ZSpectralSystem.from_json_dict(data["system"])
        f_data = data["f"]
        decoder = PROFILE_DECODERS.get(f_data.get("variant"))
        if decoder is None:
            raise ValueError(f"unknown profile variant {f_data.get('variant')!r}")
        model = cls(
            n=int(data["n"]),
            p=int(data["p"]),
            eps=int(data["eps"]),
            system=system,
            a=tuple(int(v) for v in data["a"]),
            f=decoder(f_data),
        )
        failures = check_model(model)
        if failures:
            raise ValueError("; ".join(failures))
        return model


def build_model(
    system: ZSpectralSystem,
    p: int,
    eps: int = 1,
    f: object | None = None,
) -> ModelData:
    """Assemble and fully check a model over the given spectral system.

    The exponents a(i) = E(2i-1) + (1-k)/2 are derived, never taken on
    faith; the default profile is the power law tied to the system gap.
    """
    system.validate()
    m, k = system.m, system.k
    exponents = tuple(system.E_of(2 * i - 1) + (1 - k) // 2 for i in range(1, m + 1))
    model = ModelData(
        n=m + 2,
        p=p,
        eps=eps,
        system=system,
        a=exponents,
        f=f if f is not None else HomogeneousF(k),
    )
    failures = check_model(model)
    if failures:
        raise ValueError("; ".join(failures))
    return model


def check_model(model: ModelData) -> tuple[str, ...]:
    """Every structural identity of the model, in exact arithmetic.

    Covers: spectral axioms, dimension bookkeeping, the derived properties
    a(1) = 1 and a(i) + a(m+1-i) = 0, both halves of the bridging identity,
    the conjugation exponent a(1) - a(m) = 2 behind C A C^-1 = q**2 A, and
    profile consistency.  Returns one message per failure, empty when sound.
    """
    failures = list(model.system.axiom_failures())
    m, k = model.system.m, model.system.k
    if model.n != m + 2:
        failures.append(f"dimension n = {model.n} but system order gives {m + 2}")
    if model.n % 2 == 0 or model.n < 5:
        failures.append(f"dimension n must be odd and >= 5, got {model.n}")
    if model.eps not in (1, -1):
        failures.append(f"eps must be +-1, got {model.eps}")
    if model.p < 3:
        failures.append(f"trace parameter p must be >= 3, got {model.p}")
    if len(model.a) != m:
        failures.append(f"a has {len(model.a)} entries, expected {m}")
    if len(model.a) != m or len(model.system.E) != 2 * m:
        return tuple(failures)  # slot accessors below would be meaningless

    a = model.a
    if a[0] != 1:
        failures.append(f"a(1) = {a[0]}, expected 1")
    for i in range(1, m + 1):
        if a[i - 1] + a[m - i] != 0:
            failures.append(f"a({i}) + a({m + 1 - i}) = {a[i - 1] + a[m - i]}, not 0")
    # bridging identity, both halves, as ordered integer tuples
    upper = tuple(a[i - 1] + (k - 1) // 2 for i in range(1, m + 1))
    lower = tuple(a[i - 1] - (k + 1) // 2 for i in range(1, m + 1))
    if upper != tuple(model.system.E_of(2 * i - 1) for i in range(1, m + 1)):
        failures.append("bridging identity fails on odd slots: a(i) + (k-1)/2 != E(2i-1)")
    if lower != tuple(model.system.E_of(2 * i) for i in range(1, m + 1)):
        failures.append("bridging identity fails on even slots: a(i) - (k+1)/2 != E(2i)")
    if a[0] - a[m - 1] != 2:
        failures.append(f"a(1) - a(m) = {a[0] - a[m - 1]}, conjugation needs 2")
    profile_k = getattr(model.f, "k", None)
    if profile_k is not None and profile_k != k:
        failures.append(f"profile gap {profile_k} disagrees with system gap {k}")
    profile_p = getattr(model.f, "p", None)
    if profile_p is not None and profile_p != model.p:
        failures.append(
            f"profile trace parameter {profile_p} disagrees with model p = {model.p}"
        )
    return tuple(failures)


def kappa(model: ModelData, t: float, v: Sequence[float]) -> float:
    """The tt-metric coefficient kappa(t, v) = f(t) <v, v> + <A v, v>.

    The shift term reduces to eps * v_m**2 because A only moves e_m to e_1.
    """
    vm = v[model.m - 1]
    return model.f.value(t) * model.inner(v, v) + model.eps * vm * vm


# ---------------------------------------------------------------------------
# exact identity checks (dual routes; the cheap integer route lives in
# check_model, the field-arithmetic routes below recompute the same content
# with actual matrix products over Q(sqrt(d)))


def _field_matmul(
    left: Sequence[Sequence[QFieldElement]],
    right: Sequence[Sequence[QFieldElement]],
    ctx: QFieldContext,
) -> list[list[QFieldElement]]:
    rows, inner_dim, cols = len(left), len(right), len(right[0])
    out = []
    for i in range(rows):
        row = []
        for j in range(cols):
            acc = ctx.zero
            for l in range(inner_dim):
                acc = acc + left[i][l] * right[l][j]
            row.append(acc)
        out.append(row)
    return out


def _scaling_matrix(model: ModelData, invert: bool = False):
    ctx = model.context()
    sign = -1 if invert else 1
    return [
        [ctx.q_power(sign * model.a[i]) if i == j else ctx.zero for j in range(model.m)]
        for i in range(model.m)
    ]


def _int_matrix_to_field(rows, ctx: QFieldContext):
    return [[ctx.element(v) for v in row] for row in rows]


def conjugation_checks(model: ModelData) -> dict[str, bool]:
    """C A C**-1 = q**2 A, certified twice.

    The exponent route checks a(1) - a(m) = 2 (all other entries of A
    vanish); the field route multiplies the three matrices out over
    Q(sqrt(d)) and compares every entry with q**2 * A.
    """
    ctx = model.context()
    exponent_route = model.a[0] - model.a[model.m - 1] == 2
    shift = _int_matrix_to_field(model.shift_rows(), ctx)
    product = _field_matmul(
        _field_matmul(_scaling_matrix(model), shift, ctx),
        _scaling_matrix(model, invert=True),
        ctx,
    )
    q2 = ctx.q_power(2)
    field_route = all(
        product[i][j] == q2 * shift[i][j]
        for i in range(model.m)
        for j in range(model.m)
    )
    return {"exponent_route": exponent_route, "field_route": field_route}


def isometry_checks(model: ModelData) -> dict[str, bool]:
    """C^T h C = h: exponent route a(i) + a(m+1-i) = 0, then the matrix
    product over the field."""
    ctx = model.context()
    m = model.m
    exponent_route = all(model.a[i] + model.a[m - 1 - i] == 0 for i in range(m))
    h = _int_matrix_to_field(model.h_rows(), ctx)
    scaling = _scaling_matrix(model)
    # C is diagonal, so C^T = C
    product = _field_matmul(_field_matmul(scaling, h, ctx), scaling, ctx)
    field_route = all(
        product[i][j] == h[i][j] for i in range(m) for j in range(m)
    )
    return {"exponent_route": exponent_route, "field_route": field_route}


def bridging_checks(model: ModelData) -> dict[str, bool]:
    """mu+- * q**a(i) lands exactly on q**E(2i-1), q**E(2i).

    The tuple route compares integer exponents; the field route multiplies
    genuine field elements and compares values, which also exercises the
    power cache across the full exponent range of the system.
    """
    m = model.m
    exp_plus, exp_minus = model.mu_exponents
    upper = tuple(model.a[i] + exp_plus for i in range(m))
    lower = tuple(model.a[i] + exp_minus for i in range(m))
    odd_slots = tuple(model.system.E_of(2 * i - 1) for i in range(1, m + 1))
    even_slots = tuple(model.system.E_of(2 * i) for i in range(1, m + 1))
    tuple_route = upper == odd_slots and lower == even_slots
    ctx = model.context()
    mu_plus = ctx.q_power(exp_plus)
    mu_minus = ctx.q_power(exp_minus)
    field_route = all(
        mu_plus * ctx.q_power(model.a[i]) == ctx.q_power(odd_slots[i])
        and mu_minus * ctx.q_power(model.a[i]) == ctx.q_power(even_slots[i])
        for i in range(m)
    ) and mu_plus * mu_minus == ctx.q_inv
    return {"tuple_route": tuple_route, "field_route": field_route}
