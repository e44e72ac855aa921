"""Balls, coefficient fields ``x -> A(x)`` and the chord geometry along ``e_d``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "Ball",
    "CoefficientField",
    "identity_field",
    "diagonal_field",
    "rotation_scale_field",
    "builtin_fields",
    "field_by_name",
    "ChordGeometry",
    "chord_geometry",
    "delta_D",
]

KIND_CONSTANT = 0
KIND_ROTATION_SCALE = 1


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        if len(c) < 2:
            raise ValueError("balls live in dimension d >= 2")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius!r}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def centered(cls, d: int, radius: float = 1.0) -> "Ball":
        return cls((0.0,) * d, radius)

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def z(self) -> np.ndarray:
        return np.asarray(self.center)

    def delta(self, x) -> float:
        return delta_D(x, self)

    def contains(self, x) -> bool:
        return float(np.linalg.norm(np.asarray(x, float) - self.z)) < self.radius


def delta_D(x, ball: Ball):
    """Distance ``r - |x - z|`` to the sphere (negative outside)."""
    x = np.asarray(x, dtype=float)
    return ball.radius - np.linalg.norm(x - ball.z, axis=-1)


@njit(cache=True, nogil=True)
def field_matrix(kind, mat, params, x, out):
    d = x.shape[0]
    if kind == KIND_CONSTANT:
        for i in range(d):
            for j in range(d):
                out[i, j] = mat[i, j]
        return
    # rotation in the (x_1, x_2) plane times a positive scale, applied to mat
    ang_arg = 0.0
    sc_arg = 0.0
    for k in range(d):
        ang_arg += params[3 + k] * x[k]
        sc_arg += params[3 + d + k] * x[k]
    ang = params[0] * math.sin(ang_arg)
    s = params[1] + params[2] * math.sin(sc_arg)
    c = math.cos(ang)
    sn = math.sin(ang)
    for j in range(d):
        m0 = mat[0, j]
        m1 = mat[1, j]
        out[0, j] = s * (c * m0 - sn * m1)
        out[1, j] = s * (sn * m0 + c * m1)
        for i in range(2, d):
            out[i, j] = s * mat[i, j]


@njit(cache=True)
def _field_many(kind, mat, params, xs, out):
    for n in range(xs.shape[0]):
        field_matrix(kind, mat, params, xs[n], out[n])


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """A continuous matrix field with ``|a_ij| <= eta1`` and ``det A >= eta2``.

    Only the two parametric families understood by the compiled simulation
    kernel are supported: constant matrices and a smooth rotation-and-scale
    modulation of a constant matrix.
    """

    name: str
    d: int
    kind: int
    matrix: np.ndarray
    params: np.ndarray
    eta1: float
    eta2: float
    description: str = ""
    spec: dict = field(default_factory=dict)

    def eval(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"expected a point in dimension {self.d}")
        out = np.empty((self.d, self.d))
        field_matrix(self.kind, self.matrix, self.params, x, out)
        return out

    __call__ = eval

    def eval_many(self, xs) -> np.ndarray:
        xs = np.ascontiguousarray(np.atleast_2d(xs), dtype=float)
        out = np.empty((xs.shape[0], self.d, self.d))
        _field_many(self.kind, self.matrix, self.params, xs, out)
        return out

    def column(self, x, i: int) -> np.ndarray:
        """``a_i(x)``, the i-th column (0-based)."""
        return self.eval(x)[:, i]

    @property
    def is_constant(self) -> bool:
        return self.kind == KIND_CONSTANT

    def probe(self, n: int = 10_000, seed: int = 0, box: float = 5.0) -> dict:
        """Check the ellipticity hypotheses at random points; returns observed extremes."""
        rng = np.random.default_rng(seed)
        xs = rng.uniform(-box, box, size=(n, self.d))
        mats = self.eval_many(xs)
        max_entry = float(np.abs(mats).max())
        min_det = float(np.linalg.det(mats).min())
        # modulus of continuity along shrinking pairs
        h = [1e-1, 1e-2, 1e-3, 1e-4]
        dirs = rng.normal(size=(n, self.d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        moduli = [float(np.abs(self.eval_many(xs + s * dirs) - mats).max()) for s in h]
        return {
            "max_entry": max_entry,
            "min_det": min_det,
            "entry_bound_ok": max_entry <= self.eta1 * (1 + 1e-12),
            "det_bound_ok": min_det >= self.eta2 * (1 - 1e-12),
            "continuity_moduli": moduli,
        }

    def to_dict(self) -> dict:
        return {"name": self.name, "d": self.d, **self.spec}


def identity_field(d: int = 2) -> CoefficientField:
    return CoefficientField(
        "identity", d, KIND_CONSTANT, np.eye(d), np.zeros(1), 1.0, 1.0,
        "A(x) = I", {"family": "identity"},
    )


def diagonal_field(diag) -> CoefficientField:
    diag = np.asarray(diag, dtype=float)
    if np.any(diag <= 0):
        raise ValueError("diagonal entries must be positive")
    d = diag.size
    name = "diagonal(" + ",".join(f"{v:g}" for v in diag) + ")"
    return CoefficientField(
        name, d, KIND_CONSTANT, np.diag(diag), np.zeros(1),
        float(diag.max()), float(np.prod(diag)),
        "constant anisotropic diagonal matrix", {"family": "diagonal", "diag": diag.tolist()},
    )


def rotation_scale_field(
    d: int = 2,
    angle_amplitude: float = 0.6,
    scale_mid: float = 1.25,
    scale_var: float = 0.75,
    angle_wave=None,
    scale_wave=None,
) -> CoefficientField:
    """``A(x) = s(x) R(x)`` with ``R(x)`` a rotation of the (x1, x2) plane.

    ``s(x) = scale_mid + scale_var * sin(scale_wave . x)`` lies in
    ``[scale_mid - scale_var, scale_mid + scale_var]``; the defaults give
    ``s`` in [0.5, 2], hence ``|a_ij| <= 2`` and ``det A = s^d >= 2^-d``.
    """
    if scale_var < 0 or scale_mid - scale_var <= 0:
        raise ValueError("scale must stay positive")
    u = np.asarray(angle_wave if angle_wave is not None else [1.3] + [0.7] * (d - 1), float)
    w = np.asarray(scale_wave if scale_wave is not None else [0.9] + [1.7] * (d - 1), float)
    if u.size != d or w.size != d:
        raise ValueError("wave vectors must have length d")
    params = np.concatenate([[angle_amplitude, scale_mid, scale_var], u, w])
    smax = scale_mid + scale_var
    smin = scale_mid - scale_var
    return CoefficientField(
        "rotation_scale", d, KIND_ROTATION_SCALE, np.eye(d), params,
        smax, smin**d,
        "s(x) R(x) with s in [%g, %g]" % (smin, smax),
        {
            "family": "rotation_scale",
            "angle_amplitude": angle_amplitude,
            "scale_mid": scale_mid,
            "scale_var": scale_var,
            "angle_wave": u.tolist(),
            "scale_wave": w.tolist(),
        },
    )


def builtin_fields(d: int = 2) -> list[CoefficientField]:
    """Identity, ``diag(2, 1, ..., 1)`` and the rotation-and-scale field."""
    return [
        identity_field(d),
        diagonal_field([2.0] + [1.0] * (d - 1)),
        rotation_scale_field(d),
    ]


def field_by_name(name: str, d: int = 2) -> CoefficientField:
    table = {
        "identity": lambda: identity_field(d),
        "diagonal": lambda: diagonal_field([2.0] + [1.0] * (d - 1)),
        "rotation_scale": lambda: rotation_scale_field(d),
    }
    try:
        return table[name]()
    except KeyError:
        raise ValueError(f"unknown field {name!r}; choose from {sorted(table)}") from None


@dataclass(frozen=True)
class ChordGeometry:
    """Half-chord lengths of the line ``x + t e_d`` through the spheres of radii
    ``r - eps``, ``r - eps + eps/N``, ``r - 3eps/4``, ``r - eps/2``, ``r``,
    ``r + eps``, ``r + eps + eta_ring`` (clamped at 0)."""

    S1: float
    Sstar: float
    Sdstar: float
    Stristar: float
    S2: float
    S3: float
    S4: float
    q: float
    delta: float
    xd: float
    x_tilde_norm: float

    def chain(self) -> tuple:
        return (self.S1, self.Sstar, self.Sdstar, self.Stristar, self.S2, self.S3, self.S4)


def _half_chord(rho: float, xt2: float) -> float:
    return math.sqrt(max(rho * rho - xt2, 0.0))


def chord_geometry(x, r: float, eps: float, eta_ring: float, N: float = 4.0) -> ChordGeometry:
    """Chord values for a point ``x`` of the open ball ``B(0, r)``.

    ``x_d`` is reflected to be non-negative.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("x must be a point in dimension >= 2")
    if not (0 < eps <= r / 4):
        raise ValueError("need 0 < eps <= r/4")
    if not (0 < eta_ring <= eps):
        raise ValueError("need 0 < eta_ring <= eps")
    if N < 4:
        raise ValueError("need N >= 4")
    norm = float(np.linalg.norm(x))
    if norm >= r:
        raise ValueError("x must lie in the open ball")
    xt2 = float(np.dot(x[:-1], x[:-1]))
    xd = abs(float(x[-1]))
    return ChordGeometry(
        S1=_half_chord(r - eps, xt2),
        Sstar=_half_chord(r - eps + eps / N, xt2),
        Sdstar=_half_chord(r - 0.75 * eps, xt2),
        Stristar=_half_chord(r - 0.5 * eps, xt2),
        S2=_half_chord(r, xt2),
        S3=_half_chord(r + eps, xt2),
        S4=_half_chord(r + eps + eta_ring, xt2),
        q=r * r - (r - eps) ** 2,
        delta=r - norm,
        xd=xd,
        x_tilde_norm=math.sqrt(xt2),
    )
