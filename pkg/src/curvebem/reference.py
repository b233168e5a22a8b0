"""Exact solutions and off-surface evaluation of layer potentials.

* spherical Bessel functions by Miller's downward recurrence (j_n) and the
  upward recurrence (y_n),
* the sound-soft Mie series for plane-wave scattering by the unit sphere,
* harmonic interior test fields for the Laplace problems,
* representation-formula evaluation u_h(x) of a computed density.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .quadrature import gauss_triangle


class DomainError(ValueError):
    pass


class RangeError(OverflowError):
    pass


class NearFieldPolicyError(ValueError):
    pass


class ResonanceWarning(UserWarning):
    pass


def spherical_bessel_all(nmax, z):
    """Arrays (j_0..j_nmax, y_0..y_nmax) at a real z in (0, 100]."""
    if not 0 <= nmax <= 200:
        raise ValueError(f"order {nmax} outside [0, 200]")
    z = float(z)
    if not 0.0 < z <= 100.0:
        raise ValueError(f"argument {z} outside (0, 100]")
    start = nmax + int(z) + 40
    j = np.zeros(start + 2)
    j[start] = 1e-300
    for n in range(start, 0, -1):
        j[n - 1] = (2 * n + 1) / z * j[n] - j[n + 1]
        if abs(j[n - 1]) > 1e100:
            j[n - 1 :] *= 1e-100
    big = np.abs(j).max()
    norm = big * math.sqrt(np.sum((2 * np.arange(start + 2) + 1) * (j / big) ** 2))
    j = j[: max(nmax, 1) + 1] / norm
    # the normalization fixes |j| only; take the sign from j_0 or, near its zeros, j_1
    s, c = math.sin(z), math.cos(z)
    j0, j1 = s / z, s / z**2 - c / z
    ref, val = (j0, j[0]) if abs(j0) >= abs(j1) else (j1, j[1])
    if ref * val < 0:
        j = -j
    j = j[: nmax + 1]
    y = np.empty(nmax + 1)
    y[0] = -c / z
    if nmax >= 1:
        y[1] = -c / z**2 - s / z
    with np.errstate(over="ignore", invalid="ignore"):  # overflow is reported below
        for n in range(1, nmax):
            y[n + 1] = (2 * n + 1) / z * y[n] - y[n - 1]
    if not np.all(np.isfinite(y)):
        raise RangeError(f"y_n overflow for n <= {nmax}, z = {z}")
    return j, y


def spherical_bessel(n, z):
    """(j_n(z), y_n(z))."""
    j, y = spherical_bessel_all(n, z)
    return float(j[n]), float(y[n])


def spherical_bessel_derivatives(nmax, z):
    """(j, y, j', y') for orders 0..nmax."""
    j, y = spherical_bessel_all(nmax + 1, z)
    n = np.arange(nmax + 1)
    jd = np.empty(nmax + 1)
    yd = np.empty(nmax + 1)
    jd[0], yd[0] = -j[1], -y[1]
    jd[1:] = j[:nmax] - (n[1:] + 1) / z * j[1 : nmax + 1]
    yd[1:] = y[:nmax] - (n[1:] + 1) / z * y[1 : nmax + 1]
    return j[: nmax + 1], y[: nmax + 1], jd, yd


def legendre_all(nmax, t):
    """P_0..P_nmax at points t, shape (nmax + 1, ...)."""
    t = np.asarray(t, dtype=float)
    P = np.empty((nmax + 1,) + t.shape)
    P[0] = 1.0
    if nmax >= 1:
        P[1] = t
    for n in range(1, nmax):
        P[n + 1] = ((2 * n + 1) * t * P[n] - n * P[n - 1]) / (n + 1)
    return P


def dirichlet_resonances(k, radius=1.0, tol=1e-8):
    """Orders n with j_n(k R) = 0: k^2 is then a Dirichlet eigenvalue of the ball.

    Zeros of j_n lie beyond z = n, so only orders n < kR are examined, and
    j_n is compared with |h_n| to make the test scale-free.
    """
    z = k * radius
    nmax = int(math.floor(z))
    j, y = spherical_bessel_all(nmax, z)
    return [n for n in range(nmax + 1) if n < z and abs(j[n]) < tol * math.hypot(j[n], y[n])]


def check_resonance(k, radius=1.0):
    """Warn when k^2 is an interior Dirichlet eigenvalue of the sphere.

    The exterior field stays well defined, but the single-layer operator is
    then singular on the sphere; the check runs instead of assuming.
    """
    hits = dirichlet_resonances(k, radius)
    if hits:
        warnings.warn(
            f"k = {k:g} is an interior Dirichlet eigenvalue of the radius-{radius:g} ball "
            f"(j_n(kR) = 0 for n = {hits}); the single-layer operator is not invertible there",
            ResonanceWarning,
            stacklevel=2,
        )
    return hits


@dataclass
class PlaneWave:
    k: float
    direction: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        self.direction = np.asarray(self.direction, dtype=float)
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-12:
            raise ValueError("plane-wave direction must be a unit vector")

    def __call__(self, x):
        return np.exp(1j * self.k * (np.asarray(x) @ self.direction))


@dataclass
class MieSeries:
    """Sound-soft unit-sphere scattering coefficients j_n(k) / h_n(k)."""

    k: float
    N: int | None = None

    def __post_init__(self):
        if self.N is None:
            self.N = int(math.ceil(self.k)) + 20
        j, y = spherical_bessel_all(self.N, self.k)
        self.ratio = j / (j + 1j * y)


def mie_scattered_field(series, x, d=(1.0, 0.0, 0.0)):
    """u_scat(x) = -sum (2n+1) i^n [j_n(k)/h_n(k)] h_n(k|x|) P_n(x_hat . d)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = np.asarray(d, dtype=float)
    r = np.linalg.norm(x, axis=1)
    if np.any(r < 1.0 - 1e-12):
        raise DomainError("Mie series evaluated inside the unit sphere")
    N = series.N
    cos_t = np.clip((x @ d) / r, -1.0, 1.0)
    P = legendre_all(N, cos_t)
    n = np.arange(N + 1)
    coef = -(2 * n + 1) * (1j**n) * series.ratio
    out = np.empty(len(x), dtype=complex)
    for i, ri in enumerate(r):
        jr, yr = spherical_bessel_all(N, series.k * ri)
        out[i] = np.sum(coef * (jr + 1j * yr) * P[:, i])
    return out


def mie_last_term(series, x, d=(1.0, 0.0, 0.0)):
    """Magnitude of the last retained series term relative to the sum."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    N = series.N
    jr, yr = spherical_bessel_all(N, series.k * r)
    P = legendre_all(N, np.dot(x, d) / r)
    term = abs((2 * N + 1) * series.ratio[N] * (jr[N] + 1j * yr[N]) * P[N])
    return term / abs(mie_scattered_field(series, x, d)[0])


_HARMONIC = {
    "x1": lambda x: x[..., 0],
    "x1x2": lambda x: x[..., 0] * x[..., 1],
    "r2_harmonic": lambda x: x[..., 0] ** 2 - x[..., 1] ** 2,
}


def laplace_harmonic_test(name):
    """(boundary data f, exact interior field u) for a harmonic polynomial."""
    if name not in _HARMONIC:
        raise ValueError(f"unknown harmonic test {name!r}")
    u = _HARMONIC[name]

    def field_(x):
        return u(np.asarray(x, dtype=float))

    return field_, field_


def _potential_quadrature(density, degree):
    space = density.space
    mesh = space.mesh
    rule = gauss_triangle(degree)
    geo = mesh.geometry(rule.points)
    vals = density.on_element(np.arange(mesh.n_elements), rule.points)
    return rule, geo, vals


def distance_to_mesh(mesh, x, degree=10):
    """Approximate distance from x to Gamma_h and the diameter of the closest element."""
    geo = mesh.geometry(gauss_triangle(degree).points)
    d = np.linalg.norm(geo.points - np.asarray(x)[None, None], axis=-1)
    e, _ = np.unravel_index(np.argmin(d), d.shape)
    return float(d.min()), float(mesh.element_diameters[e])


def evaluate_potential(spec, density, x, degree=None, policy=0.5):
    """Representation formula u_h(x) of the formulation at off-surface points x."""
    space = density.space
    mesh = space.mesh
    x = np.atleast_2d(np.asarray(x, dtype=float))
    degree = degree or min(2 * (space.degree + mesh.order) + 6, 30)
    rule, geo, vals = _potential_quadrature(density, degree)
    for xi in x:
        dist, h_local = distance_to_mesh(mesh, xi)
        if dist < policy * h_local:
            raise NearFieldPolicyError(
                f"x = {xi.tolist()} is {dist:.3g} from the mesh, below {policy} x local h = {h_local:.3g}"
            )
    c_d, c_s = spec.potential_coefficients()
    nrm = geo.interp_normal if spec.normal == "interpolated" else geo.normal
    w = (vals * geo.jacobian * rule.weights).reshape(-1).astype(complex)
    out = _kernels.potential_sum(
        x,
        np.ascontiguousarray(geo.points.reshape(-1, 3)),
        np.ascontiguousarray(nrm.reshape(-1, 3)),
        w,
        spec.is_complex,
        spec.wavenumber,
        float(np.real(c_s)),
        float(np.imag(c_s)),
        float(c_d),
    )
    if not spec.is_complex and not np.iscomplexobj(density.coeffs):
        return out.real
    return out
