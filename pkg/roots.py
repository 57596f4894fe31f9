"""
Root structure of the interpolation polynomial h_A(z) = chi(T_A(zd)).

Coefficients come from the exact subset expansion in `barvinok`; roots from
simultaneous Aberth-Ehrlich iteration. Regions are closed: a root on a
boundary counts as inside, so a strip is only reported root-free when it
strictly is.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from barvinok import InterpolationFamily, family_from_perturbations, taylor_coefficients
from statmech import MomentParams, second_moment_exact
from tn_core import GaussianEnsembleSpec, Tensor, sample_gaussian_tn

logger = logging.getLogger(__name__)

TRIM = 1e-14
MAX_ITERATIONS = 500
STEP_TOL = 1e-12
CIRCLE_GAP = 1e-8


@dataclass(frozen=True, eq=False)
class InterpPolynomial:
    """Ascending coefficients c_0..c_n of p(z) = g(scale * z)."""

    coeffs: np.ndarray
    scale: complex = 1.0

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, z):
        return P.polyval(z, self.coeffs)


def extract_coefficients(family: InterpolationFamily, scale=None, budget=None) -> InterpPolynomial:
    """c_k = scale^k g^(k)(0) / k!; the default scale d gives h_A."""
    scale = family.bond_dim if scale is None else scale
    g = taylor_coefficients(family, family.num_vertices, budget)
    powers = np.asarray(scale, dtype=complex) ** np.arange(len(g))
    return InterpPolynomial(g * powers, complex(scale))


def _as_coefficients(p) -> np.ndarray:
    coeffs = p.coeffs if isinstance(p, InterpPolynomial) else p
    return np.atleast_1d(np.asarray(coeffs, dtype=complex))


@dataclass(frozen=True)
class RootResult:
    roots: np.ndarray
    converged: np.ndarray
    residuals: np.ndarray
    iterations: int

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def _trimmed(coeffs):
    top = np.abs(coeffs).max() if coeffs.size else 0.0
    if top == 0:
        raise ValueError('the zero polynomial has no well-defined roots')
    c = coeffs / top
    keep = np.nonzero(np.abs(c) > TRIM)[0]
    return c[:keep[-1] + 1]


def find_roots(p, max_iterations: int = MAX_ITERATIONS) -> RootResult:
    """All roots by Aberth-Ehrlich iteration from a perturbed circle.

    Coefficients are divided by max|c_k| and trailing ones below 1e-14 of
    that are dropped. Roots whose last step exceeded 1e-12 (1 + |z|) are
    flagged unconverged; residuals are |p(z)| / max|c_k|.
    """
    c = _trimmed(_as_coefficients(p))
    n = len(c) - 1
    if n < 1:
        empty = np.empty(0, dtype=complex)
        return RootResult(empty, np.empty(0, dtype=bool), np.empty(0), 0)
    dc = P.polyder(c)

    radius = abs(c[0] / c[-1]) ** (1.0 / n) if c[0] != 0 else 1.0
    z = radius * np.exp(1j * (2 * np.pi * np.arange(n) / n + 0.4))
    converged = np.zeros(n, dtype=bool)
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        with np.errstate(divide='ignore', invalid='ignore'):
            ratio = P.polyval(z, c) / P.polyval(z, dc)
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, np.inf)
            repulsion = (1.0 / diff).sum(axis=1)
            step = ratio / (1.0 - ratio * repulsion)
        step = np.where(np.isfinite(step), step, 1e-3 * (1 + np.abs(z)))
        step[converged] = 0
        z = z - step
        converged |= np.abs(step) <= STEP_TOL * (1 + np.abs(z))
        if converged.all():
            break
    if not converged.all():
        logger.warning(f'{int((~converged).sum())} of {n} roots did not converge in {max_iterations} iterations')
    residuals = np.abs(P.polyval(z, c))
    return RootResult(z, converged, residuals, iterations)


# Regions

@dataclass(frozen=True)
class StripSpec:
    """T(r e^{i theta}, width): points within `width` of the segment [0, r e^{i theta}]'s rectangle."""

    r: float
    theta: float
    width: float

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError(f'strip half-width must be positive, got {self.width}')

    def contains(self, z) -> np.ndarray:
        u = np.asarray(z, dtype=complex) * cmath.exp(-1j * self.theta)
        return (u.real >= -self.width) & (u.real <= self.r + self.width) & (np.abs(u.imag) <= self.width)


def count_in_disk(roots, r: float) -> int:
    return int(np.count_nonzero(np.abs(np.asarray(roots, dtype=complex)) <= r))


def count_in_strip(roots, strip: StripSpec) -> int:
    return int(np.count_nonzero(strip.contains(roots)))


@dataclass(frozen=True)
class JensenResult:
    residual: float
    lhs: float
    rhs: float
    skipped: bool = False


def jensen_check(p, r: float, nodes: int = 4096, roots=None) -> JensenResult:
    """|sum_{|z_j| <= r} ln(r/|z_j|) + ln|p(0)| - mean_theta ln|p(r e^{i theta})||."""
    c = _as_coefficients(p)
    if c[0] == 0:
        raise ValueError('p(0) = 0: Jensen formula needs a nonzero constant term')
    roots = find_roots(c).roots if roots is None else np.asarray(roots, dtype=complex)
    if np.any(np.abs(np.abs(roots) - r) <= CIRCLE_GAP):
        logger.info(f'Skipping Jensen check at r={r}: a root lies on the circle')
        return JensenResult(math.nan, math.nan, math.nan, skipped=True)
    inside = roots[np.abs(roots) <= r]
    lhs = float(np.sum(np.log(r / np.abs(inside)))) + math.log(abs(c[0]))
    theta = 2 * np.pi * np.arange(nodes) / nodes
    rhs = float(np.mean(np.log(np.abs(P.polyval(r * np.exp(1j * theta), c)))))
    return JensenResult(abs(lhs - rhs), lhs, rhs)


# Root-free sectors

def _reciprocal_integer(lam: float) -> int:
    inv = 1.0 / lam
    k = round(inv)
    if k < 1 or abs(inv - k) > 1e-9 * inv:
        raise ValueError(f'1/lambda must be an integer, got lambda = {lam}')
    return k


@dataclass(frozen=True)
class SectorGeometry:
    lam: float
    count: int

    @property
    def theta(self) -> float:
        return 2 * math.pi / self.count

    @property
    def width(self) -> float:
        return math.pi * self.lam ** 4 / 2

    @property
    def reach(self) -> float:
        return 1 - 2 * self.lam

    def strip(self, k: int) -> StripSpec:
        return StripSpec(self.reach, k * self.theta, self.width)

    def disjoint(self) -> bool:
        """Neighbouring strips cannot meet outside the disk of radius lam."""
        return self.lam * math.sin(self.theta / 2) >= self.width


def sector_geometry(lam: float, M=None) -> SectorGeometry:
    inv = _reciprocal_integer(lam)
    return SectorGeometry(lam, inv ** 3 if M is None else int(M))


def occupied_sectors(roots, geometry: SectorGeometry) -> set:
    """Indices k whose strip T_k contains at least one root."""
    M, theta, w = geometry.count, geometry.theta, geometry.width
    occupied = set()
    for z in np.asarray(roots, dtype=complex):
        if abs(z) <= w:
            return set(range(M))
        spread = math.asin(min(1.0, w / abs(z)))
        centre = cmath.phase(z) / theta
        lo = math.floor(centre - spread / theta) - 1
        hi = math.ceil(centre + spread / theta) + 1
        # within sqrt(2) w the strip's back end can reach z from the opposite side
        near = abs(z) <= math.sqrt(2) * w
        candidates = range(M) if near or hi - lo + 1 >= M else (k % M for k in range(lo, hi + 1))
        for k in candidates:
            if geometry.strip(k).contains(z):
                occupied.add(k)
    return occupied


def find_rootfree_strip(roots, lam: float, M=None):
    """Smallest k with no root in T((1 - 2 lam) e^{ik theta}, pi lam^4 / 2), or None."""
    geometry = sector_geometry(lam, M)
    occupied = occupied_sectors(roots, geometry)
    for k in range(geometry.count):
        if k not in occupied:
            return k
    return None


# Reports

@dataclass(frozen=True)
class StripCertificate:
    roots: np.ndarray
    strip: StripSpec
    count: int

    @property
    def certified(self) -> bool:
        return self.count == 0


def certify_strip(family: InterpolationFamily, rho: float, budget=None) -> StripCertificate:
    """Roots of G(z) = g(z * z_end) inside T(1, 2 rho)."""
    poly = extract_coefficients(family, scale=family.z_end, budget=budget)
    found = find_roots(poly)
    strip = StripSpec(1.0, 0.0, 2 * rho)
    count = count_in_strip(found.roots, strip)
    if count:
        logger.warning(f'{count} root(s) of G lie in the strip of half-width {2 * rho:.3g}')
    return StripCertificate(found.roots, strip, count)


@dataclass(frozen=True)
class RootReport:
    roots: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    counts: dict
    jensen: dict
    sector: object = None
    meta: dict = field(default_factory=dict)


def analyze(p, radii=(), lam=None, nodes: int = 4096, M=None) -> RootReport:
    found = find_roots(p)
    counts = {r: count_in_disk(found.roots, r) for r in radii}
    c = _as_coefficients(p)
    jensen = {r: jensen_check(c, r, nodes, found.roots) for r in radii} if c[0] != 0 else {}
    sector = find_rootfree_strip(found.roots, lam, M) if lam is not None else None
    return RootReport(found.roots, found.residuals, found.converged, counts, jensen, sector)


def root_count_bound(L1: int, L2: int, d: int, r: float, lam: float) -> float:
    """(1/2 lam) ln k_h(r), an upper bound on E_A N_A(r - r lam).

    k_h(r) = E_theta E_A |h_A(r e^{i theta})|^2 / |h_A(0)|^2 depends only on r.
    """
    moment = second_moment_exact(MomentParams(L1, L2, d, r))
    log_k = moment.log_value - 4 * L1 * L2 * math.log(d)
    return log_k / (2 * lam)


@dataclass(frozen=True)
class RootCountStats:
    frac_zero_small_disk: float
    mean_count_big_disk: float
    std_count_big_disk: float
    samples: int
    bound_small_disk: float
    bound_big_disk: float
    small_counts: list = field(default_factory=list)
    big_counts: list = field(default_factory=list)
    sectors: list = field(default_factory=list)


def root_count_stats(spec: GaussianEnsembleSpec, lam: float, num_samples: int, c=None,
                      budget=None) -> RootCountStats:
    """Empirical Pr[N_A(lam) = 0] and E N_A(1 - lam) over the Gaussian ensemble.

    Reference bounds: Pr[N_A(lam) >= 1] <= 8 lam e^{3c} and
    E N_A(1 - lam) <= (1/2 lam) ln(2 e^{3c}), with c = n/d unless given.
    """
    c = spec.n / spec.bond_dim if c is None else c
    small, big, sectors = [], [], []
    for k in range(num_samples):
        network = sample_gaussian_tn(spec, sample=k)
        # h_A only sees A = M - mu J, so mu = 0 needs no special case
        perturbations = [Tensor(spec.bond_dim, t.data - spec.mean) for t in network.tensors]
        family = family_from_perturbations(network, perturbations, z_end=1.0)
        roots = find_roots(extract_coefficients(family, budget=budget)).roots
        small.append(count_in_disk(roots, lam))
        big.append(count_in_disk(roots, 1 - lam))
        sectors.append(find_rootfree_strip(roots, lam))
    big_arr = np.asarray(big, dtype=float)
    stats = RootCountStats(
        frac_zero_small_disk=float(np.mean(np.asarray(small) == 0)),
        mean_count_big_disk=float(big_arr.mean()),
        std_count_big_disk=float(big_arr.std(ddof=1)) if num_samples > 1 else 0.0,
        samples=num_samples,
        bound_small_disk=8 * lam * math.exp(3 * c),
        bound_big_disk=math.log(2 * math.exp(3 * c)) / (2 * lam),
        small_counts=small,
        big_counts=big,
        sectors=sectors,
    )
    logger.info(f'Root statistics over {num_samples} samples: Pr[N(lam)=0]={stats.frac_zero_small_disk:.3f}, '
                f'E N(1-lam)={stats.mean_count_big_disk:.3f}')
    return stats
