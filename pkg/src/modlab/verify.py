"""Checks of the inverse Poletsky inequality and of the equicontinuity bound.

``verify_poletsky`` compares the discrete modulus of a finite lifted family
(a lower estimate of the modulus of the full family of curves whose images
cross the annulus) with  int Q(y) eta(|y - y0|)**n dm(y)  for admissible
radial profiles eta.  ``equicontinuity_scan`` and ``closure_scan`` tabulate
moduli of continuity of a map family and the statistic

    S = max_i  d_i * log(1 + r0 / rho_i) ** (1/n),

with d_i the largest displacement at distance rho_i from x0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import integrate

from .curve import lift_family, radial_family
from .errors import ContractViolation, DivergentIntegralError
from .geom import Annulus, chordal_distances, sphere_directions
from .grid import Grid
from .mapzoo import MapFamily, QWeight, evaluate_array, paired_q, q_eval, q_norm, sphere_area
from .modsolve import modulus_finite

ADMISSIBILITY_TOL = 1e-9
VERDICT_MARGIN = 0.05
FLUCTUATION_TOL = 0.10
QUAD_RTOL = 1e-6


# radial profiles -------------------------------------------------------------

@dataclass(frozen=True)
class EtaProfile:
    """Radial test function on [r1, r2], zero outside.

    step:      scale / (r2 - r1)
    inverse-t: scale / (t log(r2 / r1))
    table:     piecewise linear through ``table`` (pairs (t, value)), times scale
    """

    kind: str
    r1: float
    r2: float
    scale: float = 1.0
    table: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("step", "inverse-t", "table"):
            raise ContractViolation(f"unknown eta profile {self.kind!r}")
        if not 0 <= self.r1 < self.r2:
            raise ContractViolation("eta profile needs 0 <= r1 < r2")
        if self.kind == "inverse-t" and self.r1 <= 0:
            raise ContractViolation("inverse-t profile needs r1 > 0")
        if self.kind == "table":
            t = np.array([a for a, _ in self.table], dtype=float)
            v = np.array([b for _, b in self.table], dtype=float)
            if t.size < 2 or np.any(np.diff(t) <= 0) or np.any(v < 0):
                raise ContractViolation("table needs >= 2 increasing abscissae and nonnegative values")
        if self.scale < 0:
            raise ContractViolation("scale must be nonnegative")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        inside = (t >= self.r1) & (t <= self.r2)
        if self.kind == "step":
            v = np.full(t.shape, 1.0 / (self.r2 - self.r1))
        elif self.kind == "inverse-t":
            v = 1.0 / (np.where(inside, t, 1.0) * math.log(self.r2 / self.r1))
        else:
            xs, ys = zip(*self.table)
            v = np.interp(t, xs, ys, left=0.0, right=0.0)
        return np.where(inside, self.scale * v, 0.0)

    def integral(self) -> float:
        """Integral over [r1, r2] (exact for every kind)."""
        if self.kind in ("step", "inverse-t"):
            return self.scale
        xs = np.array([a for a, _ in self.table])
        ys = np.array([b for _, b in self.table])
        grid = np.unique(np.clip(np.concatenate([xs, [self.r1, self.r2]]), self.r1, self.r2))
        return float(self.scale * np.trapezoid(np.interp(grid, xs, ys, left=0.0, right=0.0), grid))

    @property
    def admissible(self) -> bool:
        return self.integral() >= 1.0 - ADMISSIBILITY_TOL

    def require_admissible(self) -> None:
        if not self.admissible:
            raise ContractViolation(f"eta is not admissible: integral {self.integral():.6g} < 1")

    def breakpoints(self) -> list[float]:
        if self.kind == "table":
            return [a for a, _ in self.table if self.r1 < a < self.r2]
        return []

    def describe(self) -> dict[str, Any]:
        out = asdict(self)
        out["table"] = [list(p) for p in self.table]
        return out


def eta_profile(kind: str, r1: float, r2: float, table: Sequence[tuple[float, float]] = ()) -> EtaProfile:
    """Admissible profile of the given kind, normalized to integral 1."""
    if kind == "table":
        raw = EtaProfile("table", r1, r2, 1.0, tuple((float(a), float(b)) for a, b in table))
        total = raw.integral()
        if total <= 0:
            raise ContractViolation("table profile integrates to zero")
        return EtaProfile("table", r1, r2, 1.0 / total, raw.table)
    return EtaProfile(kind, r1, r2)


# right-hand side ---------------------------------------------------------------

def _divergence_check(Q: QWeight, y0: np.ndarray, eta: EtaProfile) -> None:
    if Q.exponent < Q.n:
        return
    d = float(np.linalg.norm(y0))
    in_support = Q.support_radius is None or Q.support_radius > 0
    if in_support and eta.r1 <= d <= eta.r2:
        raise DivergentIntegralError("singularity of Q inside the shell is not integrable")


def _shell_closed_form(Q: QWeight, eta: EtaProfile) -> float:
    """y0 at the center of Q: the integrand is radial, integrate r**(n-1-beta) eta**n in closed form."""
    n, b = Q.n, Q.exponent
    hi = eta.r2 if Q.support_radius is None else min(eta.r2, Q.support_radius)
    lo = eta.r1
    if hi <= lo:
        return 0.0
    if eta.kind == "step":
        c = (eta.scale / (eta.r2 - eta.r1)) ** n
        e = n - b
        if lo == 0 and e <= 0:
            raise DivergentIntegralError("singularity of Q at the center is not integrable")
        radial = math.log(hi / lo) if e == 0 else (hi ** e - lo ** e) / e
    elif eta.kind == "inverse-t":
        c = (eta.scale / math.log(eta.r2 / eta.r1)) ** n
        e = -b
        radial = math.log(hi / lo) if e == 0 else (hi ** e - lo ** e) / e
    else:
        return math.nan
    return float(Q.coefficient * sphere_area(n) * c * radial)


def _angular_mass(Q: QWeight, d: float, t: float) -> float:
    """Integral of Q(y0 + t theta) over the unit sphere of directions theta, |y0| = d."""
    n = Q.n
    w = sphere_area(n - 1)  # measure of the (n-2)-sphere; 2 when n = 2
    R = Q.support_radius

    def radius(psi):
        return math.sqrt(max(t * t + d * d + 2 * t * d * math.cos(psi), 0.0))

    # psi is the angle to the direction of -y0 reversed: |y| decreases with psi
    psi_lo = 0.0
    if R is not None:
        if t + d <= R:
            psi_lo = 0.0
        elif abs(t - d) > R:
            return 0.0
        else:
            c = (R * R - t * t - d * d) / (2 * t * d)
            psi_lo = math.acos(min(1.0, max(-1.0, c)))

    def f(psi):
        r = radius(psi)
        q = Q.coefficient * (r ** (-Q.exponent) if Q.exponent else 1.0)
        return q * math.sin(psi) ** (n - 2)

    val, _ = integrate.quad(f, psi_lo, math.pi, epsabs=0.0, epsrel=QUAD_RTOL * 0.1, limit=200)
    return w * val


def _shell_quadrature(Q: QWeight, y0: np.ndarray, eta: EtaProfile, rtol: float) -> tuple[float, float]:
    n = Q.n
    d = float(np.linalg.norm(y0))
    if d == 0.0:
        d = 0.0
    pts = set(eta.breakpoints())
    if d > 0:
        pts.add(d)
        if Q.support_radius is not None:
            pts.update({abs(Q.support_radius - d), Q.support_radius + d})
    pts = sorted(p for p in pts if eta.r1 < p < eta.r2)

    def g(t):
        if t <= 0:
            return 0.0
        if d == 0.0:
            mass = sphere_area(n) * float(q_eval(Q, np.r_[t, np.zeros(n - 1)]))
        else:
            mass = _angular_mass(Q, d, t)
        return float(eta(t)) ** n * t ** (n - 1) * mass

    edges = [eta.r1, *pts, eta.r2]
    total = 0.0
    err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, e = integrate.quad(g, a, b, epsabs=0.0, epsrel=rtol, limit=400)
        total += v
        err += e
    return total, err


def rhs_integral(Q: QWeight, y0, eta: EtaProfile, method: str = "auto") -> float:
    """Integral of Q(y) eta(|y - y0|)**n over the shell r1 < |y - y0| < r2.

    ``method``: "closed" (only when y0 is the center of Q and eta is step or
    inverse-t), "quadrature" (polar quadrature around y0), or "auto".
    """
    eta.require_admissible()
    y0 = np.asarray(y0, dtype=float).reshape(Q.n)
    _divergence_check(Q, y0, eta)
    if Q.support_radius is None and Q.exponent == 0 and method != "quadrature":
        # constant weight: volume of the shell against eta**n
        return _const_shell(Q, eta)
    centered = float(np.linalg.norm(y0)) == 0.0
    if method == "closed" or (method == "auto" and centered and eta.kind != "table"):
        if not centered or eta.kind == "table":
            raise ContractViolation("closed form needs y0 at the center of Q and a step or inverse-t profile")
        return _shell_closed_form(Q, eta)
    val, _ = _shell_quadrature(Q, y0, eta, QUAD_RTOL)
    return val


def _const_shell(Q: QWeight, eta: EtaProfile) -> float:
    n = Q.n
    if eta.kind == "step":
        return float(Q.coefficient * (eta.scale / (eta.r2 - eta.r1)) ** n * sphere_area(n) * (eta.r2 ** n - eta.r1 ** n) / n)
    if eta.kind == "inverse-t":
        return float(Q.coefficient * (eta.scale / math.log(eta.r2 / eta.r1)) ** n * sphere_area(n) * math.log(eta.r2 / eta.r1))
    val, _ = integrate.quad(lambda t: float(eta(t)) ** n * t ** (n - 1), eta.r1, eta.r2, points=eta.breakpoints() or None)
    return float(Q.coefficient * sphere_area(n) * val)


def rhs_refinement_error(Q: QWeight, y0, eta: EtaProfile) -> float:
    """Relative change of the quadrature value when the tolerance is tightened a hundredfold."""
    y0 = np.asarray(y0, dtype=float).reshape(Q.n)
    _divergence_check(Q, y0, eta)
    a, _ = _shell_quadrature(Q, y0, eta, 1e-4)
    b, _ = _shell_quadrature(Q, y0, eta, 1e-6)
    return abs(a - b) / abs(b) if b else abs(a - b)


# Poletsky check --------------------------------------------------------------

@dataclass(frozen=True)
class PoletskySampling:
    directions: int | None = None  # default: 64 (n = 2) / 128 (n = 3 and up)
    cells: int | None = None  # grid cells per axis; default 256 (n = 2) / 48 (n >= 3)
    profiles: tuple[str, ...] = ("step", "inverse-t")
    margin: float = VERDICT_MARGIN

    def resolved(self, n: int) -> "PoletskySampling":
        return PoletskySampling(
            self.directions or (64 if n == 2 else 128),
            self.cells or (256 if n == 2 else 48),
            tuple(self.profiles),
            self.margin,
        )


@dataclass
class PoletskyReport:
    map: dict[str, Any]
    Q: dict[str, Any]
    y0: list[float]
    r1: float
    r2: float
    image_family_size: int
    lifted_family_size: int
    lift_errors: int
    round_trip_error: float
    lhs: float
    lhs_lower: float
    solver_gap: float
    solver_certified: bool
    rhs: dict[str, float]
    min_rhs: float
    margin: float
    verdict: bool
    degenerate: bool
    grid: dict[str, Any]
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


LHS_NOTE = (
    "lhs is the discrete modulus of a finite lifted sub-family, a lower estimate of the modulus "
    "of the full family; a pass is a necessary-condition check"
)


def _lifted(fmap: MapFamily, annulus: Annulus, count: int, max_spacing: float):
    step = max_spacing * 4
    for _ in range(40):
        image = radial_family(annulus, count, step)
        lifted = lift_family(image, fmap)
        spacing = max((float(np.max(np.linalg.norm(np.diff(c.vertices, axis=0), axis=1))) for c in lifted.curves), default=0.0)
        if spacing <= max_spacing:
            return image, lifted
        step *= 0.5 * max_spacing / spacing if spacing > 2 * max_spacing else 0.5
    raise ContractViolation("could not resolve the lifted curves at the requested spacing")


def verify_poletsky(
    fmap: MapFamily,
    Q: QWeight | None,
    y0,
    r1: float,
    r2: float,
    sampling: PoletskySampling | None = None,
) -> PoletskyReport:
    """Compare the modulus of lifted radial curves with the weighted shell integrals."""
    if not 0 < r1 < r2:
        raise ContractViolation("need 0 < r1 < r2")
    Q = paired_q(fmap) if Q is None else Q
    n = fmap.n
    if Q.n != n:
        raise ContractViolation("Q and the map live in different dimensions")
    y0 = np.asarray(y0, dtype=float).reshape(n)
    if np.linalg.norm(y0) + r2 > fmap.image_radius * (1 + 1e-12):
        raise ContractViolation("the annulus must lie inside the image of the map")
    s = (sampling or PoletskySampling()).resolved(n)
    half = fmap.domain_radius * (1 + 1e-6)
    grid = Grid.square(half, s.cells, n)
    annulus = Annulus(tuple(y0), r1, r2)
    image, lifted = _lifted(fmap, annulus, s.directions, float(grid.side.min()) / 4)
    notes = [LHS_NOTE]
    if lifted.meta["empty"]:
        lhs = lower = gap = 0.0
        certified = True
        notes.append("every image curve failed to lift; degenerate report")
    else:
        res = modulus_finite(lifted, grid, float(n))
        lhs, lower, gap, certified = res.value, res.lower_bound, res.gap, res.certified
    rhs = {}
    for kind in s.profiles:
        rhs[kind] = rhs_integral(Q, y0, eta_profile(kind, r1, r2))
    min_rhs = min(rhs.values())
    return PoletskyReport(
        fmap.describe(), Q.describe(), y0.tolist(), r1, r2, len(image), len(lifted), len(lifted.meta["lift_errors"]),
        float(lifted.meta["round_trip_error"]), lhs, lower, gap, certified, rhs, min_rhs, s.margin,
        bool(lhs <= min_rhs * (1 + s.margin)), bool(lifted.meta["empty"]), grid.describe(), notes,
    )


# equicontinuity ------------------------------------------------------------------

@dataclass
class EquicontinuityReport:
    maps: list[dict[str, Any]]
    x0: list[float]
    r0: float
    radii: list[float]
    metric: str
    directions: int
    table: list[dict[str, Any]]  # one row per m: displacements per radius, S, C_hat
    S: list[float]
    C_hat: list[float | None]
    q_norm: float | None
    q_divergent: bool
    skipped_points: int
    flags: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _log_weight(r0: float, rho: float, n: int) -> float:
    return math.log1p(r0 / rho) ** (1.0 / n)


def statistic(displacements: Sequence[float], radii: Sequence[float], r0: float, n: int) -> float:
    """max_i d_i log(1 + r0/rho_i)**(1/n); radius 0 contributes 0."""
    vals = [d * _log_weight(r0, r, n) for d, r in zip(displacements, radii) if r > 0]
    return float(max(vals, default=0.0))


def _displacements(fmap: MapFamily, x0: np.ndarray, radii: Sequence[float], dirs: np.ndarray, metric: str):
    f0 = evaluate_array(fmap, x0[None, :])[0]
    out = []
    skipped = 0
    limit = fmap.domain_radius * (1 + 1e-12)
    for rho in radii:
        if rho == 0:
            out.append(0.0)
            continue
        pts = x0[None, :] + rho * dirs
        ok = np.linalg.norm(pts, axis=1) <= limit
        skipped += int((~ok).sum())
        if not ok.any():
            out.append(math.nan)
            continue
        img = evaluate_array(fmap, pts[ok])
        if metric == "chordal":
            d = chordal_distances(img, f0)
        else:
            d = np.linalg.norm(img - f0, axis=1)
        out.append(float(d.max()))
    return out, skipped


def _scan(family: Sequence[MapFamily], x0, r0: float, radii: Sequence[float], directions: int | None, metric: str):
    if not family:
        raise ContractViolation("empty map family")
    n = family[0].n
    if any(f.n != n for f in family):
        raise ContractViolation("all maps must share the dimension")
    x0 = np.asarray(x0, dtype=float).reshape(n)
    radii = [float(r) for r in radii]
    if any(r < 0 for r in radii) or r0 <= 0:
        raise ContractViolation("radii must be nonnegative and r0 positive")
    count = directions or (64 if n == 2 else 128)
    dirs = sphere_directions(n, count)
    rows, S, skipped = [], [], 0
    for f in family:
        d, sk = _displacements(f, x0, radii, dirs, metric)
        skipped += sk
        s = statistic([0.0 if math.isnan(v) else v for v in d], radii, r0, n)
        rows.append({"m": f.m, "displacement": d, "S": s})
        S.append(s)
    return x0, radii, count, rows, S, skipped


def _bounded_flags(S: list[float]) -> dict[str, Any]:
    finite = all(math.isfinite(s) for s in S)
    non_increasing = all(S[i] <= (1 + FLUCTUATION_TOL) * min(S[:i]) for i in range(1, len(S)))
    return {"finite": finite, "non_increasing": non_increasing, "uniformly_bounded": finite and non_increasing}


def equicontinuity_scan(
    family: Sequence[MapFamily],
    x0,
    r0: float,
    radii: Sequence[float],
    directions: int | None = None,
    Q: QWeight | None = None,
) -> EquicontinuityReport:
    """Per-m moduli of continuity at x0 and the fitted constant of the logarithmic bound.

    ``C_hat[k]`` is the largest S over the first k+1 maps divided by
    ||Q||_1**(1/n): the smallest constant that makes the bound hold for that
    sub-family.
    """
    n = family[0].n if family else 0
    x0a = np.asarray(x0, dtype=float).reshape(-1)
    for f in family:
        if np.linalg.norm(x0a) + 2 * r0 > f.domain_radius * (1 + 1e-12):
            raise ContractViolation("B(x0, 2 r0) must lie inside every domain")
    x0a, radii, count, rows, S, skipped = _scan(family, x0, r0, radii, directions, "euclidean")
    Q = paired_q(family[0]) if Q is None else Q
    try:
        qn = q_norm(Q, 1.0)
        divergent = False
    except DivergentIntegralError:
        qn, divergent = None, True
    C_hat: list[float | None] = []
    running = 0.0
    for row, s in zip(rows, S):
        running = max(running, s)
        c = None if qn is None else running / qn ** (1.0 / n)
        row["C_hat"] = c
        C_hat.append(c)
    flags = _bounded_flags(S)
    flags["q_divergent"] = divergent
    vals = [c for c in C_hat if c]
    flags["C_hat_ratio"] = max(vals) / min(vals) if vals else None
    ms = np.array([f.m for f in family], dtype=float)
    lips = []
    for row in rows:
        d = np.array(row["displacement"], dtype=float)
        rr = np.array(radii)
        ok = np.isfinite(d) & (rr > 0)
        lips.append(float(np.max(d[ok] / rr[ok])) if ok.any() else 0.0)
    flags["lipschitz_ratio"] = lips
    flags["lipschitz_le_1"] = all(v <= 1 + 1e-12 for v in lips)
    # growth of the displacement at each fixed radius, relative to linear in m
    disp = np.array([row["displacement"] for row in rows], dtype=float)
    dev = []
    for j, r in enumerate(radii):
        col = disp[:, j]
        if r == 0 or not np.all(np.isfinite(col)) or col[0] == 0:
            continue
        dev.append(float(np.max(np.abs(col / (col[0] * ms / ms[0]) - 1.0))))
    flags["linear_growth_deviation"] = max(dev) if dev else None
    flags["divergent_in_m"] = divergent and not flags["non_increasing"]
    return EquicontinuityReport(
        [f.describe() for f in family], x0a.tolist(), float(r0), radii, "euclidean", count, rows, S, C_hat,
        qn, divergent, skipped, flags,
    )


def closure_scan(
    family: Sequence[MapFamily],
    boundary_points: Sequence,
    radii: Sequence[float],
    r0: float | None = None,
    directions: int | None = None,
) -> list[EquicontinuityReport]:
    """Chordal moduli of continuity centered at boundary points, one report per point.

    Sample points outside the closed domain are skipped and counted.
    """
    reports = []
    for x0 in boundary_points:
        rr = r0 if r0 is not None else max(max(radii), 1e-12)
        x0a, rad, count, rows, S, skipped = _scan(family, x0, rr, radii, directions, "chordal")
        order = np.argsort(rad)
        worst = np.nanmax(np.array([row["displacement"] for row in rows], dtype=float), axis=0)
        per_m = all(_monotone(np.array(row["displacement"], dtype=float)[order]) for row in rows)
        flags = _bounded_flags(S)
        flags.update({
            "monotone_per_m": per_m,
            "monotone_uniform": _monotone(worst[order]),
            "uniform_modulus": worst.tolist(),
        })
        reports.append(EquicontinuityReport(
            [f.describe() for f in family], x0a.tolist(), float(rr), rad, "chordal", count, rows, S,
            [None] * len(rows), None, False, skipped, flags,
        ))
    return reports


def _monotone(values: np.ndarray, tol: float = 1e-12) -> bool:
    """Non-decreasing in radius (equivalently non-increasing as the radius shrinks)."""
    v = values[np.isfinite(values)]
    return bool(np.all(np.diff(v) >= -tol))
