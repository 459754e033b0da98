"""The three explicit mapping families and their weights.

``scaling``
    f_m(x) = m x on the unit ball (``inverse=True`` gives g_m(y) = y / m on
    B(0, m)).  Conformal, so K_O = 1.
``planar-branched``
    f_m = f o h_m on B(0, 2) in the plane, f(z) = z**2 and h_m the radial
    stretch h_m(z) = (|z| - 1)**(1/alpha) z / |z| for |z| >= g = 1 + m**-alpha,
    h_m(z) = c z with c = (1/m) / (1 + m**-alpha) inside.
``spatial-branched``
    the same radial stretch followed by angle doubling in the (x1, x2)-plane,
    f(x) = (r cos 2phi, r sin 2phi, x3, ..., xn), on B(0, 2) in R^n.

Every family carries its weight ``Q`` (see :class:`QWeight`) that dominates
the inner dilatation sum ``K_I_sum``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
from scipy.special import gamma

from .errors import BranchPointError, ContractViolation, DivergentIntegralError
from .geom import is_infinite

KINDS = ("scaling", "planar-branched", "spatial-branched")
RADIUS_TOL = 1e-12
BRANCH_EPS = 1e-14


@dataclass(frozen=True)
class QWeight:
    """Radial weight Q(y) = coefficient * |y|**(-exponent) on the closed ball
    of radius ``support_radius`` (everywhere when it is None), zero outside."""

    coefficient: float
    exponent: float
    n: int
    support_radius: float | None = 1.0
    label: str = ""

    def __post_init__(self):
        if self.coefficient < 0 or self.exponent < 0:
            raise ContractViolation("Q needs a nonnegative coefficient and exponent")
        if self.support_radius is not None and self.support_radius <= 0:
            raise ContractViolation("support radius must be positive")

    def describe(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class MapFamily:
    kind: str
    m: int = 1
    alpha: float = 0.5
    n: int = 2
    p: float = 2.5
    inverse: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractViolation(f"unknown map kind {self.kind!r}; expected one of {KINDS}")
        if int(self.m) != self.m or self.m < 1:
            raise ContractViolation("m must be a positive integer")
        if self.n < 2:
            raise ContractViolation("n must be at least 2")
        if self.inverse and self.kind != "scaling":
            raise ContractViolation("only the scaling family has an inverse variant")
        if self.kind == "planar-branched":
            if self.n != 2:
                raise ContractViolation("planar-branched needs n = 2")
            if not self.p > 2:
                raise ContractViolation("planar-branched needs p > 2 so that 2/p < 1")
            if not 0 < self.alpha < 2.0 / self.p:
                raise ContractViolation(f"alpha must lie in (0, 2/p) = (0, {2.0 / self.p:.6g})")
        if self.kind == "spatial-branched":
            if self.p < 1:
                raise ContractViolation("p must be >= 1")
            hi = self.n / (self.p * (self.n - 1))
            if not 0 < self.alpha < hi:
                raise ContractViolation(f"alpha must lie in (0, n/(p(n-1))) = (0, {hi:.6g})")

    # geometry -------------------------------------------------------------
    @property
    def branched(self) -> bool:
        return self.kind != "scaling"

    @property
    def domain_radius(self) -> float:
        if self.branched:
            return 2.0
        return float(self.m) if self.inverse else 1.0

    @property
    def image_radius(self) -> float:
        if self.branched:
            return 1.0
        return 1.0 if self.inverse else float(self.m)

    @property
    def glue_radius(self) -> float:
        """Radius of the sphere where the two pieces of the radial stretch meet."""
        return 1.0 + self.m ** (-self.alpha)

    @property
    def inner_scale(self) -> float:
        return (1.0 / self.m) / (1.0 + self.m ** (-self.alpha))

    @property
    def inner_image_radius(self) -> float:
        """Image radius of the glue sphere: 1/m**2 in the plane (squaring), 1/m in space."""
        r = 1.0 / self.m
        return r * r if self.kind == "planar-branched" else r

    @property
    def branch_count(self) -> int:
        return 2 if self.branched else 1

    @property
    def Q(self) -> QWeight:
        return paired_q(self)

    def describe(self) -> dict[str, Any]:
        return asdict(self)

    def with_m(self, m: int) -> "MapFamily":
        return MapFamily(self.kind, m, self.alpha, self.n, self.p, self.inverse)


def paired_q(fmap: MapFamily) -> QWeight:
    """The weight Q that dominates K_I_sum for this family."""
    n, a = fmap.n, fmap.alpha
    if fmap.kind == "scaling":
        if fmap.inverse:
            return QWeight(1.0, 0.0, n, 1.0, "indicator of the unit ball")
        return QWeight(1.0, 0.0, n, None, "constant 1 on R^n")
    if fmap.kind == "planar-branched":
        return QWeight(4.0 / a, a, 2, 1.0, "4/(alpha |y|^alpha) on the unit disk")
    return QWeight(
        2.0 ** (n - 1) * 4.0 / a ** (n - 1), (n - 1) * a, n, 1.0,
        "2^(n-1) 4/(alpha^(n-1) |y|^((n-1) alpha)) on the unit ball",
    )


# evaluation -----------------------------------------------------------------

def _points(fmap: MapFamily, x) -> tuple[np.ndarray, bool]:
    if is_infinite(x):
        raise ContractViolation("the point at infinity is outside every zoo domain")
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != fmap.n:
        raise ContractViolation(f"expected points of dimension {fmap.n}, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("points must be finite")
    return arr, single


def _stretch_factor(fmap: MapFamily, R: np.ndarray) -> np.ndarray:
    """|h_m(x)| / |x| as a function of R = |x| (radial stretch)."""
    out = np.full(R.shape, fmap.inner_scale)
    outer = R >= fmap.glue_radius
    Ro = R[outer]
    out[outer] = (Ro - 1.0) ** (1.0 / fmap.alpha) / Ro
    return out


def evaluate_array(fmap: MapFamily, x) -> np.ndarray:
    """Vectorized evaluation; ``x`` has shape (N, n) or (n,)."""
    pts, single = _points(fmap, x)
    R = np.linalg.norm(pts, axis=1)
    if np.any(R > fmap.domain_radius * (1 + RADIUS_TOL)):
        raise ContractViolation(f"point outside the domain |x| <= {fmap.domain_radius}")
    if fmap.kind == "scaling":
        out = pts / fmap.m if fmap.inverse else pts * fmap.m
    else:
        u = pts * _stretch_factor(fmap, R)[:, None]
        z = u[:, 0] + 1j * u[:, 1]
        if fmap.kind == "planar-branched":
            w = z * z
        else:
            rho = np.abs(z)
            w = np.where(rho > 0, z * z / np.where(rho > 0, rho, 1.0), 0.0)
        out = u.copy()
        out[:, 0] = w.real
        out[:, 1] = w.imag
    return out[0] if single else out


def evaluate(fmap: MapFamily, x) -> np.ndarray:
    """Image of a single point."""
    return evaluate_array(fmap, np.asarray(x, dtype=float).reshape(fmap.n))


# inverses -------------------------------------------------------------------

@dataclass(frozen=True)
class Preimages:
    points: list[np.ndarray]
    branch_point: bool


def _preimage_radius_factor(fmap: MapFamily, s: np.ndarray) -> np.ndarray:
    """|x| / |u| where u is the preimage of w under the outer factor (|u| = sqrt|w| or |w|)."""
    out = np.full(s.shape, 1.0 / fmap.inner_scale)
    outer = s >= fmap.inner_image_radius
    # |u| in terms of s = |w|
    su = np.sqrt(s[outer]) if fmap.kind == "planar-branched" else s[outer]
    out[outer] = (1.0 + su ** fmap.alpha) / su
    return out


def _check_image(fmap: MapFamily, w: np.ndarray) -> np.ndarray:
    s = np.linalg.norm(w, axis=1)
    if np.any(s > fmap.image_radius * (1 + RADIUS_TOL)):
        raise ContractViolation(f"point outside the image |w| <= {fmap.image_radius}")
    return s


def branch_inverse_array(fmap: MapFamily, w) -> list[np.ndarray]:
    """Preimages of the vertices of an image chain, one array per branch.

    The angle is unwrapped along the chain so each branch is a continuous
    lift; the '+' branch comes first.  Raises :class:`BranchPointError` when
    the chain touches the branch set.
    """
    pts, _ = _points(fmap, w)
    s = _check_image(fmap, pts)
    if fmap.kind == "scaling":
        return [pts * fmap.m if fmap.inverse else pts / fmap.m]
    z = pts[:, 0] + 1j * pts[:, 1]
    rho = np.abs(z)
    if np.any(rho <= BRANCH_EPS * max(1.0, float(s.max()))):
        raise BranchPointError("chain meets the branch set of the map")
    phi = np.unwrap(np.angle(z))
    if fmap.kind == "planar-branched":
        half = np.sqrt(rho) * np.exp(0.5j * phi)
    else:
        half = rho * np.exp(0.5j * phi)
    base = pts.copy()
    base[:, 0] = half.real
    base[:, 1] = half.imag
    plus = base * _preimage_radius_factor(fmap, s)[:, None]
    minus = plus.copy()
    minus[:, :2] *= -1.0
    return [plus, minus]


def branch_inverses(fmap: MapFamily, w) -> Preimages:
    """All preimages of one image point.

    At a branch point the coinciding preimages are reported once with
    ``branch_point=True``.
    """
    pts, _ = _points(fmap, w)
    if pts.shape[0] != 1:
        raise ContractViolation("branch_inverses takes a single point")
    s = _check_image(fmap, pts)
    if fmap.branched and math.hypot(pts[0, 0], pts[0, 1]) <= BRANCH_EPS * max(1.0, float(s[0])):
        if fmap.kind == "planar-branched" or s[0] == 0.0:
            return Preimages([np.zeros(fmap.n)], True)
        base = pts[0].copy()
        base[:2] = 0.0
        return Preimages([base * _preimage_radius_factor(fmap, s)[0]], True)
    return Preimages([b[0] for b in branch_inverse_array(fmap, pts)], False)


# dilatations ----------------------------------------------------------------

def _radial_ratio(fmap: MapFamily, R: np.ndarray) -> np.ndarray:
    """Radial over tangential stretch of h_m in the outer piece: R / (alpha (R - 1))."""
    return R / (fmap.alpha * (R - 1.0))


def K_O_analytic(fmap: MapFamily, x) -> np.ndarray | float:
    """Exact outer dilatation ||Df||^n / J.

    Radial stretch: singular values a (radial) and b (tangential), k = a/b.
    Plane: K_O = max(k, 1/k) outside the glue circle and 1 inside (squaring is
    conformal).  Space: the angle doubling multiplies one tangential value by
    2, so K_O = max(k, 2)**n / (2 k) outside and 2**(n-1) inside.
    """
    pts, single = _points(fmap, x)
    R = np.linalg.norm(pts, axis=1)
    if np.any(R > fmap.domain_radius * (1 + RADIUS_TOL)):
        raise ContractViolation("point outside the domain")
    if fmap.kind == "scaling":
        out = np.ones(R.shape)
    else:
        n = fmap.n
        outer = R >= fmap.glue_radius
        k = _radial_ratio(fmap, R[outer])
        if fmap.kind == "planar-branched":
            out = np.ones(R.shape)
            out[outer] = np.maximum(k, 1.0 / k)
        else:
            out = np.full(R.shape, 2.0 ** (n - 1))
            out[outer] = np.maximum(k, 2.0) ** n / (2.0 * k)
    return float(out[0]) if single else out


def K_O_printed(fmap: MapFamily, x) -> np.ndarray | float:
    """The closed form quoted for the branched families: (1/alpha) |x|/(|x| - 1)
    (plane) or 2^(n-1) (|x| / (alpha (|x| - 1)))^(n-1) (space) outside the unit
    ball, 1 resp. 2^(n-1) inside, +inf on |x| = 1.

    Outside the glue sphere it equals (plane) or bounds (space) the exact
    value; on the band 1 < |x| < 1 + m^-alpha the map is linear and this
    form overstates K_O.
    """
    pts, single = _points(fmap, x)
    R = np.linalg.norm(pts, axis=1)
    if fmap.kind == "scaling":
        out = np.ones(R.shape)
    else:
        n = fmap.n
        inside = 1.0 if fmap.kind == "planar-branched" else 2.0 ** (n - 1)
        out = np.full(R.shape, inside)
        outer = R > 1.0
        k = _radial_ratio(fmap, R[outer])
        out[outer] = k if fmap.kind == "planar-branched" else 2.0 ** (n - 1) * k ** (n - 1)
        out[R == 1.0] = math.inf
    return float(out[0]) if single else out


def singular_distance(fmap: MapFamily, x) -> float:
    """Distance from x to the loci where Df jumps or degenerates."""
    x = np.asarray(x, dtype=float)
    R = float(np.linalg.norm(x))
    d = fmap.domain_radius - R
    if fmap.branched:
        d = min(d, abs(R - 1.0), abs(R - fmap.glue_radius), math.hypot(x[0], x[1]))
    return d


def K_O_numeric(fmap: MapFamily, x, fd_step: float = 1e-6) -> float:
    """||Df||^n / det Df with Df from central differences."""
    x = np.asarray(x, dtype=float).reshape(fmap.n)
    if not fd_step > 0:
        raise ContractViolation("fd_step must be positive")
    if singular_distance(fmap, x) <= 10 * fd_step:
        raise ContractViolation("point too close to the domain boundary or a singular locus")
    n = fmap.n
    probes = np.concatenate([x + fd_step * np.eye(n), x - fd_step * np.eye(n)])
    vals = evaluate_array(fmap, probes)
    J = ((vals[:n] - vals[n:]) / (2 * fd_step)).T
    det = float(np.linalg.det(J))
    if not det > 0:
        raise ContractViolation("Jacobian is degenerate or orientation reversing at this point")
    return float(np.linalg.norm(J, 2) ** n / det)


def K_I_sum(fmap: MapFamily, w) -> float:
    """Sum of K_O over all preimages of w in the domain."""
    pre = branch_inverses(fmap, w)
    if pre.branch_point:
        raise BranchPointError("inner dilatation sum is undefined at a branch point")
    return float(sum(K_O_analytic(fmap, z) for z in pre.points))


# weights --------------------------------------------------------------------

def q_eval(Q: QWeight, y) -> np.ndarray | float:
    """Q at one point (shape (n,)) or many (shape (N, n)); +inf at a singular origin."""
    if is_infinite(y):
        return 0.0 if Q.support_radius is not None else (Q.coefficient if Q.exponent == 0 else 0.0)
    arr = np.asarray(y, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    r = np.linalg.norm(arr, axis=1)
    with np.errstate(divide="ignore"):
        out = Q.coefficient * r ** (-Q.exponent) if Q.exponent else np.full(r.shape, Q.coefficient)
    if Q.support_radius is not None:
        out = np.where(r <= Q.support_radius * (1 + RADIUS_TOL), out, 0.0)
    return float(out[0]) if single else out


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2) / gamma(n / 2)


def q_norm(Q: QWeight, p: float = 1.0, shell: tuple[float, float] | None = None) -> float:
    """Integral of Q**p over the support (optionally intersected with r_lo <= |y| <= r_hi).

    The radial factor r**(n - 1 - p*exponent) is integrated in closed form.
    Divergent requests raise :class:`DivergentIntegralError`.
    """
    if p < 1:
        raise ContractViolation("p must be >= 1")
    lo, hi = (0.0, math.inf) if shell is None else (float(shell[0]), float(shell[1]))
    if not 0 <= lo < hi:
        raise ContractViolation("shell needs 0 <= r_lo < r_hi")
    if Q.support_radius is not None:
        hi = min(hi, Q.support_radius)
    if hi <= lo:
        return 0.0
    if math.isinf(hi):
        raise DivergentIntegralError("Q has unbounded support and does not decay")
    e = Q.n - p * Q.exponent  # exponent of r after integrating r**(n-1) * r**(-p beta)
    if lo == 0.0 and e <= 0:
        raise DivergentIntegralError(f"p * exponent = {p * Q.exponent:g} >= n = {Q.n}: not integrable at 0")
    radial = math.log(hi / lo) if e == 0 else (hi ** e - lo ** e) / e
    return float(Q.coefficient ** p * sphere_area(Q.n) * radial)


# sampling and tables ---------------------------------------------------------

def sample_ball(rng: np.random.Generator, n: int, count: int, r_lo: float, r_hi: float) -> np.ndarray:
    """Points with uniformly distributed direction and radius in [r_lo, r_hi]."""
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1)[:, None]
    r = rng.uniform(r_lo, r_hi, count)
    return d * r[:, None]


def well_conditioned_points(fmap: MapFamily, count: int, rng: np.random.Generator, margin: float = 1e-3) -> np.ndarray:
    """Domain points at least ``margin`` away from the singular loci."""
    out = []
    while len(out) < count:
        cand = sample_ball(rng, fmap.n, 4 * count + 16, 0.0, fmap.domain_radius)
        for x in cand:
            if singular_distance(fmap, x) > margin:
                out.append(x)
                if len(out) == count:
                    break
    return np.array(out).reshape(count, fmap.n)


def sample_table(fmap: MapFamily, count: int, seed: int = 0, fd_step: float = 1e-6) -> list[dict[str, Any]]:
    """Rows (x, f(x), K_O analytic, K_O numeric, Q(f(x))) at well-conditioned points."""
    rng = np.random.default_rng(seed)
    pts = well_conditioned_points(fmap, count, rng) if count else np.zeros((0, fmap.n))
    imgs = evaluate_array(fmap, pts) if count else pts
    Q = paired_q(fmap)
    rows = []
    for x, y in zip(pts, imgs):
        rows.append({
            "x": x.tolist(),
            "f_x": y.tolist(),
            "K_O_analytic": K_O_analytic(fmap, x),
            "K_O_numeric": K_O_numeric(fmap, x, fd_step),
            "Q_f_x": q_eval(Q, y),
        })
    return rows


def table_csv(fmap: MapFamily, rows: list[dict[str, Any]]) -> str:
    n = fmap.n
    header = [f"x{i + 1}" for i in range(n)] + [f"f{i + 1}" for i in range(n)]
    header += ["K_O_analytic", "K_O_numeric", "Q_f_x"]
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([repr(v) for v in r["x"] + r["f_x"]] + [repr(r["K_O_analytic"]), repr(r["K_O_numeric"]), repr(r["Q_f_x"])])
    return buf.getvalue()


def zoo(name: str, **params) -> MapFamily:
    """Construct a family by name."""
    return MapFamily(name, **params)
