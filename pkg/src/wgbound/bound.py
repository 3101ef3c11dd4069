"""Explicit Wasserstein upper bounds from Fourier data.

Assembles the certified inequality

    W_g(nu1, nu2) <= psi(M) + phi(M) * sqrt(sum d/kappa * |block diff|_HS^2)

together with moduli of continuity, M-grid optimization, spectral-gap
corollaries against Haar, and the mixing-rate prediction formula.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from ._util import config_hash, golden_min, pairwise_sum
from . import fourier, groups, smoothing
from .groups import GroupDescriptor
from .smoothing import budget_interval, bump_transform, kernel_degree

CSV_HEADER = ("group", "g", "M", "psi", "phi", "fourier_sum", "total",
              "tolerance", "seed")

_C_EPS = 1e-6
_SUBADD_TOL = 1e-12


# ---------------------------------------------------------------------------
# moduli of continuity


class ModulusOfContinuity:
    """Nondecreasing subadditive cost profile g with g(0+) = 0.

    Two kinds: exact powers t^p with 0 < p <= 1, and piecewise-linear
    tables through the origin, constant beyond the last knot.
    """

    def __init__(self, kind: str, p: Optional[float] = None,
                 knots=None, values=None):
        self.kind = kind
        if kind == "power":
            if p is None or not (0.0 < p <= 1.0):
                raise ValueError(f"power modulus needs p in (0, 1], got {p}")
            self.p = float(p)
            self.knots = self.values = None
        elif kind == "table":
            knots = np.asarray(knots, dtype=float)
            values = np.asarray(values, dtype=float)
            if knots.ndim != 1 or knots.shape != values.shape or knots.size == 0:
                raise ValueError("table modulus needs matching 1-d knots/values")
            if knots[0] <= 0 or np.any(np.diff(knots) <= 0):
                raise ValueError("knots must be strictly increasing and positive")
            if np.any(values < 0) or np.any(np.diff(values) < 0):
                raise ValueError("values must be nonnegative and nondecreasing")
            self.p = None
            self.knots = knots
            self.values = values
            self._validate_subadditive()
        else:
            raise ValueError(f"unknown modulus kind {kind!r}")

    @classmethod
    def power(cls, p: float) -> "ModulusOfContinuity":
        return cls("power", p=p)

    @classmethod
    def table(cls, knots, values) -> "ModulusOfContinuity":
        return cls("table", knots=knots, values=values)

    def _validate_subadditive(self):
        rng = np.random.default_rng(0)
        top = 2.0 * float(self.knots[-1])
        t = rng.uniform(0.0, top, 1000)
        u = rng.uniform(0.0, top, 1000)
        bad = self(t + u) > self(t) + self(u) + _SUBADD_TOL
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ValueError(
                f"table modulus is not subadditive: g({t[i] + u[i]:.6g}) > "
                f"g({t[i]:.6g}) + g({u[i]:.6g})")

    def __call__(self, t):
        t = np.maximum(np.asarray(t, dtype=float), 0.0)
        if self.kind == "power":
            out = t ** self.p
        else:
            out = np.interp(t, np.concatenate(([0.0], self.knots)),
                            np.concatenate(([0.0], self.values)))
        return out if out.ndim else float(out)

    def initial_slope(self) -> Optional[float]:
        """Slope of g at 0+; None when infinite (power case with p < 1)."""
        if self.kind == "power":
            return 1.0 if self.p == 1.0 else None
        return float(self.values[0] / self.knots[0])

    @property
    def is_zero(self) -> bool:
        return self.kind == "table" and bool(np.all(self.values == 0.0))

    def descriptor(self) -> str:
        if self.kind == "power":
            return f"power:{self.p:g}"
        digest = config_hash({"knots": self.knots.tolist(),
                              "values": self.values.tolist()})[:8]
        return f"table:{digest}"

    def __repr__(self):
        return f"ModulusOfContinuity({self.descriptor()})"


# ---------------------------------------------------------------------------
# psi: smoothing cost of the degree-M kernel

# radial quadrature layout per group: (rank, cutoff R, prefactor A,
# argument scale of F, algebraic extra factor power of x)
_PSI_LAYOUT = {
    "su2": (1, 100.0, 4.0, 0.5, 0),
    "so3": (1, 100.0, 4.0, 0.5, 0),
    "torus(1)": (1, 80.0, 4.0 * math.pi, math.pi, 0),
    "torus(2)": (2, 80.0, 4.0 * math.pi ** 3, math.pi, 1),
    "torus(3)": (3, 80.0, 8.0 * math.pi ** 4, math.pi, 2),
}


def _psi_layout(G: GroupDescriptor):
    try:
        return _PSI_LAYOUT[G.group_id]
    except KeyError:
        raise ValueError(f"no smoothing-cost layout for group {G.group_id!r}")


def _noise_radius(tf, a_f: float, R: float) -> float:
    """Radius past which |F| is certified below 1e-13 |F(0)|.

    Sign changes beyond it are roundoff noise; panels need no alignment
    there because the integrand is negligible against the quadrature
    error estimate.
    """
    cut = 1e-13 * abs(tf.f0)
    u, top = 1.0, a_f * R
    while u < top and tf.tail_bound(u) > cut:
        u *= 1.0905
    return min(R, u / a_f)


def _f_sign_changes(tf, a_f: float, R: float) -> np.ndarray:
    """Zeros of x -> F(a_f x) on (0, R), by dense scan plus bisection.

    The |F| factor of the integrand has kinks exactly there, so quadrature
    panels must break at these points to converge.
    """
    # zero spacing is > 0.2/a_f in x; 1e-8 placement suffices because the
    # integrand vanishes at each kink (panel-edge error ~ |F'| delta^2)
    step = 0.05 / max(a_f, 1.0)
    xs = np.linspace(0.0, R, int(R / step) + 2)
    fv = tf.evaluate(a_f * xs)
    idx = np.nonzero(np.sign(fv[:-1]) * np.sign(fv[1:]) < 0)[0]
    if idx.size == 0:
        return np.empty(0)
    lo, hi = xs[idx].copy(), xs[idx + 1].copy()
    slo = np.sign(fv[idx])
    for _ in range(32):
        mid = 0.5 * (lo + hi)
        same = np.sign(tf.evaluate(a_f * mid)) * slo >= 0
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def _panelled_nodes(breaks: np.ndarray, width: float, order: int):
    """Gauss-Legendre nodes/weights on [breaks], subdividing long segments."""
    gx, gw = leggauss(order)
    los, his = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(1, int(math.ceil((b - a) / width)))
        e = np.linspace(a, b, n + 1)
        los.append(e[:-1])
        his.append(e[1:])
    lo = np.concatenate(los)
    hi = np.concatenate(his)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


@lru_cache(maxsize=32)
def _psi_nodes(group_id: str, profile_id: str):
    """Cached radial nodes and g-independent weight vectors, coarse and fine.

    The integrand splits as g(2 pi x / M0) * base(x) with base >= 0 fixed
    per (group, profile); only the g factor changes across M, so psi
    evaluations reuse these tables.  Panels break at the zeros of F.
    """
    G = groups.descriptor(group_id)
    r, R, A, a_f, xpow = _psi_layout(G)
    tf = bump_transform(profile_id, r)
    zeros = _f_sign_changes(tf, a_f, _noise_radius(tf, a_f, R))
    breaks = np.concatenate(([0.0], zeros, [R]))
    out = {}
    for tag, width in (("coarse", 0.5), ("fine", 0.25)):
        x, wx = _panelled_nodes(breaks, width, 10)
        base = np.abs(tf.evaluate(a_f * x)) * x ** xpow
        if G.group_id in ("su2", "so3"):
            base = base * np.sin(np.pi * x) ** 2
        out[tag] = (x, A * wx * base)
    out["meta"] = (r, R, A, a_f, tf)
    return out


def psi_detailed(G: GroupDescriptor, g, t: float,
                 profile="paper_bump") -> dict:
    """psi(t) with its quadrature error estimate and tail accounting."""
    if t < G.admissibility_threshold:
        raise ValueError(
            f"t={t} below admissibility threshold {G.admissibility_threshold}")
    profile_id = profile.profile_id if isinstance(profile, smoothing.BumpProfile) \
        else str(profile)
    m0 = kernel_degree(G, t)
    tables = _psi_nodes(G.group_id, profile_id)
    r, R, A, a_f, tf = tables["meta"]
    mains = {}
    for tag in ("coarse", "fine"):
        x, wbase = tables[tag]
        mains[tag] = float(pairwise_sum(wbase * g(2.0 * math.pi * x / m0)))
    # tail beyond radius R: |F(a_f x)| <= C_k/(a_f x)^k and g(s) <= g(1)(s+1)
    g1 = float(np.asarray(g(1.0), dtype=float))
    tail = math.inf
    for k in smoothing._TAIL_ORDERS:
        if k - r - 1 <= 0:
            continue
        ck = tf.majorants[k] / a_f ** k
        val = A * g1 * ck * ((2.0 * math.pi / m0) * R ** (r + 1 - k) / (k - r - 1)
                             + R ** (r - k) / (k - r))
        tail = min(tail, val)
    if not math.isfinite(tail):
        raise RuntimeError("no valid tail majorant order")
    main = mains["fine"]
    quad_error = abs(mains["fine"] - mains["coarse"])
    return {
        "value": main + tail,
        "main": main,
        "tail": tail,
        "quad_error": quad_error,
        "tail_warning": bool(main > 0 and tail > 0.1 * main),
        "m0": m0,
    }


def psi(G: GroupDescriptor, g, t: float, profile="paper_bump") -> float:
    """Smoothing cost of the degree-t kernel: the additive term of the bound.

    Over-estimates the underlying integral: the truncated radial tail is
    added back via certified majorants, never dropped.
    """
    return psi_detailed(G, g, t, profile)["value"]


# ---------------------------------------------------------------------------
# phi: Fourier-decay weight


@lru_cache(maxsize=128)
def _power_phi_const(n: int, p: float) -> float:
    """K(n, p) with phi(t) = K * (n t)^{1-p}; exact sqrt(n) at p = 1."""
    if p == 1.0:
        return math.sqrt(n)
    c_max = budget_interval(n)

    def val(c: float) -> float:
        return math.sqrt(n / (1.0 - c - c * c / (4.0 * n))) * c ** (p - 1.0)

    _, best = golden_min(val, _C_EPS, c_max - _C_EPS)
    return best


def phi(n: int, g, t: float) -> float:
    """Weight multiplying the Fourier sum in the main bound.

    Infimum over the budget parameter c of
    sqrt(n/(1-c-c^2/4n)) * g(c/(nt)) / (c/(nt)), including the c -> 0
    boundary limit when g has finite slope at zero.  For power moduli the
    optimization is scale-invariant and reduces to a cached constant.
    """
    if not t > 0:
        raise ValueError(f"need t > 0, got {t}")
    if isinstance(g, ModulusOfContinuity) and g.kind == "power":
        return _power_phi_const(n, g.p) * (n * t) ** (1.0 - g.p)
    c_max = budget_interval(n)

    def val(c: float) -> float:
        u = c / (n * t)
        gu = float(np.asarray(g(u), dtype=float))
        return math.sqrt(n / (1.0 - c - c * c / (4.0 * n))) * gu / u

    _, best = golden_min(val, _C_EPS, c_max - _C_EPS)
    slope = getattr(g, "initial_slope", None)
    if callable(slope):
        s0 = slope()
        if s0 is not None and math.isfinite(s0):
            best = min(best, math.sqrt(n) * s0)
    return best


# ---------------------------------------------------------------------------
# report assembly


@dataclass(frozen=True)
class BoundReport:
    """One certified evaluation of the main inequality at a fixed cutoff."""

    group_id: str
    g_descriptor: str
    M: float
    m0: int
    psi: float
    phi: float
    fourier_sum: float
    total: float
    irreps_used: int
    profile_id: str
    tolerances: Dict[str, float]
    variant: str = "exact"
    tail_warning: bool = False

    @property
    def tolerance(self) -> float:
        return self.tolerances["total"]

    def as_json_dict(self) -> dict:
        return {
            "group": self.group_id, "g": self.g_descriptor, "M": self.M,
            "M0": self.m0, "psi": self.psi, "phi": self.phi,
            "fourier_sum": self.fourier_sum, "total": self.total,
            "irreps_used": self.irreps_used, "profile": self.profile_id,
            "tolerances": dict(self.tolerances), "variant": self.variant,
            "tail_warning": self.tail_warning,
        }

    def csv_row(self, seed=None) -> list:
        return [self.group_id, self.g_descriptor, self.M, self.psi, self.phi,
                self.fourier_sum, self.total, self.tolerance,
                "" if seed is None else seed]


def _assemble(G: GroupDescriptor, g, M: float, profile_id: str,
              fourier_sum: float, irreps_used: int, variant: str) -> BoundReport:
    pd = psi_detailed(G, g, M, profile_id)
    ph = phi(G.n, g, M)
    fs = max(float(fourier_sum), 0.0)
    total = pd["value"] + ph * math.sqrt(fs)
    tol_quad = pd["quad_error"]
    tol_fp = 1e-11 * max(1.0, total)
    tolerances = {"psi_quadrature": tol_quad, "float_slack": tol_fp,
                  "total": tol_quad + tol_fp}
    return BoundReport(
        group_id=G.group_id, g_descriptor=g.descriptor(), M=float(M),
        m0=pd["m0"], psi=pd["value"], phi=ph, fourier_sum=fs, total=total,
        irreps_used=irreps_used, profile_id=profile_id, tolerances=tolerances,
        variant=variant, tail_warning=pd["tail_warning"])


def _profile_id(profile) -> str:
    return profile.profile_id if isinstance(profile, smoothing.BumpProfile) \
        else str(profile)


def wg_bound(G: GroupDescriptor, g, nu1, nu2, M: float,
             profile="paper_bump", hs_data=None) -> BoundReport:
    """Certified upper bound on the generalized Wasserstein distance.

    ``nu2=None`` compares against Haar.  ``hs_data`` optionally supplies
    precomputed (irreps, squared HS distances) covering every weight below
    M, so M-sweeps can share one Fourier pass.
    """
    if M < G.admissibility_threshold:
        raise ValueError(
            f"M={M} below admissibility threshold {G.admissibility_threshold}")
    profile_id = _profile_id(profile)
    if nu2 is not None and nu1.identical_to(nu2):
        n_irreps = groups.spectral_data(G, M)["weight_norm"].size
        return _assemble(G, g, M, profile_id, 0.0, n_irreps, "exact")
    if hs_data is None:
        irreps = groups.enumerate_irreps(G, M)
        hs_sq = fourier.hs_profile(G, nu1, nu2, irreps)
    else:
        irreps, hs_sq = hs_data
        keep = [i for i, p in enumerate(irreps) if p.weight_norm < M]
        irreps = [irreps[i] for i in keep]
        hs_sq = np.asarray(hs_sq)[keep]
    if irreps:
        ratios = np.asarray([p.dim / p.casimir for p in irreps])
        fs = float(pairwise_sum(ratios * np.maximum(hs_sq, 0.0)))
    else:
        fs = 0.0
    return _assemble(G, g, M, profile_id, fs, len(irreps), "exact")


_GRID_CAPS = {"torus(1)": 1e3, "torus(2)": 400.0, "torus(3)": 200.0,
              "su2": 400.0, "so3": 400.0}


def default_m_grid(G: GroupDescriptor, cap: Optional[float] = None) -> np.ndarray:
    """Geometric cutoff grid, 16 points per decade, from admissibility up.

    The upper end is capped per group so exact Fourier enumeration stays
    tractable; pass ``cap`` to override.
    """
    lo = G.admissibility_threshold
    hi = float(cap) if cap is not None else _GRID_CAPS[G.group_id]
    if hi < lo:
        raise ValueError(f"grid cap {hi} below admissibility threshold {lo}")
    n_pts = max(2, int(math.ceil(16.0 * math.log10(hi / lo))) + 1)
    return np.geomspace(lo, hi, n_pts)


def optimize_M(G: GroupDescriptor, g, nu1, nu2, profile="paper_bump",
               M_grid=None) -> Tuple[float, BoundReport]:
    """Grid argmin of the bound total; ties go to the smaller cutoff."""
    grid = np.sort(np.asarray(M_grid, dtype=float)) if M_grid is not None \
        else default_m_grid(G)
    grid = grid[grid >= G.admissibility_threshold]
    if grid.size == 0:
        raise ValueError("no admissible M in grid")
    profile_id = _profile_id(profile)
    degenerate = nu2 is not None and nu1.identical_to(nu2)
    if degenerate:
        hs_data = None
        cum = None
        lam = None
    else:
        irreps = groups.enumerate_irreps(G, float(grid[-1]))
        hs_sq = np.maximum(fourier.hs_profile(G, nu1, nu2, irreps), 0.0)
        lam = np.asarray([p.weight_norm for p in irreps])
        ratios = np.asarray([p.dim / p.casimir for p in irreps])
        cum = np.concatenate(([0.0], np.cumsum(ratios * hs_sq)))
        hs_data = (irreps, hs_sq)
    best_m = None
    best_total = math.inf
    for M in grid:
        fs = 0.0 if degenerate else float(cum[np.searchsorted(lam, M, "left")])
        pd = psi_detailed(G, g, float(M), profile_id)
        total = pd["value"] + phi(G.n, g, float(M)) * math.sqrt(fs)
        if total < best_total:
            best_total = total
            best_m = float(M)
    return best_m, wg_bound(G, g, nu1, nu2, best_m, profile_id, hs_data=hs_data)


# ---------------------------------------------------------------------------
# spectral-gap corollaries against Haar


@dataclass(frozen=True)
class GapBoundReport:
    """Exact and gap-relaxed bounds against Haar for one measure/cutoff."""

    exact: Optional[BoundReport]
    relaxed: BoundReport
    q: float

    def as_json_dict(self) -> dict:
        return {"q": self.q,
                "exact": None if self.exact is None else self.exact.as_json_dict(),
                "relaxed": self.relaxed.as_json_dict()}


def _relaxed_fourier_sum(G: GroupDescriptor, M: float, q: float) -> Tuple[float, int]:
    sd = groups.spectral_data(G, M)
    vals = sd["dim"] ** 2 / sd["casimir"]
    return q * q * float(pairwise_sum(vals)), int(vals.size)


def haar_bound_from_gap(G: GroupDescriptor, g, nu, M: float,
                        profile="paper_bump",
                        q_override: Optional[float] = None) -> GapBoundReport:
    """Distance to Haar, bounded two ways from spectral data.

    Variant (i) uses the measure's exact blocks; variant (ii) relaxes every
    squared HS norm to dim * q^2 with q the (supplied or estimated) gap, so
    it dominates variant (i) by construction.  With ``q_override`` and no
    measure, only the relaxed variant is produced.
    """
    profile_id = _profile_id(profile)
    exact = None if nu is None else wg_bound(G, g, nu, None, M, profile_id)
    if q_override is not None:
        q = float(q_override)
    else:
        if nu is None:
            raise ValueError("need a measure or an explicit gap value")
        q = fourier.spectral_gap_estimate(G, nu, M)
    fs, count = _relaxed_fourier_sum(G, M, q)
    relaxed = _assemble(G, g, M, profile_id, fs, count, "gap_relaxed")
    return GapBoundReport(exact=exact, relaxed=relaxed, q=q)


_GAP_GRID_CAPS = {"torus(1)": 1e4, "torus(2)": 2e3, "torus(3)": 500.0,
                  "su2": 1e4, "so3": 1e4}


def optimized_gap_bound(G: GroupDescriptor, g, q: float, profile="paper_bump",
                        M_grid=None) -> Tuple[float, BoundReport]:
    """Best gap-relaxed Haar bound over a cutoff grid, for a given gap q.

    Scalar spectral sums only, so the grid may extend far beyond what exact
    block enumeration could afford.
    """
    profile_id = _profile_id(profile)
    grid = np.sort(np.asarray(M_grid, dtype=float)) if M_grid is not None \
        else default_m_grid(G, cap=_GAP_GRID_CAPS[G.group_id])
    grid = grid[grid >= G.admissibility_threshold]
    if grid.size == 0:
        raise ValueError("no admissible M in grid")
    sd = groups.spectral_data(G, float(grid[-1]))
    lam = sd["weight_norm"]
    cum = np.concatenate(([0.0], np.cumsum(sd["dim"] ** 2 / sd["casimir"])))
    best_m = None
    best_total = math.inf
    best_fs = 0.0
    best_count = 0
    for M in grid:
        idx = int(np.searchsorted(lam, M, "left"))
        fs = q * q * float(cum[idx])
        pd = psi_detailed(G, g, float(M), profile_id)
        total = pd["value"] + phi(G.n, g, float(M)) * math.sqrt(fs)
        if total < best_total:
            best_total, best_m, best_fs, best_count = total, float(M), fs, idx
    return best_m, _assemble(G, g, best_m, profile_id, best_fs, best_count,
                             "gap_relaxed")


# ---------------------------------------------------------------------------
# mixing-rate prediction


def walk_rate_prediction(n: int, b: float, m: int, A: float, k: float) -> float:
    """Closed-form mixing-rate profile k^{1/(A+1)} exp(-(n/2) (b(k-m)/(2mn))^{1/(A+1)}).

    The implied constant is reported as 1 and is not certified; only the
    shape of the decay is meaningful.
    """
    if not b > 0:
        raise ValueError(f"need b > 0, got {b}")
    if not (isinstance(m, (int, np.integer)) and m >= 1):
        raise ValueError(f"need integer m >= 1, got {m}")
    if not 1.0 <= A <= 2.0:
        raise ValueError(f"need A in [1, 2], got {A}")
    if not k > m:
        raise ValueError(f"need k > m, got k={k}, m={m}")
    ex = 1.0 / (A + 1.0)
    return k ** ex * math.exp(-(n / 2.0) * (b * (k - m) / (2.0 * m * n)) ** ex)
