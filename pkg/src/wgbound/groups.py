"""Compact group geometry: elements, metrics, sampling, irrep bookkeeping.

Supported groups and their element encodings:

``torus(d)``
    coordinates in ``[0, 1)^d`` (d <= 3), flat metric with wrap-around.
``su2``
    unit quaternions ``(w, x, y, z)``; antipodes are distinct elements.
``so3``
    unit quaternions canonicalized to ``w >= 0`` (on a tie, first nonzero
    imaginary part positive), so each rotation has one representative.

Normalization is fixed once and for all: nontrivial irreducibles are labeled
by integer vectors ``m`` (torus, highest weight ``2*pi*m``), half-integer spin
``j`` (su2) or integer ``level`` ``l`` (so3), with Casimir eigenvalues
``4*pi^2*|m|^2`` and ``j(j+1)`` / ``l(l+1)`` respectively.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

_TORUS_RE = re.compile(r"^torus\((\d+)\)$")

QUAT_NORM_TOL = 1e-12


@dataclass(frozen=True)
class GroupDescriptor:
    """Static root/lattice data of a supported group."""

    group_id: str
    n: int                       # manifold dimension
    r: int                       # rank (dimension of a maximal torus)
    positive_roots: tuple        # root vectors in weight coordinates
    rho_plus: tuple              # half sum of positive roots
    a: float                     # smoothing length scale of the group
    weyl_order: int
    weight_lattice_basis: tuple  # rows span the weight lattice
    covolume: float              # covolume of the integral lattice
    diameter: float

    @property
    def dim(self) -> int:
        """Length of the coordinate vector encoding one element."""
        return self.r if self.group_id.startswith("torus") else 4

    @property
    def two_rho_norm(self) -> float:
        return 2.0 * float(np.linalg.norm(self.rho_plus))

    @property
    def admissibility_threshold(self) -> float:
        # smallest M for which the smoothing construction is defined
        return self.two_rho_norm + self.a


def torus_dim(group_id: str) -> Optional[int]:
    m = _TORUS_RE.match(group_id)
    return int(m.group(1)) if m else None


def descriptor(group_id: str) -> GroupDescriptor:
    """Descriptor for ``torus(1..3)``, ``su2`` or ``so3``."""
    d = torus_dim(group_id)
    if d is not None:
        if not 1 <= d <= 3:
            raise ValueError(f"torus dimension out of range: {d}")
        eye = tuple(tuple(2.0 * math.pi if i == j else 0.0 for j in range(d))
                    for i in range(d))
        return GroupDescriptor(
            group_id=group_id, n=d, r=d,
            positive_roots=(), rho_plus=(0.0,) * d,
            a=math.pi, weyl_order=1,
            weight_lattice_basis=eye,
            covolume=(2.0 * math.pi) ** (-d),
            diameter=math.sqrt(d) / 2.0,
        )
    if group_id == "su2":
        return GroupDescriptor(
            group_id="su2", n=3, r=1,
            positive_roots=((1.0,),), rho_plus=(0.5,),
            a=0.5, weyl_order=2,
            weight_lattice_basis=((0.5,),),
            covolume=2.0,
            diameter=2.0 * math.pi,
        )
    if group_id == "so3":
        return GroupDescriptor(
            group_id="so3", n=3, r=1,
            positive_roots=((1.0,),), rho_plus=(0.5,),
            a=0.5, weyl_order=2,
            weight_lattice_basis=((1.0,),),
            covolume=1.0,
            diameter=math.pi,
        )
    raise ValueError(f"unknown group id: {group_id!r}")


# ---------------------------------------------------------------------------
# element arithmetic


def canonicalize(G: GroupDescriptor, x: np.ndarray) -> np.ndarray:
    """Bring an element (or a batch, last axis = coords) to canonical form."""
    x = np.asarray(x, dtype=float)
    if torus_dim(G.group_id) is not None:
        return np.mod(x, 1.0)
    nrm = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(nrm == 0):
        raise ValueError("zero quaternion cannot be normalized")
    q = x / nrm
    if G.group_id == "so3":
        q = _so3_sign_fix(q)
    return q


def _so3_sign_fix(q: np.ndarray) -> np.ndarray:
    # representative with w > 0, ties resolved by the first nonzero coordinate
    single = q.ndim == 1
    q = np.atleast_2d(q).copy()
    flip = q[:, 0] < 0
    tie = q[:, 0] == 0
    if np.any(tie):
        for col in (1, 2, 3):
            sub = tie & (q[:, col] != 0)
            flip |= sub & (q[:, col] < 0)
            tie &= q[:, col] == 0
    q[flip] *= -1.0
    return q[0] if single else q


def identity(G: GroupDescriptor) -> np.ndarray:
    if torus_dim(G.group_id) is not None:
        return np.zeros(G.r)
    return np.array([1.0, 0.0, 0.0, 0.0])


def quaternion_product(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product, broadcasting over leading axes."""
    w1, v1 = q1[..., 0], q1[..., 1:]
    w2, v2 = q2[..., 0], q2[..., 1:]
    w = w1 * w2 - np.sum(v1 * v2, axis=-1)
    v = (w1[..., None] * v2 + w2[..., None] * v1 + np.cross(v1, v2))
    return np.concatenate([w[..., None], v], axis=-1)


def multiply(G: GroupDescriptor, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if torus_dim(G.group_id) is not None:
        return np.mod(x + y, 1.0)
    return canonicalize(G, quaternion_product(x, y))


def inverse(G: GroupDescriptor, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if torus_dim(G.group_id) is not None:
        return np.mod(-x, 1.0)
    q = x * np.array([1.0, -1.0, -1.0, -1.0])
    return canonicalize(G, q)


def exp_map(G: GroupDescriptor, X: np.ndarray) -> np.ndarray:
    """Exponential of a Lie algebra vector given in orthonormal coordinates.

    For the torus the coordinates are the flat ones; for su2/so3 they refer to
    the basis in which ``exp(u * e3) = (cos(u/2), 0, 0, sin(u/2))``.
    """
    X = np.asarray(X, dtype=float)
    if torus_dim(G.group_id) is not None:
        return np.mod(X, 1.0)
    half = 0.5 * np.linalg.norm(X, axis=-1)
    out_shape = X.shape[:-1] + (4,)
    q = np.zeros(out_shape)
    q[..., 0] = np.cos(half)
    # sin(|X|/2)/|X| with its |X| -> 0 limit 1/2
    small = half < 1e-150
    coef = np.where(small, 0.5, np.sin(half) / np.maximum(2.0 * half, 1e-300))
    q[..., 1:] = X * coef[..., None]
    return canonicalize(G, q)


def geodesic_distance(G: GroupDescriptor, x, y) -> float:
    """Bi-invariant geodesic distance between two elements."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if torus_dim(G.group_id) is not None:
        delta = np.abs(np.mod(x - y, 1.0))
        delta = np.minimum(delta, 1.0 - delta)
        return float(np.linalg.norm(delta))
    dot = float(np.dot(x, y))
    if G.group_id == "so3":
        dot = abs(dot)
    dot = min(1.0, max(-1.0, dot))
    return 2.0 * math.acos(dot)


def pairwise_distance(G: GroupDescriptor, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Distance matrix between two stacks of elements, shape (len(X), len(Y))."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if torus_dim(G.group_id) is not None:
        delta = np.abs(X[:, None, :] - Y[None, :, :])
        delta = np.minimum(np.mod(delta, 1.0), 1.0 - np.mod(delta, 1.0))
        return np.sqrt(np.sum(delta * delta, axis=-1))
    dots = X @ Y.T
    if G.group_id == "so3":
        dots = np.abs(dots)
    np.clip(dots, -1.0, 1.0, out=dots)
    return 2.0 * np.arccos(dots)


def haar_sample(G: GroupDescriptor, seed: int, count: int) -> np.ndarray:
    """Deterministic Haar-distributed sample, shape (count, coord dim)."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = np.random.default_rng(seed)
    d = torus_dim(G.group_id)
    if d is not None:
        return rng.random((count, d))
    raw = rng.standard_normal((count, 4))
    return canonicalize(G, raw)


# ---------------------------------------------------------------------------
# irreducible representations


@dataclass(frozen=True)
class Irrep:
    """Label and numerics of one irreducible unitary representation."""

    group_id: str
    label: tuple            # torus: integer vector; su2: (two_j,); so3: (level,)
    highest_weight: tuple   # in normalized weight coordinates
    dim: int
    casimir: float
    weights: tuple          # all weights with multiplicity, len == dim

    @property
    def weight_norm(self) -> float:
        return float(np.linalg.norm(self.highest_weight))

    def __repr__(self):  # keep test output readable
        return f"Irrep({self.group_id}, {self.label})"


def _torus_irrep(group_id: str, m: Sequence[int]) -> Irrep:
    m = tuple(int(v) for v in m)
    lam = tuple(2.0 * math.pi * v for v in m)
    return Irrep(group_id=group_id, label=m, highest_weight=lam,
                 dim=1, casimir=4.0 * math.pi ** 2 * sum(v * v for v in m),
                 weights=(lam,))


def _spin_irrep(group_id: str, two_j: int) -> Irrep:
    j = two_j / 2.0
    weights = tuple((k - j,) for k in range(two_j + 1))
    label = (two_j,) if group_id == "su2" else (two_j // 2,)
    return Irrep(group_id=group_id, label=label, highest_weight=(j,),
                 dim=two_j + 1, casimir=j * (j + 1.0), weights=weights)


def trivial_irrep(G: GroupDescriptor) -> Irrep:
    if torus_dim(G.group_id) is not None:
        return _torus_irrep(G.group_id, (0,) * G.r)
    return _spin_irrep(G.group_id, 0)


def enumerate_irreps(G: GroupDescriptor, M: float,
                     include_trivial: bool = False) -> list:
    """All irreps with highest weight norm in (0, M), sorted by that norm.

    Ties are broken by the label tuple so the order is total and stable.
    ``include_trivial`` prepends the trivial representation.
    """
    if not (M > 0 and math.isfinite(M)):
        raise ValueError(f"M must be positive and finite, got {M}")
    out = []
    d = torus_dim(G.group_id)
    if d is not None:
        radius = M / (2.0 * math.pi)
        mb = math.floor(radius)
        if mb >= 1:
            for m in itertools.product(range(-mb, mb + 1), repeat=d):
                nsq = sum(v * v for v in m)
                if 0 < nsq < radius * radius:
                    out.append(_torus_irrep(G.group_id, m))
    elif G.group_id == "su2":
        two_j = 1
        while two_j / 2.0 < M:
            out.append(_spin_irrep("su2", two_j))
            two_j += 1
    elif G.group_id == "so3":
        level = 1
        while level < M:
            out.append(_spin_irrep("so3", 2 * level))
            level += 1
    out.sort(key=lambda p: (p.weight_norm, p.label))
    if include_trivial:
        out.insert(0, trivial_irrep(G))
    return out


def spectral_data(G: GroupDescriptor, M: float):
    """Vectorized (|weight|, dim, casimir) arrays over 0 < |weight| < M.

    Lightweight alternative to `enumerate_irreps` for large cutoffs where
    only scalar spectral sums are needed.  Sorted by weight norm.
    """
    if not (M > 0 and math.isfinite(M)):
        raise ValueError(f"M must be positive and finite, got {M}")
    d = torus_dim(G.group_id)
    if d is not None:
        radius = M / (2.0 * math.pi)
        mb = math.floor(radius)
        if d == 3 and mb > 120:
            raise ValueError("torus(3) spectral enumeration above M~750 is too large")
        if mb < 1:
            lam = np.zeros(0)
        else:
            axes = [np.arange(-mb, mb + 1)] * d
            grids = np.meshgrid(*axes, indexing="ij")
            nsq = sum(g * g for g in grids).ravel()
            nsq = nsq[(nsq > 0) & (nsq < radius * radius)]
            lam = 2.0 * math.pi * np.sqrt(nsq.astype(float))
        lam.sort()
        return {"weight_norm": lam, "dim": np.ones_like(lam),
                "casimir": lam * lam}
    if G.group_id == "su2":
        two_j = np.arange(1, max(1, math.ceil(2 * M)))
        lam = two_j / 2.0
        lam = lam[lam < M]
    else:
        lam = np.arange(1, max(1, math.ceil(M)), dtype=float)
        lam = lam[lam < M]
    return {"weight_norm": lam, "dim": 2.0 * lam + 1.0,
            "casimir": lam * (lam + 1.0)}


# ---------------------------------------------------------------------------
# Laplacian consistency oracle

_PROBE_SEED = 20240817  # fixed so the oracle is deterministic

_STENCILS = {
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    4: ((-2, -1.0 / 12), (-1, 16.0 / 12), (0, -30.0 / 12), (1, 16.0 / 12), (2, -1.0 / 12)),
}


def casimir_residual(G: GroupDescriptor, irrep: Irrep, h: float,
                     order: int = 4) -> float:
    """Relative defect of the finite-difference Laplacian on irrep entries.

    Applies a central second-difference stencil (order 2 or 4) along an
    orthonormal basis of the Lie algebra at the identity and eight fixed
    pseudo-random probe points, and compares against ``-casimir * matrix``.
    Returns the worst relative Frobenius defect over the probes.
    """
    from . import fourier  # local import: fourier builds on this module

    if order not in _STENCILS:
        raise ValueError(f"stencil order must be one of {sorted(_STENCILS)}")
    if irrep.casimir == 0:
        return 0.0  # trivial irrep: constant entries, zero Laplacian exactly
    if irrep.casimir < 0:
        raise ValueError("negative casimir")
    if not (h > 0):
        raise ValueError("step h must be positive")
    probes = [identity(G)]
    probes.extend(haar_sample(G, _PROBE_SEED, 8))
    dim_alg = G.n
    basis = np.eye(dim_alg)
    stencil = _STENCILS[order]
    worst = 0.0
    for x in probes:
        base = fourier.irrep_matrix(G, irrep, x)
        acc = np.zeros_like(base)
        for k in range(dim_alg):
            for shift, coef in stencil:
                if shift == 0:
                    acc += coef * base
                    continue
                step = exp_map(G, shift * h * basis[k])
                acc += coef * fourier.irrep_matrix(G, irrep, multiply(G, x, step))
        lap = acc / (h * h)
        defect = np.linalg.norm(lap + irrep.casimir * base, "fro")
        worst = max(worst, defect / (irrep.casimir * np.linalg.norm(base, "fro")))
    return worst


# ---------------------------------------------------------------------------
# point-set files

_HEADER_RE = re.compile(r"^#\s*group=(\S+)\s*$")


def save_points(path, group_id: str, points: np.ndarray) -> None:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# group={group_id}\n")
        for row in points:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_points(path, expect_group: Optional[str] = None):
    """Read a point-set file: a ``# group=<id>`` header, then one row per line.

    Torus rows carry d floats (wrapped into [0,1)), su2/so3 rows carry four
    floats normalized to unit quaternions.  Returns (group_id, points array).
    Raises ValueError for malformed content and OSError for unreadable files.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError(f"{path}: empty point file")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise ValueError(f"{path}: first line must be '# group=<id>'")
    group_id = m.group(1)
    G = descriptor(group_id)  # rejects unknown ids
    if expect_group is not None and group_id != expect_group:
        raise ValueError(f"{path}: header group {group_id!r} does not match "
                         f"requested {expect_group!r}")
    rows = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        if ln.startswith("#"):
            continue
        parts = ln.split(",")
        if len(parts) != G.dim:
            raise ValueError(f"{path}:{ln_no}: expected {G.dim} fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ValueError(f"{path}:{ln_no}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no points")
    pts = canonicalize(G, np.asarray(rows, dtype=float))
    return group_id, pts
