"""Command-line harness: seeded, deterministic JSON/CSV artifact emission.

Every artifact embeds the configuration echo, its hash, the module
versions, and the numeric tolerances the computation consumed.  Identical
config and seed reproduce identical bytes; no timestamps are written.

Exit codes: 0 success, 2 configuration or input parse error, 3 file I/O
error, 4 solver failure, 5 certified-dominance violation.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import click
import numpy as np
import scipy
import sympy

from . import __version__, bound, fourier, groups, smoothing, transport, walks
from ._util import DominanceError, SolverError, config_hash, json_default

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVER = 4
EXIT_DOMINANCE = 5

_PROFILES = {"paper": "paper_bump", "plateau": "plateau"}
_COMMANDS = ("audit", "walk", "empirical", "kernel", "bound", "oracle")
_AUDIT_PROXY_N = 1 << 14  # lattice stand-in for Haar in circle verification


class ConfigError(ValueError):
    """Invalid configuration value or unparsable input content."""


@dataclass(frozen=True)
class RunConfig:
    """Fully serializable description of one harness invocation.

    Defaults: g=power:1, profile=paper, seed=0, reps=16; M/M_grid absent
    means the per-group default cutoff grid; out is the current directory.
    """

    command: str
    group: str
    g: str = "power:1"
    M: Optional[float] = None
    M_grid: Optional[str] = None
    profile: str = "paper"
    seed: int = 0
    reps: int = 16
    points: Tuple[str, ...] = ()
    n_list: str = ""
    gap_hint: Optional[float] = None
    out: str = "."
    verify: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.command not in _COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.profile not in _PROFILES:
            raise ConfigError(
                f"profile must be one of {sorted(_PROFILES)}, got {self.profile!r}")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.M is not None and self.M_grid is not None:
            raise ConfigError("give --M or --M-grid, not both")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        object.__setattr__(self, "points", tuple(self.points))

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(payload) - names)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        try:
            return cls(**payload)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def as_json_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["points"] = list(self.points)
        return d

    @property
    def hash(self) -> str:
        return config_hash(self.as_json_dict())


# ---------------------------------------------------------------------------
# input parsing


def _group_of(cfg: RunConfig) -> groups.GroupDescriptor:
    try:
        return groups.descriptor(cfg.group)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_modulus(spec: str) -> bound.ModulusOfContinuity:
    """Modulus spec: power:<p> with p in (0, 1], or table:<csv file>."""
    kind, sep, arg = spec.partition(":")
    if not sep:
        raise ConfigError("modulus spec must be power:<p> or table:<file>")
    if kind == "power":
        try:
            p = float(arg)
        except ValueError:
            raise ConfigError(f"bad power exponent {arg!r}") from None
        try:
            return bound.ModulusOfContinuity.power(p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if kind == "table":
        knots, values = _read_table(arg)
        try:
            return bound.ModulusOfContinuity.table(knots, values)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown modulus kind {kind!r}")


def _read_table(path: str):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln_no, raw in enumerate(fh, 1):
            ln = raw.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = ln.split(",")
            if len(parts) != 2:
                raise ConfigError(f"{path}:{ln_no}: expected 'knot,value'")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise ConfigError(f"{path}:{ln_no}: non-numeric entry") from None
    if not rows:
        raise ConfigError(f"{path}: empty modulus table")
    arr = np.asarray(rows, dtype=float)
    return arr[:, 0], arr[:, 1]


def parse_m_grid(spec: str, G: groups.GroupDescriptor) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError("M grid spec is start:stop:points")
    try:
        start, stop, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"bad M grid spec {spec!r}") from None
    if not (0.0 < start <= stop) or n < 1:
        raise ConfigError("M grid needs 0 < start <= stop and points >= 1")
    grid = np.geomspace(start, stop, n)
    grid = grid[grid >= G.admissibility_threshold]
    if grid.size == 0:
        raise ConfigError(
            f"no grid point reaches the admissibility threshold "
            f"{G.admissibility_threshold:g}")
    return grid


def _load_measure(path: str, G: groups.GroupDescriptor) -> fourier.DiscreteMeasure:
    try:
        _, pts = groups.load_points(path, expect_group=G.group_id)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return fourier.DiscreteMeasure.uniform(G, pts)


# ---------------------------------------------------------------------------
# artifact emission


def _versions() -> dict:
    return {"wgbound": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__, "sympy": sympy.__version__}


def write_json_artifact(cfg: RunConfig, result: dict, tolerances: dict) -> str:
    payload = {
        "config": cfg.as_json_dict(),
        "config_hash": cfg.hash,
        "versions": _versions(),
        "tolerances": tolerances,
        "result": result,
    }
    text = json.dumps(payload, indent=2, sort_keys=True,
                      default=json_default) + "\n"
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"{cfg.command}_{cfg.hash}.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def write_csv_artifact(cfg: RunConfig, header, rows, tolerances: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg.hash}\n")
    buf.write(f"# versions={json.dumps(_versions(), sort_keys=True)}\n")
    buf.write("# tolerances=" + json.dumps(tolerances, sort_keys=True,
                                           default=json_default) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"{cfg.command}_{cfg.hash}.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
    return path


def _pmap(threads: int, fn, items: list) -> list:
    """Order-preserving map over an optional worker pool.

    Work items are independent and deterministic, so the reduction is the
    plain index order and results do not depend on the pool size.
    """
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _tolerance_union(reports) -> dict:
    keys = sorted(set().union(*(r.tolerances for r in reports)))
    return {k: max(r.tolerances.get(k, 0.0) for r in reports) for k in keys}


# ---------------------------------------------------------------------------
# commands


def _cmd_kernel(cfg: RunConfig) -> str:
    G = _group_of(cfg)
    if cfg.M is None:
        raise ConfigError("kernel needs --M")
    try:
        kc = smoothing.kernel_coefficients(G, cfg.M, profile=_PROFILES[cfg.profile])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return write_json_artifact(cfg, kc.as_json_dict(), {})


def _cmd_oracle(cfg: RunConfig) -> str:
    G = _group_of(cfg)
    if len(cfg.points) != 2:
        raise ConfigError("oracle needs exactly two --points files")
    g = parse_modulus(cfg.g)
    nu1 = _load_measure(cfg.points[0], G)
    nu2 = _load_measure(cfg.points[1], G)
    plan = transport.exact_wasserstein(G, g, nu1, nu2)
    result = plan.as_json_dict()
    if G.group_id == "torus(1)" and g.descriptor() == "power:1":
        w1 = transport.circle_w1(nu1, nu2)
        result["circle_w1"] = w1
        result["circle_agreement"] = abs(w1 - plan.cost)
    tolerances = {"duality_gap": transport.GAP_TOL,
                  "marginal": transport.MARGINAL_TOL}
    click.echo(f"cost={plan.cost:.12g} status={plan.status}")
    return write_json_artifact(cfg, result, tolerances)


def _check_dominance(reports, oracle_cost: Optional[float]):
    if oracle_cost is None:
        return
    for rep in reports:
        if rep.total + rep.tolerance + transport.GAP_TOL < oracle_cost:
            raise DominanceError(
                f"bound total {rep.total!r} at M={rep.M:g} is below the "
                f"oracle cost {oracle_cost!r}")


def _cmd_bound(cfg: RunConfig) -> str:
    G = _group_of(cfg)
    g = parse_modulus(cfg.g)
    if not 1 <= len(cfg.points) <= 2:
        raise ConfigError("bound needs one or two --points files")
    nu1 = _load_measure(cfg.points[0], G)
    nu2 = _load_measure(cfg.points[1], G) if len(cfg.points) == 2 else None
    profile_id = _PROFILES[cfg.profile]
    oracle_cost = None
    if cfg.verify:
        if nu2 is None:
            raise ConfigError(
                "--verify needs two --points files (discrete transport oracle)")
        oracle_cost = transport.exact_wasserstein(G, g, nu1, nu2).cost
    if cfg.M is not None:
        try:
            rep = bound.wg_bound(G, g, nu1, nu2, cfg.M, profile_id)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        _check_dominance([rep], oracle_cost)
        result = rep.as_json_dict()
        if oracle_cost is not None:
            result["oracle_cost"] = oracle_cost
        click.echo(f"total={rep.total:.9g} (psi={rep.psi:.9g})")
        return write_json_artifact(cfg, result, rep.tolerances)
    grid = parse_m_grid(cfg.M_grid, G) if cfg.M_grid else bound.default_m_grid(G)
    if nu2 is not None and nu1.identical_to(nu2):
        hs_data = None
    else:
        irreps = groups.enumerate_irreps(G, float(grid[-1]))
        hs_data = (irreps, fourier.hs_profile(G, nu1, nu2, irreps))
    reports = _pmap(
        cfg.threads,
        lambda M: bound.wg_bound(G, g, nu1, nu2, float(M), profile_id,
                                 hs_data=hs_data),
        list(grid))
    _check_dominance(reports, oracle_cost)
    best = min(reports, key=lambda r: (r.total, r.M))
    click.echo(f"best M={best.M:g} total={best.total:.9g}")
    tolerances = _tolerance_union(reports)
    if oracle_cost is not None:
        tolerances["oracle_duality_gap"] = transport.GAP_TOL
    return write_csv_artifact(cfg, bound.CSV_HEADER,
                              [r.csv_row(cfg.seed) for r in reports], tolerances)


def _cmd_audit(cfg: RunConfig) -> str:
    G = _group_of(cfg)
    g = parse_modulus(cfg.g)
    if len(cfg.points) != 1:
        raise ConfigError("audit needs exactly one --points file")
    grid = parse_m_grid(cfg.M_grid, G) if cfg.M_grid else None
    rep = walks.equidistribution_audit(G, cfg.points[0], g, M_grid=grid,
                                       profile=_PROFILES[cfg.profile])
    result = rep.as_json_dict()
    tolerances = dict(rep.report.tolerances)
    if cfg.verify:
        if G.group_id != "torus(1)" or g.descriptor() != "power:1":
            raise ConfigError(
                "--verify for audit needs torus(1) with --g power:1 "
                "(circle closed form)")
        nu = fourier.DiscreteMeasure.uniform(
            G, groups.load_points(cfg.points[0], expect_group=G.group_id)[1])
        lattice = fourier.DiscreteMeasure.uniform(
            G, np.arange(_AUDIT_PROXY_N)[:, None] / _AUDIT_PROXY_N)
        w1 = transport.circle_w1(nu, lattice)
        # proxy lattice sits 1/(4n) from Haar, so dominance keeps that slack
        slack = 1.0 / (4.0 * _AUDIT_PROXY_N)
        if rep.report.total + rep.report.tolerance + slack < w1:
            raise DominanceError(
                f"audit bound {rep.report.total!r} is below the circle "
                f"oracle {w1!r} minus lattice slack")
        result["oracle"] = {"circle_w1_vs_lattice": w1,
                            "lattice_n": _AUDIT_PROXY_N, "haar_slack": slack}
        tolerances["haar_lattice_slack"] = slack
    click.echo(f"total={rep.report.total:.9g} gap={rep.gap_estimate:.12g}")
    return write_json_artifact(cfg, result, tolerances)


def _cmd_walk(cfg: RunConfig) -> str:
    G = _group_of(cfg)
    g = parse_modulus(cfg.g)
    if len(cfg.points) != 1:
        raise ConfigError("walk needs exactly one --points file (step measure)")
    if cfg.M is None:
        raise ConfigError("walk needs --M (block enumeration cutoff)")
    nu = _load_measure(cfg.points[0], G)
    try:
        states = walks.walk_evolve(G, nu, cfg.reps, cfg.M, g=g,
                                   profile=_PROFILES[cfg.profile],
                                   q_hint=cfg.gap_hint)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.verify:
        _verify_walk_sampling(G, nu, cfg)
    tolerances = {"power_recheck": walks._POWER_TOL,
                  "gap_submultiplicative": walks._SUBMULT_TOL}
    click.echo(f"final q_hat={states[-1].q_hat:.6g} "
               f"exact_total={states[-1].exact_total:.6g}")
    return write_csv_artifact(cfg, walks.WALK_CSV_HEADER,
                              [walks.walk_csv_row(s) for s in states],
                              tolerances)


def _verify_walk_sampling(G, nu, cfg: RunConfig, k: int = 5,
                          n_paths: int = 10000):
    """Monte Carlo cross-check: sampled k-step blocks match exact powers."""
    irreps = groups.enumerate_irreps(
        G, min(cfg.M, 4.0 * G.admissibility_threshold))
    sampled = walks.sampled_walk_blocks(G, nu, k, n_paths, cfg.seed, irreps)
    for p, S in zip(irreps, sampled):
        b = fourier.measure_transform(G, nu, p).matrix
        E = np.linalg.matrix_power(b, k)
        dev = float(np.linalg.norm(S - E))
        sigma = math.sqrt(
            max(p.dim - float(np.linalg.norm(E)) ** 2, 0.0) / n_paths)
        if dev > 3.0 * sigma + 1e-12:
            raise SolverError(
                f"sampled walk deviates {dev:.3e} (3 sigma {3 * sigma:.3e}) "
                f"on irrep {p.label}")


def _cmd_empirical(cfg: RunConfig) -> str:
    G = _group_of(cfg)
    g = parse_modulus(cfg.g)
    if not cfg.n_list:
        raise ConfigError('empirical needs --n-list, e.g. "8,16,32"')
    try:
        Ns = [int(tok) for tok in cfg.n_list.split(",")]
    except ValueError:
        raise ConfigError(f"--n-list entries must be integers: {cfg.n_list!r}") \
            from None
    source: object = "haar"
    if cfg.points:
        if len(cfg.points) != 1:
            raise ConfigError("empirical takes at most one --points file")
        source = _load_measure(cfg.points[0], G)
    if cfg.verify and isinstance(source, str):
        raise ConfigError("--verify needs a discrete source (give --points)")
    try:
        rows = walks.empirical_experiment(
            G, source, Ns, cfg.reps, g, cfg.seed,
            profile=_PROFILES[cfg.profile], m_cap=cfg.M,
            with_oracle=cfg.verify)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    tolerances = {"variance_budget_factor": 1.0 + 3.0 / math.sqrt(cfg.reps)}
    click.echo(f"N={rows[-1].N} bound_mean={rows[-1].bound_mean:.6g}")
    return write_csv_artifact(cfg, walks.EMPIRICAL_CSV_HEADER,
                              [walks.empirical_csv_row(r) for r in rows],
                              tolerances)


_RUNNERS = {"kernel": _cmd_kernel, "oracle": _cmd_oracle, "bound": _cmd_bound,
            "audit": _cmd_audit, "walk": _cmd_walk, "empirical": _cmd_empirical}


def run(cfg: RunConfig) -> int:
    """Execute one config; writes artifacts and returns the exit code."""
    try:
        path = _RUNNERS[cfg.command](cfg)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except ValueError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except OSError as exc:
        click.echo(f"io error: {exc}", err=True)
        return EXIT_IO
    except DominanceError as exc:
        click.echo(f"dominance violation: {exc}", err=True)
        return EXIT_DOMINANCE
    except SolverError as exc:
        click.echo(f"solver failure: {exc}", err=True)
        return EXIT_SOLVER
    click.echo(path)
    return 0


# ---------------------------------------------------------------------------
# click wiring


def _common_options(fn):
    decorators = [
        click.option("--group", required=True,
                     help="torus(1), torus(2), torus(3), su2 or so3"),
        click.option("--g", "g", default="power:1", show_default=True,
                     help="modulus of continuity: power:<p> or table:<file>"),
        click.option("--M", "M", type=float, default=None,
                     help="single cutoff (kernel, bound, walk; cap for empirical)"),
        click.option("--M-grid", "M_grid", default=None,
                     help="geometric cutoff grid start:stop:points"),
        click.option("--profile", default="paper", show_default=True,
                     help="smoothing bump: paper or plateau"),
        click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=0,
                     show_default=True),
        click.option("--reps", type=int, default=16, show_default=True,
                     help="repetitions (walk: number of steps)"),
        click.option("--points", multiple=True,
                     help="point-set CSV (repeat for a second measure)"),
        click.option("--n-list", "n_list", default="",
                     help="empirical sample sizes, e.g. 8,16,32"),
        click.option("--gap-hint", "gap_hint", type=float, default=None,
                     help="walk: add gap-relaxed totals under gap <= hint^k"),
        click.option("--out", default=".", show_default=True,
                     help="artifact output directory"),
        click.option("--verify", is_flag=True,
                     help="run transport oracles alongside and fail on "
                          "dominance violations"),
        click.option("--threads", type=int, default=1, show_default=True),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


def _dispatch(command: str, kwargs: dict):
    try:
        cfg = RunConfig.from_dict({"command": command, **kwargs})
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    sys.exit(run(cfg))


@click.group()
@click.version_option(version=__version__)
def main():
    """Certified Wasserstein bounds with machine-checked oracles."""


def _register(name: str, summary: str):
    @main.command(name=name, short_help=summary)
    @_common_options
    def _cmd(**kwargs):
        _dispatch(name, kwargs)

    _cmd.__doc__ = summary
    return _cmd


_register("bound", "Bound the distance between measures (or to Haar).")
_register("audit", "Equidistribution audit of a point set against Haar.")
_register("walk", "Exact Fourier-side random-walk bounds per step.")
_register("empirical", "Empirical-measure sweeps with variance checks.")
_register("kernel", "Smoothing-kernel coefficients at a cutoff.")
_register("oracle", "Exact transport oracle for two point sets.")


if __name__ == "__main__":
    main()
