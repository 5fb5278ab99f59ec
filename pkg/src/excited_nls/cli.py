"""Command-line front end.

    excited-nls <subcommand> [--config run.yaml] [--out DIR] [--seed N] [--threads N]

Subcommands: soliton, spectrum, evolve, classify, manifold, nineclass,
calibrate, curves, check.  Every run writes its artifacts and a
``manifest.json`` under the output directory.  Exit codes: 0 ok, 1 solver or
invariant failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .grid import RadialField, RadialGrid
from .modulation import CALIBRATION_ENV, ConfigError, ThresholdConfig

log = logging.getLogger("excited_nls")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class InvariantFailure(RuntimeError):
    pass


# -- configuration -------------------------------------------------------------


@dataclass
class RunConfig:
    potential: dict = field(default_factory=lambda: {"family": "gaussian", "c": 6.0, "sigma": 1.0})
    grid: dict = field(default_factory=lambda: {"n_points": 1024, "r_max": 30.0})
    omega: float = 100.0
    thresholds: dict = field(default_factory=dict)
    thresholds_file: str | None = None
    evolve: dict = field(default_factory=lambda: {
        "horizon": 20.0, "dt": 1e-3, "sample_dt": 0.01, "scheme": "relaxation",
        "eps": 1e-3, "direction": "plus", "sponge_width": None,
    })
    manifold: dict = field(default_factory=lambda: {
        "tol": 1e-10, "delta_plus": 0.02, "zeta_dim": 4,
        "lambda_minus": [0.0, 0.005, 0.01, 0.02, 0.04], "zeta_coeffs": None,
    })
    nineclass: dict = field(default_factory=lambda: {
        "eta": 2e-3, "zeta_scale": 0.01, "zeta_index": 0, "tol": 1e-12,
    })
    curves: dict = field(default_factory=lambda: {"omegas": "1e2..1e6", "rel_step": 1e-2})
    calibrate: dict = field(default_factory=lambda: {"count": 400})
    seed: int = 0
    threads: int = 1

    @classmethod
    def from_mapping(cls, data: dict | None) -> "RunConfig":
        data = dict(data or {})
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        base = cls()
        for key, value in data.items():
            default = getattr(base, key)
            if isinstance(default, dict) and key not in ("potential", "thresholds"):
                if not isinstance(value, dict):
                    raise ConfigError(f"{key} must be a mapping")
                bad = set(value) - set(default)
                if bad:
                    raise ConfigError(f"unknown keys in {key}: {sorted(bad)}")
                setattr(base, key, {**default, **value})
            else:
                setattr(base, key, value)
        return base.validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        text = Path(path).read_text()
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        return cls.from_mapping(data)

    def validate(self) -> "RunConfig":
        if not isinstance(self.potential, dict):
            raise ConfigError("potential must be a mapping")
        try:
            self.potential_spec()
            self.make_grid()
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        if not (isinstance(self.omega, (int, float)) and self.omega > 0):
            raise ConfigError("omega must be a positive number")
        if int(self.threads) < 1:
            raise ConfigError("threads must be >= 1")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        self.thresholds_config()
        return self

    def potential_spec(self):
        from .potential import PotentialSpec

        return PotentialSpec.from_config(self.potential)

    def make_grid(self) -> RadialGrid:
        return RadialGrid(int(self.grid["n_points"]), float(self.grid["r_max"]))

    def thresholds_config(self) -> ThresholdConfig:
        base = ThresholdConfig.load(self.thresholds_file)
        if not self.thresholds:
            return base
        return ThresholdConfig.from_json({**base.to_json(), **self.thresholds})

    def to_json(self) -> dict:
        return asdict(self)


def parse_omegas(spec) -> list[float]:
    """``"1e2..1e6"`` (decades), ``"1e2..1e6:9"`` (log-spaced count) or a list."""
    if isinstance(spec, (list, tuple)):
        return [float(x) for x in spec]
    spec = str(spec)
    if ".." not in spec:
        return [float(x) for x in spec.split(",")]
    lo, rest = spec.split("..", 1)
    hi, _, count = rest.partition(":")
    lo, hi = float(lo), float(hi)
    if not 0 < lo <= hi:
        raise ConfigError(f"bad omega range {spec!r}")
    n = int(count) if count else int(round(np.log10(hi / lo))) + 1
    return [float(x) for x in np.geomspace(lo, hi, max(n, 1))]


# -- outputs --------------------------------------------------------------------


class Output:
    """Single collector for the artifacts of one run."""

    def __init__(self, root: Path, command: str, cfg: RunConfig):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.command, self.cfg = command, cfg
        self.files: list[str] = []
        self.summary: dict = {}

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.root / name

    def json(self, name: str, data) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable))
        return p

    def csv(self, name: str, header: list[str], rows) -> Path:
        p = self.path(name)
        data = np.asarray(rows, dtype=float)
        np.savetxt(p, data.reshape(-1, len(header)), delimiter=",", header=",".join(header),
                   comments="", fmt="%.15e")
        return p

    def field(self, name: str, f: RadialField) -> Path:
        p = self.path(name)
        if name.endswith(".csv"):
            f.to_csv(p)
        else:
            f.save(p)
        return p

    def manifest(self, status: str, elapsed: float) -> Path:
        entries = []
        for name in sorted(set(self.files)):
            blob = (self.root / name).read_bytes()
            entries.append({"file": name, "bytes": len(blob), "sha256": hashlib.sha256(blob).hexdigest()})
        data = {
            "command": self.command,
            "version": __version__,
            "status": status,
            "elapsed_s": round(elapsed, 3),
            "config": self.cfg.to_json(),
            "summary": self.summary,
            "artifacts": entries,
        }
        p = self.root / "manifest.json"
        p.write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable))
        return p


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(type(x))


# -- shared setup ----------------------------------------------------------------


def _soliton(cfg: RunConfig, omega: float | None = None):
    from .linearization import build_pencil
    from .solitons import excited_soliton

    sol = excited_soliton(float(omega or cfg.omega), cfg.potential_spec(), cfg.make_grid())
    return sol, build_pencil(sol)


def _initial_datum(cfg: RunConfig, sol, pencil) -> np.ndarray:
    e = cfg.evolve
    eps = float(e["eps"])
    kind = e["direction"]
    if kind == "plus":
        return (sol.q + eps * pencil.g_plus).astype(complex)
    if kind == "minus":
        return (sol.q + eps * pencil.g_minus).astype(complex)
    if kind == "scale":
        return ((1.0 + eps) * sol.q).astype(complex)
    raise ConfigError(f"evolve.direction must be plus, minus or scale, not {kind!r}")


# -- subcommands -----------------------------------------------------------------


def cmd_soliton(cfg: RunConfig, out: Output) -> int:
    from .functionals import evaluate_frame

    sol, _ = _soliton(cfg)
    meta = sol.metadata()
    meta["functionals"] = evaluate_frame(sol.frame(), sol.q, 1.0).to_json()
    out.field("Q_omega.csv", sol.Q)
    out.field("Q_omega_prime.csv", sol.Qprime)
    out.json("soliton.json", meta)
    out.summary = {"omega": sol.omega, "residual_Hm1": sol.residual_hm1}
    if not sol.residual_hm1 < 1e-8:
        raise InvariantFailure(f"soliton residual {sol.residual_hm1:.2e} above the gate")
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, out: Output) -> int:
    sol, p = _soliton(cfg)
    g = sol.grid
    info = {
        "omega": sol.omega,
        "alpha": p.alpha,
        "normalization": p.normalization(),
        "eigen_residuals": p.eigen_residuals(),
        "gauge_residual": p.gauge_residual(),
        "generalized_kernel_residual": p.generalized_kernel_residual(),
        "spectrum": p.spectrum_counts(),
        "K2_pairing": p.K2_derivative_pairing(),
    }
    out.csv("eigenpair.csv", ["r", "g1", "g2"], np.column_stack([g.r, p.g1, p.g2]))
    out.json("spectrum.json", info)
    out.summary = {"alpha": p.alpha, "normalization": info["normalization"]}
    if abs(info["normalization"] - 2.0) > 1e-8 or max(info["eigen_residuals"].values()) > 1e-8:
        raise InvariantFailure("eigenpair gate failed")
    return EXIT_OK


def cmd_evolve(cfg: RunConfig, out: Output) -> int:
    from .evolve import run_trajectory

    sol, p = _soliton(cfg)
    e = cfg.evolve
    u0 = _initial_datum(cfg, sol, p)
    rec = run_trajectory(u0, sol, p, cfg.thresholds_config(), float(e["horizon"]), "forward",
                         float(e["dt"]), sample_dt=float(e["sample_dt"]), detect=False,
                         sponge_width=e["sponge_width"], scheme=e["scheme"])
    path = out.path("trajectory.csv")
    rec.to_csv(path)
    out.summary = {"samples": len(rec.times), "t_end": float(rec.times[-1]), "evidence": rec.evidence}
    return EXIT_OK


def cmd_classify(cfg: RunConfig, out: Output) -> int:
    from .evolve import run_trajectory

    sol, p = _soliton(cfg)
    e = cfg.evolve
    u0 = _initial_datum(cfg, sol, p)
    th = cfg.thresholds_config()
    result = {}
    for direction in ("forward", "backward"):
        rec = run_trajectory(u0, sol, p, th, float(e["horizon"]), direction, float(e["dt"]),
                             sample_dt=float(e["sample_dt"]), sponge_width=e["sponge_width"],
                             scheme=e["scheme"])
        rec.to_csv(out.path(f"trajectory_{direction}.csv"))
        result[direction] = {"verdict": rec.verdict, "evidence": rec.evidence}
    out.field("initial_datum.bin", RadialField(sol.grid, u0))
    out.json("classification.json", result)
    out.summary = {d: result[d]["verdict"] for d in result}
    return EXIT_OK


def _bisect_job(args):
    cfg_json, lam, coeffs = args
    from .manifold import bisect_G, zeta_basis, zeta_from_coeffs

    cfg = RunConfig.from_mapping(cfg_json)
    sol, p = _soliton(cfg)
    m = cfg.manifold
    zeta = None
    if coeffs is not None:
        zeta = zeta_from_coeffs(coeffs, zeta_basis(sol, p, int(m["zeta_dim"])))
    s = bisect_G(float(lam), zeta, sol, p, cfg.thresholds_config(), tol=float(m["tol"]),
                 delta_plus=float(m["delta_plus"]), horizon=float(cfg.evolve["horizon"]),
                 dt=float(cfg.evolve["dt"]), zeta_coeffs=coeffs)
    return s.to_json()


def _pool_map(fn, jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, jobs))


def cmd_manifold(cfg: RunConfig, out: Output) -> int:
    m = cfg.manifold
    coeffs = m["zeta_coeffs"]
    jobs = [(cfg.to_json(), lam, coeffs) for lam in m["lambda_minus"]]
    samples = _pool_map(_bisect_job, jobs, int(cfg.threads))
    out.json("manifold.json", {"omega": cfg.omega, "samples": samples})
    out.csv("manifold.csv", ["lambda_minus", "G", "bracket_width"],
            [[s["b_minus"], s["G_value"], s["bracket_width"]] for s in samples])
    out.summary = {"samples": len(samples)}
    return EXIT_OK


def cmd_nineclass(cfg: RunConfig, out: Output) -> int:
    from .manifold import initial_datum, nine_class_explorer, zeta_basis

    sol, p = _soliton(cfg)
    n = cfg.nineclass
    zeta = None
    if float(n["zeta_scale"]) != 0.0:
        basis = zeta_basis(sol, p, int(cfg.manifold["zeta_dim"]))
        zeta = float(n["zeta_scale"]) * basis[int(n["zeta_index"])]
    cat = nine_class_explorer(sol, p, cfg.thresholds_config(), zeta=zeta, eta=float(n["eta"]),
                              horizon=float(cfg.evolve["horizon"]), tol=float(n["tol"]),
                              dt=float(cfg.evolve["dt"]))
    for k, e in enumerate(cat["entries"]):
        name = f"witness_{k}.bin"
        out.field(name, RadialField(sol.grid, initial_datum(sol, p, e["b_plus"], e["b_minus"], zeta)))
        e["initial_datum"] = name
    out.json("catalog.json", cat)
    out.summary = {"definite_classes": cat["n_definite"], "mismatched": len(cat["mismatched"])}
    if cat["mismatched"]:
        raise InvariantFailure("explorer verdicts contradict the offset signs")
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, out: Output) -> int:
    from .modulation import calibrate_variational
    from .solitons import find_omega_star

    V, g = cfg.potential_spec(), cfg.make_grid()
    th = cfg.thresholds_config()
    om_star = find_omega_star(V, g)
    sol, p = _soliton(cfg)
    rng = np.random.default_rng(int(cfg.seed))
    deltas, eps, kappa = calibrate_variational(sol, p, th, rng, count=int(cfg.calibrate["count"]))
    data = th.to_json()
    data.update(
        omega_star=float(max(om_star, th.omega_star)),
        delta_table=[float(x) for x in deltas],
        eps_table=[float(x) for x in eps],
        kappa_table=[float(x) for x in kappa],
        provenance={
            "source": "calibrate",
            "omega": cfg.omega,
            "omega_star_found": float(om_star),
            "potential": cfg.potential,
            "grid": cfg.grid,
            "seed": int(cfg.seed),
            "samples": int(cfg.calibrate["count"]),
            "alpha": p.alpha,
        },
    )
    calibrated = ThresholdConfig.from_json(data)
    out.json("thresholds.json", calibrated.to_json())
    target = getattr(out, "calibration_target", None)
    if target:
        calibrated.save(target)
    out.summary = {"omega_star": calibrated.omega_star, "written_to_env_path": bool(target)}
    return EXIT_OK


def _curve_job(args):
    cfg_json, om = args
    from .solitons import energy_curves

    cfg = RunConfig.from_mapping(cfg_json)
    return energy_curves([om], cfg.potential_spec(), cfg.make_grid(), float(cfg.curves["rel_step"]))[0]


def cmd_curves(cfg: RunConfig, out: Output) -> int:
    omegas = parse_omegas(cfg.curves["omegas"])
    rows = _pool_map(_curve_job, [(cfg.to_json(), om) for om in omegas], int(cfg.threads))
    cols = list(rows[0])
    out.csv("curves.csv", cols, [[r[c] for c in cols] for r in rows])
    out.summary = {"omegas": omegas}
    return EXIT_OK


def run_checks(cfg: RunConfig) -> list[dict]:
    """Fast invariant suite; each entry has ``name``, ``value``, ``limit`` and ``ok``."""
    from .evolve import evolve
    from .functionals import evaluate
    from .linearization import expansion_defect, project, random_radial_fields
    from .modulation import decompose_near, reconstruct
    from .solitons import compute_Q

    rows = []

    def add(name, value, limit):
        rows.append({"name": name, "value": float(value), "limit": limit, "ok": bool(value <= limit)})

    Q = compute_Q(RadialGrid(131072, 32.0))
    f = evaluate(Q, cfg.potential_spec().zero())
    M = f.M
    add("pohozaev E0 = M", abs(f.E0 - M) / M, 1e-6)
    add("pohozaev H0 = 3M", abs(f.H0 - 3 * M) / M, 1e-6)
    add("pohozaev G = 2M", abs(f.G - 2 * M) / M, 1e-6)
    add("pohozaev K2 = 0", abs(f.K2) / M, 1e-6)

    sol, p = _soliton(cfg)
    g = sol.grid
    add("soliton residual (H^-1)", sol.residual_hm1, 1e-8)
    add("eigenpair normalization", abs(p.normalization() - 2.0), 1e-8)
    add("eigenpair residual", max(p.eigen_residuals().values()), 1e-8)
    add("gauge residual L_- Q", p.gauge_residual(), 1e-8)
    add("generalized kernel L_+ Q' = -Q", p.generalized_kernel_residual(), 1e-8)
    add("negative directions of L_+ minus one", abs(p.spectrum_counts()["Lplus_negative"] - 1), 0)

    rng = np.random.default_rng(int(cfg.seed))
    fields = random_radial_fields(g, 20, rng)
    worst = 0.0
    for v in fields:
        v = 10 ** rng.uniform(-2, 0) * v
        worst = max(worst, abs(expansion_defect(rng.uniform(0, 2 * np.pi), v, p)) / g.h1sq(v))
    add("energy expansion defect / ||v||^2", worst, 1e-8)

    th = cfg.thresholds_config()
    worst = 0.0
    for v in fields[:5]:
        z = project(1e-3 * v, p).zeta
        phi = np.exp(0.7j) * (sol.q + 1e-3 * p.g_plus + 2e-3 * p.g_minus + z - 1j * (
            g.inner(np.imag(z), sol.qp) / g.inner(sol.q, sol.qp)) * sol.q)
        dec = decompose_near(phi, sol, p, th)
        worst = max(worst, g.h1(reconstruct(dec, sol, p) - phi))
    add("decomposition round trip", worst, 1e-10)

    u = evolve(sol.q.astype(complex), sol.frame(), 1.0, dt=1e-3)
    add("soliton stationarity at t = 1", g.h1(u - np.exp(-1j) * sol.q) / g.h1(sol.q), 1e-6)
    return rows


def cmd_check(cfg: RunConfig, out: Output) -> int:
    rows = run_checks(cfg)
    out.json("checks.json", rows)
    failed = [r["name"] for r in rows if not r["ok"]]
    for r in rows:
        print(f"{'PASS' if r['ok'] else 'FAIL'}  {r['name']}: {r['value']:.3e} (limit {r['limit']:g})")
    out.summary = {"passed": len(rows) - len(failed), "failed": failed}
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {
    "soliton": cmd_soliton,
    "spectrum": cmd_spectrum,
    "evolve": cmd_evolve,
    "classify": cmd_classify,
    "manifold": cmd_manifold,
    "nineclass": cmd_nineclass,
    "calibrate": cmd_calibrate,
    "curves": cmd_curves,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="excited-nls", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML or JSON run configuration")
        sp.add_argument("--out", default=None, help="output directory (default runs/<command>)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in ("curves", "soliton", "spectrum", "evolve", "classify", "manifold",
                    "nineclass", "calibrate", "check"):
            sp.add_argument("--omega", default=None,
                            help="frequency; for curves a range like 1e2..1e6")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    # for calibrate the calibration path is the destination, not an input
    cal_target = os.environ.pop(CALIBRATION_ENV, None) if args.command == "calibrate" else None
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig().validate()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            cfg.threads = args.threads
        if args.omega is not None:
            if args.command == "curves":
                cfg.curves["omegas"] = args.omega
                parse_omegas(args.omega)
            else:
                cfg.omega = float(args.omega)
        cfg.validate()
    except (ConfigError, OSError, ValueError, yaml.YAMLError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Output(Path(args.out or Path("runs") / args.command), args.command, cfg)
    out.calibration_target = cal_target
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](cfg, out)
        status = "ok" if code == EXIT_OK else "invariant-failure"
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        code, status = EXIT_USAGE, "usage-error"
    except InvariantFailure as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        code, status = EXIT_FAIL, "invariant-failure"
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        code, status = EXIT_FAIL, "solver-failure"
    out.manifest(status, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
