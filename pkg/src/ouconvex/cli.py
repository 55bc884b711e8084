"""Command-line front end: ``ouconvex --config run.toml [--command solve] ...``.

Exit status: 0 all assertions pass, 1 a tolerance check failed, 2 bad
configuration, 3 I/O error.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import convexity, diffusion, harmonics, radial, solver
from .harmonics import BoundaryError, BoundarySpec, boundary_from_dict
from .specfun import gamma_d

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
COMMANDS = ("solve", "verify", "simulate", "convexity")
EXPERIMENTS = ("exit_probability", "second_moment", "feynman_kac", "lambda",
               "invariant_tail", "mean_radius", "lemma5", "coupling")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    radii: tuple = (1.0, 5.0, 50.0)
    n_dirs: int = 8
    residual: bool = False


@dataclass(frozen=True)
class RunConfig:
    command: str
    dim: int = 2
    boundary: BoundarySpec = None
    lmax: int = None
    grid: GridConfig = GridConfig()
    mc: diffusion.McConfig = diffusion.McConfig(n_paths=20_000, dt=1e-2)
    tolerances: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    probe: convexity.ProbeConfig = convexity.ProbeConfig()
    output_path: str = None
    format: str = "json"

    def resolved(self):
        """Canonical document; leaves out settings that must not change results."""
        mc = asdict(self.mc)
        mc.pop("worker_streams")
        return {
            "command": self.command,
            "dim": self.dim,
            "boundary": self.boundary.to_dict() if self.boundary else None,
            "lmax": self.lmax,
            "grid": {"radii": list(self.grid.radii), "n_dirs": self.grid.n_dirs,
                     "residual": self.grid.residual},
            "mc": mc,
            "tolerances": dict(sorted(self.tolerances.items())),
            "experiment": self.experiment,
            "probe": asdict(self.probe),
        }

    def config_hash(self):
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_TOP_KEYS = {"command", "dim", "boundary", "lmax", "grid", "mc", "tolerances",
             "experiment", "probe", "output_path", "format"}
_TOLERANCE_KEYS = {"residual", "zscore", "gap", "tail"}


def _strict(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a table/object")
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise ConfigError(f"unknown field {where + '.' if where else ''}{extra[0]}")


def parse_config(doc, overrides=None):
    """Build a RunConfig from a parsed document plus CLI overrides."""
    doc = dict(doc)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    _strict(doc, _TOP_KEYS, "")
    if "command" in overrides:
        doc["command"] = overrides["command"]
    command = doc.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {command!r}")
    dim = doc.get("dim", 2)
    if not isinstance(dim, int) or dim < 2:
        raise ConfigError(f"dim must be an integer >= 2, got {dim!r}")

    boundary = None
    if "boundary" in doc:
        try:
            boundary = boundary_from_dict(doc["boundary"], d=dim)
        except BoundaryError as exc:
            raise ConfigError(f"{exc} (field: {exc.field})") from None
    elif command in ("solve", "convexity"):
        raise ConfigError("field boundary is required for this command")

    lmax = doc.get("lmax")
    if lmax is not None and (not isinstance(lmax, int) or not 0 <= lmax <= harmonics.MAX_DEGREE):
        raise ConfigError(f"lmax must be an integer in [0, {harmonics.MAX_DEGREE}]")

    g = doc.get("grid", {})
    _strict(g, {"radii", "n_dirs", "residual"}, "grid")
    grid = GridConfig(tuple(float(r) for r in g.get("radii", GridConfig.radii)),
                      int(g.get("n_dirs", GridConfig.n_dirs)), bool(g.get("residual", False)))
    if any(r < 0 for r in grid.radii) or grid.n_dirs < 1:
        raise ConfigError("grid.radii must be >= 0 and grid.n_dirs >= 1")

    m = dict(doc.get("mc", {}))
    _strict(m, {"n_paths", "dt", "t_max", "seed", "worker_streams"}, "mc")
    base = asdict(RunConfig.mc)
    base.update(m)
    if "seed" in overrides:
        base["seed"] = overrides["seed"]
    if "workers" in overrides:
        base["worker_streams"] = overrides["workers"]
    try:
        mc = diffusion.McConfig(**base)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"mc: {exc}") from None

    tol = doc.get("tolerances", {})
    _strict(tol, _TOLERANCE_KEYS, "tolerances")
    tol = {k: float(v) for k, v in tol.items()}

    exp = doc.get("experiment", {})
    if not isinstance(exp, dict):
        raise ConfigError("experiment must be a table/object")
    if command == "simulate":
        name = exp.get("name")
        if name not in EXPERIMENTS:
            raise ConfigError(f"experiment.name must be one of {EXPERIMENTS}, got {name!r}")
        _strict(exp, {"name"} | set(_EXPERIMENT_DEFAULTS[name]), "experiment")
        exp = {**_EXPERIMENT_DEFAULTS[name], **exp}

    p = doc.get("probe", {})
    _strict(p, set(asdict(convexity.ProbeConfig())), "probe")
    try:
        probe = convexity.ProbeConfig(**p)
    except TypeError as exc:
        raise ConfigError(f"probe: {exc}") from None

    fmt = overrides.get("format", doc.get("format", "json"))
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    out = overrides.get("output", doc.get("output_path"))
    return RunConfig(command, dim, boundary, lmax, grid, mc, tol, exp, probe, out, fmt)


def load_config(path, overrides=None):
    """Read a JSON or TOML file; OSError propagates (I/O), parse errors become ConfigError."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        if str(path).endswith(".toml"):
            doc = tomllib.loads(raw.decode())
        else:
            doc = json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_config(doc, overrides)


# -- experiments ------------------------------------------------------------------

_EXPERIMENT_DEFAULTS = {
    "exit_probability": {"x_norm": 1.0, "r": 0.5, "R": 2.0, "crossing": "bridge"},
    "second_moment": {"x_norm": 1.0, "t": 0.5},
    "feynman_kac": {"l": 1, "r": 1.0, "times": [0.5, 1.0, 2.0, 4.0]},
    "lambda": {},
    "invariant_tail": {"thresholds": [10.0, 100.0]},
    "mean_radius": {"radii": [0.5, 1.0, 2.0], "t": 6.0},
    "lemma5": {"r": 1.0, "times": [0.25, 1.0, 4.0], "n_dirs": 16, "lambda_paths": 1_000_000},
    "coupling": {"x": None, "y": None, "alpha": 0.5, "t": 1.0, "w": "norm"},
}

_COUPLING_W = {
    "norm": lambda X: np.linalg.norm(X, axis=1),
    "x1_squared": lambda X: X[:, 0] ** 2,
    "neg_norm": lambda X: -np.linalg.norm(X, axis=1),
}


def _mc_record(name, params, est, reference=None):
    rec = {"experiment": name, "params": params, "estimate": est.mean,
           "std_error": est.std_error, "n": est.n}
    if est.rejected:
        rec["rejected"] = est.rejected
    if reference is not None:
        rec["reference_value"] = reference
        rec["z_score"] = (est.mean - reference) / est.std_error if est.std_error > 0 else 0.0
    return rec


def simulate(cfg):
    """Run the configured Monte Carlo experiment; returns (records, passed)."""
    exp = dict(cfg.experiment)
    name = exp.pop("name")
    d, mc = cfg.dim, cfg.mc
    zmax = cfg.tolerances.get("zscore", 3.0)
    e1 = np.eye(d)[0]
    records, passed = [], True
    if name == "exit_probability":
        est = diffusion.exit_probability(d, exp["x_norm"] * e1, exp["r"], exp["R"], mc,
                                         crossing=exp["crossing"])
        ref = diffusion.exit_probability_reference(d, exp["x_norm"], exp["r"], exp["R"])
        records.append(_mc_record(name, exp, est, ref))
    elif name == "second_moment":
        x = exp["x_norm"] * e1
        est = diffusion.second_moment(d, x, exp["t"], mc)
        records.append(_mc_record(name, exp, est, diffusion.second_moment_reference(d, x, exp["t"])))
    elif name == "feynman_kac":
        ests = diffusion.feynman_kac_mode(d, exp["l"], exp["r"], exp["times"], mc)
        f = float(radial.f_l(radial.mode(d, exp["l"]), exp["r"]))
        for t, est in zip(exp["times"], ests):
            rec = _mc_record(name, {**exp, "times": None, "t": t}, est)
            rec["lower"], rec["upper"] = f, exp["r"]
            ok = f - zmax * est.std_error <= est.mean <= exp["r"] + zmax * est.std_error
            rec["sandwich_ok"] = bool(ok)
            passed &= ok
            records.append(rec)
    elif name == "lambda":
        records.append(_mc_record(name, exp, diffusion.estimate_lambda(d, mc)))
    elif name == "invariant_tail":
        a = diffusion.sample_a_inf(mc, "closed_form")
        for x in exp["thresholds"]:
            p = float(np.mean(a > x))
            est = diffusion.McEstimate(p, math.sqrt(p * (1 - p) / len(a)), len(a))
            records.append(_mc_record(name, {"threshold": x}, est, diffusion.a_inf_tail_reference(x)))
    elif name == "mean_radius":
        for rho, est in zip(exp["radii"], diffusion.mean_radius_offset(d, exp["radii"], exp["t"], mc)):
            records.append(_mc_record(name, {"x_norm": rho, "t": exp["t"]}, est))
    elif name == "lemma5":
        g = cfg.boundary or BoundarySpec.builtin("constant", d)
        u = solver.solve(g, cfg.lmax)
        lam = diffusion.estimate_lambda(d, mc.replace(n_paths=exp["lambda_paths"]))
        gaps = diffusion.lemma5_gap(g, u, exp["r"], exp["times"], mc, exp["n_dirs"], lam.mean)
        for t, (gap, floor) in zip(exp["times"], gaps):
            records.append({"experiment": name, "params": {"r": exp["r"], "t": t},
                            "gap": gap, "noise_floor": floor, "lambda": lam.mean})
        seq = [gp for gp, _ in gaps]
        passed = all(b < a for a, b in zip(seq, seq[1:]))
    elif name == "coupling":
        x = np.asarray(exp["x"] or e1, dtype=float)
        y = np.asarray(exp["y"] or -0.5 * e1 + (np.eye(d)[1] if d > 1 else 0), dtype=float)
        if exp["w"] not in _COUPLING_W:
            raise ConfigError(f"experiment.w must be one of {sorted(_COUPLING_W)}")
        rep = diffusion.convexity_coupling_check(_COUPLING_W[exp["w"]], x, y, exp["alpha"], exp["t"], mc)
        records.append({"experiment": name, "params": {**exp, "x": x.tolist(), "y": y.tolist()},
                        **rep.to_dict()})
        passed = rep.violations == 0 if exp["w"] != "neg_norm" else rep.violations > 0
    for rec in records:
        rec["seed"] = mc.seed
        if "z_score" in rec:
            passed &= abs(rec["z_score"]) <= zmax
    return records, bool(passed)


# -- solve, convexity, verify -------------------------------------------------------

def solve_rows(cfg):
    g = cfg.boundary
    u = solver.solve(g, cfg.lmax, radius=max(cfg.grid.radii))
    dirs = solver.directions(cfg.dim, cfg.grid.n_dirs)
    rows, worst = [], 0.0
    for R in cfg.grid.radii:
        pts = R * dirs
        vals, _ = u.evaluate(pts, with_tail=False)
        tail = u.tail_bound(R)
        res = solver.residual(u, pts) if cfg.grid.residual and R > 0 else None
        for k, x in enumerate(pts):
            row = {f"x_{i + 1}": float(x[i]) for i in range(cfg.dim)}
            row.update(radius=R, value=float(vals[k]), tail_bound=tail)
            if res is not None:
                row["residual"] = float(res[k])
                worst = max(worst, row["residual"])
            rows.append(row)
    passed = True
    if "residual" in cfg.tolerances and cfg.grid.residual:
        passed = worst < cfg.tolerances["residual"]
    if "tail" in cfg.tolerances:
        passed &= all(r["tail_bound"] < cfg.tolerances["tail"] for r in rows)
    return rows, u, passed


def convexity_record(cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", convexity.ConditioningWarning)
        u_rep, v_rep, agree = convexity.theorem2_harness(cfg.boundary, cfg.lmax, cfg.probe)
    rec = {"u": u_rep.to_dict(), "v": v_rep.to_dict(), "agree": agree}
    return rec, agree and u_rep.consistent and v_rep.consistent


def _check(name, claim, value, threshold, passed):
    return {"name": name, "claim": claim, "value": value, "threshold": threshold,
            "passed": bool(passed)}


def verify(cfg):
    """Default suite of fast checks; returns (checks, all_passed)."""
    mc = cfg.mc
    checks = []
    r = np.linspace(0.0, 100.0, 201)
    err = max(float(np.max(np.abs(radial.f_l(radial.mode(d, 1), r) - r) / np.maximum(r, 1e-300)))
              for d in (2, 3, 5))
    checks.append(_check("radial_identity", "f_1(r) = r", err, 1e-10, err < 1e-10))

    rr = np.linspace(0.1, 50, 100)
    h = radial.fd_step(rr)
    res = max(max(float(np.max(np.abs(radial.mode_residual(d, l, rr, h)))) for l in (2, 5, 20))
              for d in (2, 3))
    res0 = max(float(np.max(np.abs(radial.f0_residual(d, rr, h)))) for d in (2, 3))
    checks.append(_check("ode_residual", "radial modes solve their ODEs", max(res, res0), 1e-5,
                         max(res, res0) < 1e-5))

    err = max(abs(radial.inner_integral(d, 1e300) - 0.5 / gamma_d(d)) for d in (2, 3, 5, 10))
    checks.append(_check("integral_identity", "int v^{d-1}/(1+v^2)^{(d+1)/2} = 1/(2 gamma_d)",
                         err, 1e-10, err < 1e-10))

    rs = np.geomspace(0.1, 100, 50)
    err = float(np.max(np.abs(radial.scale_h(3, rs) - (rs - 1 / rs))))
    checks.append(_check("scale_function", "h(r) = r - 1/r in d = 3", err, 1e-10, err < 1e-10))

    onsets = [radial.decay_onset(d, R) for d in (2, 3) for R in (1.0, 2.0)]
    checks.append(_check("decay_envelope", "sup f_l <= delta^l beyond a finite onset",
                         max(onsets), 30, max(onsets) <= 30))

    ok, worst = True, []
    for name, d in (("constant", 2), ("constant", 3), ("cos_2theta", 2), ("abs_cos_theta", 2)):
        g = BoundarySpec.builtin(name, d)
        u = solver.solve(g)
        gaps = [solver.boundary_gap(u, g, R) for R in (1.0, 5.0, 50.0)]
        ok &= gaps[0] > gaps[1] > gaps[2]
        worst.append(gaps[2])
    checks.append(_check("boundary_gap_decreasing", "u(r th)/r - g(th) -> 0 as r grows",
                         max(worst), None, ok))

    x = solver.sample_points(2, np.geomspace(0.2, 20, 6), 16)
    res = max(float(np.max(solver.residual(solver.solve(BoundarySpec.builtin(n, 2)), x)))
              for n in ("constant", "cos_2theta"))
    checks.append(_check("elliptic_residual", "series solution satisfies the PDE", res, 1e-5, res < 1e-5))

    est = diffusion.exit_probability(3, [1.0, 0, 0], 0.5, 2.0, mc)
    z = (est.mean - 0.5) / est.std_error
    checks.append(_check("exit_probability", "scale-function exit law", z, 3.0, abs(z) <= 3))

    est = diffusion.second_moment(2, [0.0, 0.0], 1.0, mc)
    ref = diffusion.second_moment_reference(2, np.zeros(2), 1.0)
    z = (est.mean - ref) / est.std_error
    checks.append(_check("second_moment", "E|X_t|^2 = (|x|^2 + d) e^t - d", z, 3.0, abs(z) <= 3))

    rep = diffusion.convexity_coupling_check(_COUPLING_W["norm"], [1.0, 2.0], [-3.0, 0.5], 0.5, 1.0, mc)
    checks.append(_check("pathwise_affinity", "x -> X^x(t) is affine on every path",
                         rep.max_affine_error, 1e-14,
                         rep.violations == 0 and rep.max_affine_error < 1e-14))

    probe = convexity.ProbeConfig(n_pairs=4000, n_probes=128)
    verdicts = {}
    for name, expect in (("constant", True), ("cos_theta", True), ("abs_cos_theta", True),
                         ("cos_2theta", False)):
        u_rep, v_rep, agree = convexity.theorem2_harness(BoundarySpec.builtin(name, 2), probe=probe)
        verdicts[name] = agree and u_rep.convex == expect
    checks.append(_check("convexity_equivalence", "u convex iff v convex", verdicts, None,
                         all(verdicts.values())))
    return checks, all(c["passed"] for c in checks)


# -- output -----------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def render(cfg, payload, rows=None):
    """Serialise a run; JSON embeds the resolved config and its hash."""
    if cfg.format == "csv":
        rows = rows if rows is not None else payload.get("records", payload.get("checks", []))
        buf = io.StringIO()
        flat = [{k: (json.dumps(_jsonable(v), sort_keys=True) if isinstance(v, (dict, list)) else v)
                 for k, v in row.items()} for row in rows]
        cols = list(dict.fromkeys(k for row in flat for k in row))
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in flat:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                             for k, v in row.items()})
        return buf.getvalue()
    doc = {"config": cfg.resolved(), "config_hash": cfg.config_hash(), "seed": cfg.mc.seed, **payload}
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"


def execute(cfg):
    """Run the pipeline; returns (text, passed)."""
    if cfg.command == "solve":
        rows, _, passed = solve_rows(cfg)
        return render(cfg, {"rows": rows, "passed": passed}, rows), passed
    if cfg.command == "simulate":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", diffusion.McWarning)
            records, passed = simulate(cfg)
        return render(cfg, {"records": records, "passed": passed}), passed
    if cfg.command == "convexity":
        rec, passed = convexity_record(cfg)
        rows = [{"function": k, **{kk: vv for kk, vv in rec[k].items() if kk != "witness"},
                 "witness": rec[k]["witness"]} for k in ("u", "v")]
        return render(cfg, {**rec, "passed": passed}, rows), passed
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        checks, passed = verify(cfg)
    return render(cfg, {"checks": checks, "passed": passed}), passed


def describe(cfg):
    """Human-readable plan of what ``run`` would do."""
    lines = [f"command: {cfg.command}", f"dim: {cfg.dim}", f"config hash: {cfg.config_hash()}"]
    if cfg.boundary is not None:
        g = cfg.boundary
        lines.append(f"boundary: {json.dumps(g.to_dict(), sort_keys=True)}")
    if cfg.command in ("solve", "convexity"):
        R = max(cfg.grid.radii) if cfg.command == "solve" else cfg.probe.radius
        L = cfg.lmax if cfg.lmax is not None else solver.choose_L(g, R)
        rule = "given" if cfg.lmax is not None else f"tail rule at R={R:g} (target {solver.TAIL_TARGET:g})"
        lines.append(f"truncation L = {L} ({rule})")
        if g.d == 2:
            lines.append(f"projection: FFT on {max(4 * L + 16, harmonics.FFT_MIN_NODES)} circle nodes")
        else:
            lines.append(f"projection: {2 * L + 16} Gauss-Gegenbauer nodes")
    if cfg.command == "solve":
        lines.append(f"grid: radii {list(cfg.grid.radii)} x {cfg.grid.n_dirs} directions"
                     f"{' with residuals' if cfg.grid.residual else ''}")
    if cfg.command in ("simulate", "verify"):
        mc = cfg.mc
        n_blocks = -(-mc.n_paths // diffusion.BLOCK)
        lines.append(f"monte carlo: {mc.n_paths} paths, dt={mc.dt:g}, t_max={mc.t_max:g}, seed={mc.seed}")
        lines.append(f"streams: {n_blocks} blocks of <= {diffusion.BLOCK} paths on "
                     f"{mc.worker_streams} worker(s)")
    if cfg.command == "simulate":
        lines.append(f"experiment: {json.dumps(cfg.experiment, sort_keys=True)}")
    if cfg.command == "convexity":
        lines.append(f"probe: {json.dumps(asdict(cfg.probe), sort_keys=True)}")
    if cfg.command == "verify":
        lines.append("checks: radial_identity, ode_residual, integral_identity, scale_function, "
                     "decay_envelope, boundary_gap_decreasing, elliptic_residual, exit_probability, "
                     "second_moment, pathwise_affinity, convexity_equivalence")
    lines.append(f"output: {cfg.output_path or '<stdout>'} ({cfg.format})")
    return "\n".join(lines)


def run(cfg, dry_run=False, stdout=None):
    """Execute (or describe) a configuration; returns the exit status."""
    stdout = stdout or sys.stdout
    if dry_run:
        print(describe(cfg), file=stdout)
        return EXIT_OK
    text, passed = execute(cfg)
    if cfg.output_path:
        try:
            with open(cfg.output_path, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error: cannot write {cfg.output_path}: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        stdout.write(text)
    return EXIT_OK if passed else EXIT_TOLERANCE


def build_parser():
    p = argparse.ArgumentParser(prog="ouconvex", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON or TOML run configuration")
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--seed", type=int)
    p.add_argument("--output")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--workers", type=int)
    p.add_argument("--dry-run", action="store_true", help="print the plan and exit")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {"command": args.command, "seed": args.seed, "output": args.output,
                 "format": args.format, "workers": args.workers}
    try:
        if args.config:
            cfg = load_config(args.config, overrides)
        else:
            cfg = parse_config({}, overrides)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg, dry_run=args.dry_run)
    except (ConfigError, BoundaryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
