"""Command-line front end.

    stirlab <subcommand> [--config FILE] [--key value ...]

Every run resolves a flat :class:`RunConfig` (defaults, then the config file,
then flags), writes its outputs into ``--out`` under names carrying the
subcommand, seed and tool version, and finally writes a manifest with the
resolved config and SHA-256 digests of the outputs.  The manifest is written
only when all outputs were.  ``--config`` also accepts a manifest, so any run
can be repeated from it.

Exit codes: 0 success, 2 configuration error, 3 inconclusive or unconverged.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import secrets
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .estimators import (ScanConfig, asymptotics_report, critical_scan, survival_probability,
                         write_report_csv)
from .genealogy import (LineageParams, estimate_z1, f1_analytic, write_genealogy_csv, z1_analytic,
                        z1_exact)
from .parallel import ENV_THREADS
from .rng import replicate_seed
from .simulator import ModelParams, StopPolicy, mass_curve, write_mass_curve_csv
from .walk import (ResourceBudgetError, build_walk_pmf, markov_identity_residual,
                   neighbor_occupation_series, occupation_analytic, simulate_v_occupation,
                   simulate_w_occupation, v_occupation_poissonized, write_series_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INCONCLUSIVE = 3

SUBCOMMANDS = ("theta", "green", "identity", "coupling", "z1", "f1", "survive", "masscurve",
               "critscan", "report")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    d: int = 3
    N: float | None = None
    lam: float | None = None
    theta: float | None = None
    reps: int = 1000
    seed: int | None = None
    horizon: float = 200.0
    mass_cap: int = 1000
    checkpoints: tuple[float, ...] = ()
    time_scale: str = "raw"
    tol: float = 1e-4
    nmax: int = 30
    t: float = 1.0
    variant: str = "F1"
    threshold: float = 0.05
    max_reps: int = 100_000
    Ns: tuple[float, ...] = ()
    out: str = "."
    threads: int | None = None

    @property
    def birth_rate(self) -> float:
        if self.lam is not None:
            return self.lam
        if self.theta is not None:
            return 1.0 + self.theta / self._need_N()
        raise ConfigError("one of lambda or theta is required")

    @property
    def drift(self) -> float:
        """theta, derived from lambda when that is what was given."""
        if self.theta is not None:
            return self.theta
        if self.lam is not None:
            return (self.lam - 1.0) * self._need_N()
        return 0.0

    def _need_N(self) -> float:
        if self.N is None:
            raise ConfigError(f"{self.subcommand} needs N")
        return self.N

    def policy(self) -> StopPolicy:
        return StopPolicy(self.horizon, self.mass_cap, self.checkpoints)


# config key -> (field name, type label)
_KEYS = {
    "subcommand": ("subcommand", "str"), "d": ("d", "int"), "N": ("N", "float?"),
    "lambda": ("lam", "float?"), "theta": ("theta", "float?"), "reps": ("reps", "int"),
    "seed": ("seed", "int?"), "horizon": ("horizon", "float"), "mass_cap": ("mass_cap", "int"),
    "checkpoints": ("checkpoints", "floats"), "time_scale": ("time_scale", "str"),
    "tol": ("tol", "float"), "nmax": ("nmax", "int"), "t": ("t", "float"),
    "variant": ("variant", "str"), "threshold": ("threshold", "float"),
    "max_reps": ("max_reps", "int"), "Ns": ("Ns", "floats"), "out": ("out", "str"),
    "threads": ("threads", "int?"),
}
_FIELD_TO_KEY = {f: k for k, (f, _) in _KEYS.items()}


def _convert(key: str, raw: str):
    _, kind = _KEYS[key]
    raw = raw.strip()
    if kind.endswith("?"):
        if raw in ("", "none", "None"):
            return None
        kind = kind[:-1]
    try:
        if kind == "int":
            return int(raw, 0)
        if kind == "float":
            return float(raw)
        if kind == "floats":
            return tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError:
        expected = "comma-separated floats" if kind == "floats" else kind
        raise ConfigError(f"{key}: expected {expected}, got {raw!r}") from None
    return raw


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(cfg: RunConfig) -> str:
    """Flat key=value text; ``parse_config`` reads it back to an equal config."""
    lines = [f"{_FIELD_TO_KEY[f.name]}={_format(getattr(cfg, f.name))}"
             for f in dataclasses.fields(cfg)]
    return "\n".join(lines) + "\n"


def _read_config_file(path: str | Path) -> dict[str, str]:
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)["config"]
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{path}: not a manifest with a config block") from exc
        return {k: str(v) for k, v in data.items()}
    pairs = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        pairs[k.strip()] = v
    return pairs


def parse_config(file: str | Path | None = None, flags: dict[str, str] | None = None) -> RunConfig:
    """Resolve a RunConfig from an optional config file plus flag overrides.

    Both sources give raw strings keyed by config key (``lambda``, ``mass_cap``
    and so on).  Unknown keys, type mismatches and giving both lambda and theta
    are errors.
    """
    raw: dict[str, str] = {}
    if file is not None:
        raw.update(_read_config_file(file))
    raw.update(flags or {})
    values = {}
    for key, text in raw.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        values[_KEYS[key][0]] = _convert(key, text)
    if values.get("subcommand") not in SUBCOMMANDS:
        raise ConfigError(f"subcommand must be one of {', '.join(SUBCOMMANDS)}")
    if values.get("lam") is not None and values.get("theta") is not None:
        raise ConfigError("lambda and theta are mutually exclusive")
    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.d < 1:
        raise ConfigError("d must be >= 1")
    if cfg.reps < 1:
        raise ConfigError("reps must be >= 1")
    if cfg.threads is not None and cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if cfg.seed is not None and not 0 <= cfg.seed < 1 << 64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if cfg.time_scale not in ("raw", "speeded_up"):
        raise ConfigError("time_scale must be raw or speeded_up")
    if cfg.variant not in ("F1", "printed"):
        raise ConfigError("variant must be F1 or printed")


# ------------------------------------------------------------------ runner

@dataclass
class Outcome:
    summary: str
    files: dict[str, str] = field(default_factory=dict)  # label -> path
    status: int = EXIT_OK
    results: dict = field(default_factory=dict)


class _Outputs:
    def __init__(self, cfg: RunConfig):
        self.dir = Path(cfg.out)
        self.stem = f"{cfg.subcommand}_seed{cfg.seed}_v{__version__}"
        self.files: dict[str, str] = {}

    def path(self, label: str, ext: str) -> Path:
        p = self.dir / f"{self.stem}_{label}.{ext}"
        self.files[label] = str(p)
        return p

    def json(self, label: str, cfg: RunConfig, results: dict) -> None:
        doc = {"tool": "stirlab", "version": __version__, "seed": cfg.seed,
               "subcommand": cfg.subcommand, "results": results}
        self.path(label, "json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _threads(cfg: RunConfig) -> int | None:
    return None if os.environ.get(ENV_THREADS) else cfg.threads


def _series(cfg: RunConfig, out: _Outputs, kind: str) -> Outcome:
    res = neighbor_occupation_series(cfg.d, cfg.tol)
    write_series_csv(res, out.path("series", "csv"), kind)
    results = {"d": cfg.d, "n_used": res.n_used, "theta": res.theta,
               "theta_halfwidth": res.tolerance, "green": res.green,
               "green_halfwidth": res.green_tolerance, "partial_sum": res.partial_sum,
               "tail_bound": res.tail_bound, "converged": res.converged}
    out.json("summary", cfg, results)
    if kind == "neighborhood":
        line = f"theta(d={cfg.d}) = {res.theta:.8f} +- {res.tolerance:.1e} (n={res.n_used})"
    else:
        line = f"G(0,0) (d={cfg.d}) = {res.green:.8f} +- {res.green_tolerance:.1e} (n={res.n_used})"
    return Outcome(line, status=EXIT_OK if res.converged else EXIT_INCONCLUSIVE, results=results)


def _identity(cfg: RunConfig, out: _Outputs) -> Outcome:
    pmf = build_walk_pmf(cfg.d, cfg.nmax)
    with open(out.path("identity", "csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "p_n_origin", "rhs", "residual"])
        for n in range(1, cfg.nmax + 1):
            lhs = pmf.origin(n)
            rhs = pmf.neighborhood(n - 1) / (2 * cfg.d)
            w.writerow([n, repr(lhs), repr(rhs), repr(abs(lhs - rhs))])
    resid = markov_identity_residual(pmf)
    results = {"d": cfg.d, "n_max": cfg.nmax, "max_residual": resid}
    out.json("summary", cfg, results)
    return Outcome(f"max residual (d={cfg.d}, n<={cfg.nmax}) = {resid:.3e}", results=results)


def _occupation_reference(d: int, N: float, t: float, chain: str) -> str:
    """Exact mean occupation; blank for W when the jump-chain pmf is too large to build."""
    try:
        return repr(occupation_analytic(d, N, t, chain))
    except ResourceBudgetError:
        return repr(v_occupation_poissonized(d, N, t)) if chain == "v" else ""


def _coupling(cfg: RunConfig, out: _Outputs) -> Outcome:
    N = cfg._need_N()
    v = simulate_v_occupation(cfg.d, N, cfg.t, cfg.reps, replicate_seed(cfg.seed, 0), _threads(cfg))
    w = simulate_w_occupation(cfg.d, N, cfg.t, cfg.reps, replicate_seed(cfg.seed, 1), _threads(cfg))
    z = (v.mean - w.mean) / math.hypot(v.stderr, w.stderr)
    with open(out.path("coupling", "csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["chain", "d", "N", "t", "reps", "mean", "stderr", "analytic"])
        for name, est in (("V", v), ("W", w)):
            wr.writerow([name, cfg.d, N, cfg.t, est.reps, repr(est.mean), repr(est.stderr),
                         _occupation_reference(cfg.d, N, cfg.t, name.lower())])
    results = {"v_mean": v.mean, "v_stderr": v.stderr, "w_mean": w.mean, "w_stderr": w.stderr,
               "z": z}
    out.json("summary", cfg, results)
    return Outcome(f"V {v.mean:.6f} +- {v.stderr:.1e}, W {w.mean:.6f} +- {w.stderr:.1e}, z = {z:+.2f}",
                   results=results)


def _genealogy(cfg: RunConfig, out: _Outputs) -> Outcome:
    p = LineageParams(cfg.d, cfg._need_N(), cfg.drift)
    est = estimate_z1(p, cfg.reps, cfg.seed, _threads(cfg))
    write_genealogy_csv([est], out.path("genealogy", "csv"))
    za = z1_analytic(p, variant=cfg.variant)
    fa = f1_analytic(p)
    results = {"f1_mc": est.f1_mean, "f1_stderr": est.f1_stderr, "f1_analytic": fa,
               "z1_mc": est.z1_mean, "z1_stderr": est.z1_stderr, "z1_analytic": za,
               "z1_exact": z1_exact(p), "variant": cfg.variant, "inclusion_violations": est.inclusion_violations}
    out.json("summary", cfg, results)
    if cfg.subcommand == "f1":
        line = f"P(F1) MC {est.f1_mean:.6f} +- {est.f1_stderr:.1e}, closed form {fa:.6f}"
    else:
        line = (f"N*E[Z1] MC {p.N * est.z1_mean:.5f} +- {p.N * est.z1_stderr:.1e}, "
                f"analytic {p.N * za:.5f}")
    return Outcome(line, results=results)


def _survive(cfg: RunConfig, out: _Outputs) -> Outcome:
    p = ModelParams(cfg.d, cfg._need_N(), cfg.birth_rate, cfg.time_scale)
    est = survival_probability(p, cfg.policy(), cfg.reps, cfg.seed, _threads(cfg))
    with open(out.path("survival", "csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d", "N", "lambda", "reps", "successes", "rho_hat", "ci_low", "ci_high",
                    "mass_cap", "horizon"])
        w.writerow([cfg.d, p.N, repr(p.birth_rate), est.reps, est.successes, repr(est.rho_hat),
                    repr(est.ci_low), repr(est.ci_high), cfg.mass_cap, repr(cfg.horizon)])
    results = {"rho_hat": est.rho_hat, "ci_low": est.ci_low, "ci_high": est.ci_high,
               "successes": est.successes, "reps": est.reps, "outcomes": est.outcomes}
    out.json("summary", cfg, results)
    return Outcome(f"rho_hat = {est.rho_hat:.4f} [{est.ci_low:.4f}, {est.ci_high:.4f}] "
                   f"({est.successes}/{est.reps})", results=results)


def _masscurve(cfg: RunConfig, out: _Outputs) -> Outcome:
    if not cfg.checkpoints:
        raise ConfigError("masscurve needs checkpoints")
    p = ModelParams(cfg.d, cfg._need_N(), cfg.birth_rate, cfg.time_scale)
    curve = mass_curve(p, cfg.policy(), cfg.reps, cfg.seed, _threads(cfg))
    write_mass_curve_csv(curve, out.path("masscurve", "csv"))
    z = [float(v) for v in curve.decrease_z()] if len(cfg.checkpoints) > 1 else []
    results = {"mean": [float(m) for m in curve.mean], "stderr": [float(s) for s in curve.stderr],
               "decrease_z": z}
    out.json("summary", cfg, results)
    means = ", ".join(f"{m:.4f}" for m in curve.mean)
    return Outcome(f"mean mass at {list(cfg.checkpoints)}: {means}", results=results)


def _scan_config(cfg: RunConfig) -> ScanConfig:
    return ScanConfig(cfg.threshold, cfg.reps, cfg.max_reps, cfg.policy(), cfg.seed, None, _threads(cfg))


def _critscan(cfg: RunConfig, out: _Outputs) -> Outcome:
    sc = _scan_config(cfg)
    scan = critical_scan(cfg.d, cfg._need_N(), sc.threshold, sc.reps_per_level, sc.policy, cfg.seed,
                         max_reps=sc.max_reps, threads=sc.threads)
    with open(out.path("levels", "csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "reps", "successes", "rho_hat", "ci_low", "ci_high", "verdict"])
        for lv in scan.diagnostics:
            e = lv.estimate
            w.writerow([repr(lv.lam), e.reps, e.successes, repr(e.rho_hat), repr(e.ci_low),
                        repr(e.ci_high), lv.verdict])
    results = {"lambda_lo": scan.lambda_lo, "lambda_hat": scan.lambda_hat,
               "lambda_hi": scan.lambda_hi, "N_times_gap": scan.n_times_gap,
               "threshold": scan.threshold, "inconclusive": scan.inconclusive,
               "monotonicity_violations": scan.monotonicity_violations}
    out.json("summary", cfg, results)
    line = (f"lambda_hat = {scan.lambda_hat:.5f} in [{scan.lambda_lo:.5f}, {scan.lambda_hi:.5f}], "
            f"N(lambda_hat-1) = {scan.n_times_gap:.4f}" + (" (inconclusive)" if scan.inconclusive else ""))
    return Outcome(line, status=EXIT_INCONCLUSIVE if scan.inconclusive else EXIT_OK, results=results)


def _report(cfg: RunConfig, out: _Outputs) -> Outcome:
    rows = asymptotics_report(cfg.d, list(cfg.Ns), _scan_config(cfg))
    write_report_csv(rows, out.path("report", "csv"))
    inconclusive = any("inconclusive" in r.flags for r in rows)
    return Outcome(f"{len(rows)} report rows", status=EXIT_INCONCLUSIVE if inconclusive else EXIT_OK,
                   results={"rows": len(rows)})


_HANDLERS = {
    "theta": lambda c, o: _series(c, o, "neighborhood"),
    "green": lambda c, o: _series(c, o, "origin"),
    "identity": _identity, "coupling": _coupling, "z1": _genealogy, "f1": _genealogy,
    "survive": _survive, "masscurve": _masscurve, "critscan": _critscan, "report": _report,
}


def _sha256(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run(cfg: RunConfig) -> Outcome:
    """Run a resolved config, write its outputs and then the manifest."""
    if cfg.seed is None:
        cfg = dataclasses.replace(cfg, seed=secrets.randbits(64))
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    out = _Outputs(cfg)
    start = time.perf_counter()
    outcome = _HANDLERS[cfg.subcommand](cfg, out)
    wall = time.perf_counter() - start
    outcome.files = dict(out.files)
    manifest = {
        "tool": "stirlab", "version": __version__, "seed": cfg.seed,
        "config": {k: v for k, v in (line.split("=", 1) for line in emit_config(cfg).splitlines())},
        "wall_time_s": wall, "exit_code": outcome.status,
        "outputs": {label: {"path": Path(p).name, "sha256": _sha256(p)} for label, p in out.files.items()},
    }
    mpath = Path(cfg.out) / f"{out.stem}_manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    outcome.files["manifest"] = str(mpath)
    return outcome


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file or a previous run's manifest")
    common.add_argument("--emit-config", action="store_true",
                        help="print the resolved config and exit")
    for key, (_, kind) in _KEYS.items():
        if key == "subcommand":
            continue
        flag = "--" + key.replace("_", "-")
        names = [flag, "--" + key] if "_" in key else [flag]
        common.add_argument(*names, dest=key, default=argparse.SUPPRESS, metavar=kind.rstrip("?").upper())
    parser = argparse.ArgumentParser(prog="stirlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"stirlab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "theta": "neighbour-occupation series and theta",
        "green": "Green's function at the origin",
        "identity": "exact Markov identity residual",
        "coupling": "V / W occupation-time Monte Carlo",
        "z1": "E[Z1] Monte Carlo vs analytic",
        "f1": "P(F1) Monte Carlo vs closed form",
        "survive": "survival-proxy probability",
        "masscurve": "mean mass at checkpoints",
        "critscan": "critical birth-rate scan",
        "report": "asymptotics report over several N",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))  # exits 2 on unknown flags
    config_file = args.pop("config", None)
    emit_only = args.pop("emit_config", False)
    flags = {k: v for k, v in args.items() if v is not None}
    try:
        cfg = parse_config(config_file, flags)
        if cfg.seed is None:
            cfg = dataclasses.replace(cfg, seed=secrets.randbits(64))
        if emit_only:
            sys.stdout.write(emit_config(cfg))
            return EXIT_OK
        outcome = run(cfg)
    except (ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"stirlab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    tag = {EXIT_OK: "", EXIT_INCONCLUSIVE: " [inconclusive]"}.get(outcome.status, "")
    print(f"{cfg.subcommand} seed={cfg.seed}: {outcome.summary}{tag}")
    return outcome.status


if __name__ == "__main__":
    sys.exit(main())
