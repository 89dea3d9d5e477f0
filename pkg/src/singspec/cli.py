"""Experiment runner: ``singspec <experiment> --config cfg.json [--seed N] [--out DIR]``.

Each experiment reads a JSON config, runs one pipeline and writes
``<out>/<experiment>.json`` (schema "v1") plus optional CSV point clouds.
Exit status: 0 when every check passes, 1 when a check fails (the report is
still written), 2 for usage or schema errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import platform
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bundles import (
    SphereGrid,
    certify_dimension_bound,
    divergence_operator,
    grassmann_distance,
    kernel_subspace,
    squares_bundle,
    tautological_bundle,
    unit,
    wave_cone_witness,
)
from .configurations import (
    ConfigFamily,
    count_triples_brute,
    count_triples_fft,
    extract_spectrum,
    growth_exponent,
    trivial_triple_count,
)
from .construction import (
    SHIPPED_GAMMA,
    build_construction,
    bundle_proximity,
    candidate_rotations,
    certificate_bound,
    level_set_enclosure,
    verify_conditions,
    verify_gamma_plane_crossing,
    verify_gamma_separation,
)
from .dimension import DEFAULT_RADII, certify_corollary, measure_dimension
from .errors import ContractError
from .forms import TrigPolynomial, scaling_experiment, trilinear_frequency, trilinear_time
from .measures import fourier_coefficients, measure_from_config, sample_rng

SCHEMA = "v1"
PROXIMITY_STABILITY = 0.2


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# report plumbing
# --------------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if dataclasses.is_dataclass(x):
        return _jsonable(dataclasses.asdict(x))
    return x


@dataclass
class ReportEnvelope:
    experiment: str
    config: dict
    results: dict
    checks: list
    timing: dict = field(default_factory=dict)
    schema: str = SCHEMA

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def deterministic_dict(self) -> dict:
        return _jsonable({
            "schema": self.schema,
            "experiment": self.experiment,
            "config": self.config,
            "results": self.results,
            "checks": self.checks,
            "versions": versions(),
        })

    def to_dict(self) -> dict:
        d = self.deterministic_dict()
        d["timing"] = _jsonable(self.timing)
        return d


def versions() -> dict:
    return {"singspec": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def check(name: str, passed, value=None, tolerance=None) -> dict:
    return {"name": name, "pass": bool(passed), "value": value, "tolerance": tolerance}


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_points_csv(path: Path, pts) -> None:
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    lines = ["x,y,z"] + [",".join(f"{v:.17g}" for v in p) for p in pts]
    atomic_write(path, "\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# configs
# --------------------------------------------------------------------------


def _radii(spec) -> tuple:
    """Explicit list, or {"base": b, "start": i, "stop": j} meaning b^-i .. b^-j."""
    if spec is None:
        return DEFAULT_RADII
    if isinstance(spec, dict):
        b, i, j = float(spec["base"]), int(spec["start"]), int(spec["stop"])
        return tuple(b ** -np.arange(i, j + 1, dtype=float))
    return tuple(float(r) for r in spec)


@dataclass
class CoeffsConfig:
    measure: dict
    window: int = 64


@dataclass
class SpectrumConfig:
    measure: dict
    window: int = 100
    tau: float = 0.0


@dataclass
class Count3APConfig:
    measure: dict
    window: int = 100
    tau: float = 0.0
    modes: str = "both"


@dataclass
class GrowthConfig:
    measure: dict
    windows: list = field(default_factory=lambda: [2**j for j in range(6, 17)])
    tau: float = 0.0


@dataclass
class DualCheckConfig:
    degree: int = 64
    trials: int = 100
    tolerance: float = 1e-9


@dataclass
class DimensionConfig:
    measure: dict
    sample_count: int = 200
    quantile: float = 5.0
    radii: object = None
    expected: float | None = None
    tolerance: float | None = None


@dataclass
class CorollaryConfig:
    measure: dict
    windows: list = field(default_factory=lambda: [2**j for j in range(6, 17)])
    tau: float = 0.0
    sample_count: int = 200
    tolerance: float = 0.1
    radii: object = None


@dataclass
class ScalingConfig:
    measure: dict
    alpha: float
    radii: object
    b: float = 1.0
    tolerance: float = 0.1
    expected_slope: float | None = None


@dataclass
class WaveConeConfig:
    operator: str = "construction"
    w: list = field(default_factory=lambda: [0.0, 0.0, 1.0])
    k: int = 2
    plane_samples: int = 10_000
    delta: float = 0.05
    expect: str = "verified"


@dataclass
class ConstructionConfig:
    delta: float = 0.05
    mode: str = "full"
    v_samples: int = 200
    plane_samples: int = 10_000
    nonvanishing_samples: int = 100_000
    kernel_samples: int = 1000
    proximity_deltas: list = field(default_factory=lambda: [0.1, 0.05, 0.025])
    proximity_samples: int = 20_000
    gamma: dict = field(default_factory=dict)
    write_csv: bool = True


@dataclass
class CertifyBoundConfig:
    bundle: str = "squares"
    k: int = 1
    resolution: float = 0.02
    v_samples: int = 20
    delta: float = 0.05


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------


def run_coeffs(cfg: CoeffsConfig, seed: int, out: Path) -> tuple[dict, list]:
    t = fourier_coefficients(measure_from_config(cfg.measure), cfg.window)
    res = {"convention": t.convention, "coefficients": [[int(m), float(v.real), float(v.imag)]
                                                        for m, v in zip(t.frequencies, t.values)]}
    c0 = abs(t[0] - 1)
    return res, [check("total_mass", c0 < 1e-12, c0, 1e-12),
                 check("conjugate_symmetric", t.is_conjugate_symmetric(1e-12), None, 1e-12)]


def run_spectrum(cfg: SpectrumConfig, seed: int, out: Path) -> tuple[dict, list]:
    t = fourier_coefficients(measure_from_config(cfg.measure), cfg.window)
    S = extract_spectrum(t, cfg.tau)
    res = {"window": cfg.window, "tau": cfg.tau, "members": list(S.members), "size": len(S.members)}
    return res, [check("symmetric", S.is_symmetric())]


def run_count3ap(cfg: Count3APConfig, seed: int, out: Path) -> tuple[dict, list]:
    if cfg.modes not in ("fft", "brute", "both"):
        raise UsageError("modes must be fft, brute or both")
    S = extract_spectrum(fourier_coefficients(measure_from_config(cfg.measure), cfg.window), cfg.tau)
    counts = {}
    if cfg.modes in ("fft", "both"):
        counts["fft"] = count_triples_fft(S)
    if cfg.modes in ("brute", "both"):
        counts["brute"] = count_triples_brute(S)
    triv = trivial_triple_count(S)
    vals = list(counts.values())
    res = {"counts": counts, "trivial": triv, "nontrivial": vals[0] - triv, "size": len(S.members)}
    checks = [check("at_least_trivial", vals[0] >= triv, vals[0])]
    if cfg.modes == "both":
        checks.append(check("fft_equals_brute", counts["fft"] == counts["brute"], counts["fft"] - counts["brute"], 0))
    return res, checks


def run_growth(cfg: GrowthConfig, seed: int, out: Path) -> tuple[dict, list]:
    ws = sorted(int(w) for w in cfg.windows)
    S = extract_spectrum(fourier_coefficients(measure_from_config(cfg.measure), ws[-1]), cfg.tau)
    counts = [count_triples_fft(S.restrict(n)) for n in ws]
    fit = growth_exponent(list(zip(ws, counts)))
    mono = all(a <= b for a, b in zip(counts, counts[1:]))
    return fit.as_dict(), [check("counts_monotone", mono), check("beta_in_range", -0.05 <= fit.beta <= 2.05, fit.beta, 0.05)]


def run_dual_check(cfg: DualCheckConfig, seed: int, out: Path) -> tuple[dict, list]:
    worst = 0.0
    for i in range(cfg.trials):
        rng = sample_rng(seed, i)
        f, g, h = (TrigPolynomial.random_real(rng, cfg.degree) for _ in range(3))
        a, b = trilinear_frequency(f, g, h), trilinear_time(f, g, h)
        worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
    e = TrigPolynomial.from_dict({1: 1.0})
    cf, ct = trilinear_frequency(e, e, e), trilinear_time(e, e, e)
    res = {"trials": cfg.trials, "degree": cfg.degree, "max_relative_difference": worst,
           "counterexample": {"frequency": cf, "time": ct}}
    return res, [check("duality", worst < cfg.tolerance, worst, cfg.tolerance),
                 check("complex_counterexample", cf == 1 and abs(ct) < 1e-12, abs(cf - ct), 1e-12)]


def run_dimension(cfg: DimensionConfig, seed: int, out: Path) -> tuple[dict, list]:
    est = measure_dimension(measure_from_config(cfg.measure), cfg.sample_count, seed, _radii(cfg.radii), cfg.quantile)
    checks = [check("finite", math.isfinite(est.value), est.value)]
    if cfg.expected is not None:
        tol = 0.05 if cfg.tolerance is None else cfg.tolerance
        err = abs(est.value - cfg.expected)
        checks.append(check("matches_expected", err <= tol, err, tol))
    return est.as_dict(), checks


def run_corollary(cfg: CorollaryConfig, seed: int, out: Path) -> tuple[dict, list]:
    rep = certify_corollary(measure_from_config(cfg.measure), cfg.windows, cfg.tau, cfg.sample_count, seed,
                            cfg.tolerance, _radii(cfg.radii))
    gap = rep.d_hat + rep.tolerance - rep.bound
    return rep.as_dict(), [check("corollary_bound", rep.passed, gap, rep.tolerance)]


def run_scaling(cfg: ScalingConfig, seed: int, out: Path) -> tuple[dict, list]:
    fam = ConfigFamily((np.array([[cfg.b]]),))
    rep = scaling_experiment(measure_from_config(cfg.measure), fam, cfg.alpha, _radii(cfg.radii), cfg.tolerance)
    checks = [check("lower_bound_direction", rep.passed, rep.fitted_slope - rep.predicted_exponent, cfg.tolerance)]
    if cfg.expected_slope is not None:
        err = abs(rep.fitted_slope - cfg.expected_slope)
        checks.append(check("expected_slope", err <= cfg.tolerance, err, cfg.tolerance))
    return rep.as_dict(), checks


def run_wavecone(cfg: WaveConeConfig, seed: int, out: Path) -> tuple[dict, list]:
    if cfg.operator == "divergence":
        op = divergence_operator(len(cfg.w))
    elif cfg.operator == "construction":
        op = build_construction(cfg.delta).operator
    else:
        raise UsageError("operator must be divergence or construction")
    wc = wave_cone_witness(op, cfg.k, np.asarray(cfg.w, dtype=float), cfg.plane_samples, seed)
    return wc.as_dict(), [check("status", wc.status == cfg.expect, wc.status)]


def _construction_full(cfg: ConstructionConfig, seed: int, out: Path) -> tuple[dict, list]:
    gp = dataclasses.replace(SHIPPED_GAMMA, **cfg.gamma)
    con = build_construction(cfg.delta, gp)
    cross = verify_gamma_plane_crossing(con.gamma, cfg.plane_samples, seed)
    sep = verify_gamma_separation(con.gamma)
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x6A55]))
    xi = unit(rng.standard_normal((cfg.kernel_samples, 3)))
    kern = max(grassmann_distance(kernel_subspace(con.operator.symbol(x)), con.P.subspace(x)) for x in xi)
    rep = verify_conditions(con, cfg.v_samples, seed, cfg.plane_samples, cfg.nonvanishing_samples)
    bound = certificate_bound(rep)
    wc = rep.details["B"]
    res = {
        "gamma": {"crossing": cross.as_dict(), "separation": sep.as_dict(), "points": len(con.gamma.points())},
        "N": con.family.N,
        "kernel_max_distance": kern,
        "conditions": rep.as_dict(),
        "bound": bound,
        "wave_cone_witness": {"w": [0.0, 0.0, 1.0], "status": wc["wave_cone"]},
        "construction": con.to_json(),
    }
    if cfg.write_csv:
        write_points_csv(out / "construction-verify_gamma.csv", con.gamma.points())
        write_points_csv(out / "construction-verify_centers.csv", con.family.centers)
    return res, [
        check("gamma_plane_crossing", cross.passed, cross.worst_margin, 1e-6),
        check("gamma_separation", sep.margin > 0, sep.margin, 0.0),
        check("kernel_equals_span_P", kern < 1e-8, kern, 1e-8),
        check("condition_A", rep.A),
        check("condition_B", rep.B, wc["planes"]),
        check("condition_C", rep.C, rep.details["C"]["min_margin"]),
        check("bound_equals_1.5", bound == 1.5, bound, 0.0),
        check("wave_cone_witness_e3", wc["wave_cone"] == "verified", wc["wave_cone"]),
    ]


def _construction_proximity(cfg: ConstructionConfig, seed: int, out: Path) -> tuple[dict, list]:
    gp = dataclasses.replace(SHIPPED_GAMMA, **cfg.gamma)
    rows = [bundle_proximity(d, cfg.proximity_samples, seed, gp) for d in cfg.proximity_deltas]
    logs = [r["log10_C"] for r in rows]
    finite = all(math.isfinite(v) for v in logs)
    # C values within a factor 1 +- 0.2 of each other, compared in log space
    spread = max(logs) - min(logs) if finite else math.inf
    stable = spread <= math.log10(1 + PROXIMITY_STABILITY)
    return {"per_delta": rows, "log10_C_spread": spread}, [
        check("proximity_finite", finite, logs),
        check("proximity_stable", stable, spread, math.log10(1 + PROXIMITY_STABILITY)),
    ]


def run_construction_verify(cfg: ConstructionConfig, seed: int, out: Path) -> tuple[dict, list]:
    if cfg.mode == "full":
        return _construction_full(cfg, seed, out)
    if cfg.mode == "proximity":
        return _construction_proximity(cfg, seed, out)
    raise UsageError("mode must be full or proximity")


def run_certify_bound(cfg: CertifyBoundConfig, seed: int, out: Path) -> tuple[dict, list]:
    grid = SphereGrid.with_resolution(cfg.resolution)
    if cfg.bundle == "squares":
        cert = certify_dimension_bound(squares_bundle(), cfg.k, grid, cfg.v_samples, seed)
    elif cfg.bundle == "tautological":
        cert = certify_dimension_bound(tautological_bundle(3), cfg.k, grid, cfg.v_samples, seed)
    elif cfg.bundle == "construction":
        con = build_construction(cfg.delta)
        cert = certify_dimension_bound(con.P, cfg.k, grid, cfg.v_samples, seed,
                                       enclose=lambda v: level_set_enclosure(v, con.params, con.family),
                                       candidates=candidate_rotations())
    else:
        raise UsageError("bundle must be squares, tautological or construction")
    return cert.as_dict(), [check("certified", cert.certified, cert.bound)]


EXPERIMENTS = {
    "coeffs": (CoeffsConfig, run_coeffs),
    "spectrum": (SpectrumConfig, run_spectrum),
    "count3ap": (Count3APConfig, run_count3ap),
    "growth": (GrowthConfig, run_growth),
    "dual-check": (DualCheckConfig, run_dual_check),
    "dimension": (DimensionConfig, run_dimension),
    "corollary": (CorollaryConfig, run_corollary),
    "scaling": (ScalingConfig, run_scaling),
    "wavecone": (WaveConeConfig, run_wavecone),
    "construction-verify": (ConstructionConfig, run_construction_verify),
    "certify-bound": (CertifyBoundConfig, run_certify_bound),
}


def parse_config(experiment: str, raw: dict):
    cls, _ = EXPERIMENTS[experiment]
    body = {k: v for k, v in raw.items() if k not in ("seed", "experiment")}
    if raw.get("experiment", experiment) != experiment:
        raise UsageError(f"config is for {raw['experiment']!r}, not {experiment!r}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(body) - names
    if unknown:
        raise UsageError(f"unknown config keys for {experiment}: {sorted(unknown)}")
    try:
        return cls(**body)
    except TypeError as exc:
        raise UsageError(str(exc)) from None


def run(experiment: str, raw: dict, seed: int, out: Path) -> ReportEnvelope:
    if experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {experiment!r}")
    cfg = parse_config(experiment, raw)
    _, fn = EXPERIMENTS[experiment]
    t0 = time.perf_counter()
    try:
        results, checks = fn(cfg, seed, out)
    except (ContractError, KeyError) as exc:
        raise UsageError(f"{type(exc).__name__}: {exc}") from None
    echo = {"seed": seed, **dataclasses.asdict(cfg)}
    return ReportEnvelope(experiment, echo, results, checks, {"seconds": time.perf_counter() - t0})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="singspec", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, type=Path, help="JSON config file")
        s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        s.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        try:
            raw = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        if not isinstance(raw, dict):
            raise UsageError("config must be a JSON object")
        seed = args.seed if args.seed is not None else raw.get("seed")
        if not isinstance(seed, int) or seed < 0:
            raise UsageError("a non-negative integer seed is required (config 'seed' or --seed)")
        report = run(args.experiment, raw, seed, args.out)
    except UsageError as exc:
        print(f"singspec: error: {exc}", file=sys.stderr)
        return 2
    atomic_write(args.out / f"{args.experiment}.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    for c in report.checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
