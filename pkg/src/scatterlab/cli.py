"""Batch runner: ``scatterlab run | calibrate | report``.

Exit codes: 0 every experiment matched its expectation, 1 at least one
mismatch, 2 configuration or missing-input error, 3 unanticipated runtime
failure inside an estimator.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import properties as props
from .distributions import Marginal, spec_from_dict
from .errors import ConfigError, MissingResults, ScatterLabError
from .scatter import ScatterSpec, calibrate_gaussian

log = logging.getLogger("scatterlab")

RESULT_COLUMNS = ("id", "property", "family", "statistic", "threshold", "pass", "expected",
                  "n", "replicates", "seed", "ms")

COMMON_KEYS = {"id", "check", "functional", "expect", "seed", "threshold", "direction", "description"}
CHECK_KEYS = {
    "calibrate": ({"p", "n", "replicates", "target"}, {"p", "n", "replicates", "target"}),
    "equivariance": ({"distribution", "n"}, {"distribution", "n"}),
    "proportionality": ({"distribution", "n"}, {"distribution", "n"}),
    "additivity": ({"distribution", "secondary", "n", "replicates"},
                   {"distribution", "secondary", "n", "replicates"}),
    "independence": ({"distribution", "n", "replicates"}, {"distribution", "n", "replicates", "pairs"}),
    "joint_independence": ({"distribution", "n", "replicates"}, {"distribution", "n", "replicates"}),
    "full_equivariance": ({"distribution", "n", "k"}, {"distribution", "n", "k"}),
    "subvector_consistency": ({"distribution", "n"}, {"distribution", "n"}),
    "normal_continuity": ({"distribution", "n_grid", "m", "replicates"},
                          {"distribution", "n_grid", "m", "replicates"}),
    "fae_expansion": ({"marginal", "n", "m"}, {"marginal", "n", "m"}),
    "sum_expansion": ({"distribution", "p_total", "n"}, {"distribution", "p_total", "n"}),
}


@dataclass
class Experiment:
    id: str
    check: str
    functional: ScatterSpec | str
    expect: str
    seed: int
    threshold: float | None
    direction: str
    params: dict


@dataclass(frozen=True)
class ResultRow:
    id: str
    property: str
    family: str
    statistic: float
    threshold: float
    passed: bool
    expected: str
    n: int
    replicates: int
    seed: int
    ms: int

    @property
    def as_expected(self) -> bool:
        return self.passed == (self.expected == "pass")

    def to_csv(self) -> list[str]:
        return [self.id, self.property, self.family, repr(float(self.statistic)), repr(float(self.threshold)),
                "true" if self.passed else "false", self.expected, str(self.n), str(self.replicates),
                str(self.seed), str(self.ms)]

    @classmethod
    def from_csv(cls, rec: dict) -> "ResultRow":
        return cls(rec["id"], rec["property"], rec["family"], float(rec["statistic"]), float(rec["threshold"]),
                   rec["pass"] == "true", rec["expected"], int(rec["n"]), int(rec["replicates"]),
                   int(rec["seed"]), int(rec["ms"]))


def write_results(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow(r.to_csv())


def read_results(path) -> list[ResultRow]:
    path = Path(path)
    if not path.is_file():
        raise MissingResults(f"{path} not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise MissingResults(f"{path} does not have the results.csv header")
        return [ResultRow.from_csv(rec) for rec in reader]


# --------------------------------------------------------------------------
# config

def _int(d, key, eid, minimum=1):
    v = d[key]
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise ConfigError(f"experiment {eid}: {key!r} must be an integer >= {minimum}")
    return v


def parse_config(doc) -> list[Experiment]:
    if not isinstance(doc, dict) or set(doc) - {"experiments", "description"} or "experiments" not in doc:
        raise ConfigError("config must be an object with an 'experiments' list (and optional 'description')")
    exps, seen, calibrations = [], set(), set()
    for raw in doc["experiments"]:
        if not isinstance(raw, dict):
            raise ConfigError(f"experiment entries must be objects, got {raw!r}")
        eid = raw.get("id")
        if not isinstance(eid, str) or not eid:
            raise ConfigError("every experiment needs a non-empty string 'id'")
        if eid in seen:
            raise ConfigError(f"duplicate experiment id {eid!r}")
        seen.add(eid)
        check = raw.get("check")
        if check not in CHECK_KEYS:
            raise ConfigError(f"experiment {eid}: unknown check {check!r}")
        required, allowed = CHECK_KEYS[check]
        extra = set(raw) - COMMON_KEYS - allowed
        if extra:
            raise ConfigError(f"experiment {eid}: unknown keys {sorted(extra)}")
        missing = (required | {"functional", "expect"}) - set(raw)
        if missing:
            raise ConfigError(f"experiment {eid}: missing keys {sorted(missing)}")
        if raw["expect"] not in ("pass", "fail"):
            raise ConfigError(f"experiment {eid}: expect must be 'pass' or 'fail'")
        direction = raw.get("direction", "le")
        if direction not in ("le", "ge"):
            raise ConfigError(f"experiment {eid}: direction must be 'le' or 'ge'")

        fn = raw["functional"]
        if isinstance(fn, str):
            if not fn.startswith("@") or fn[1:] not in calibrations:
                raise ConfigError(f"experiment {eid}: functional reference {fn!r} "
                                  "must name an earlier calibrate experiment as '@id'")
            functional = fn
        else:
            functional = ScatterSpec.from_dict(fn)

        params = {}
        for key in allowed & set(raw):
            v = raw[key]
            if key in ("distribution", "secondary"):
                params[key] = spec_from_dict(v)
            elif key == "marginal":
                params[key] = Marginal.from_dict(v)
            elif key in ("n", "replicates", "m", "p", "k", "p_total"):
                params[key] = _int(raw, key, eid)
            elif key == "n_grid":
                if not isinstance(v, list) or not v or not all(isinstance(t, int) and t >= 1 for t in v):
                    raise ConfigError(f"experiment {eid}: n_grid must be a list of positive integers")
                params[key] = v
            elif key == "pairs":
                params[key] = [tuple(pr) for pr in v]
            elif key == "target":
                params[key] = float(v)
        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError(f"experiment {eid}: seed must be a non-negative integer")
        threshold = raw.get("threshold")
        if threshold is not None and not isinstance(threshold, (int, float)):
            raise ConfigError(f"experiment {eid}: threshold must be a number")
        if check == "calibrate":
            calibrations.add(eid)
        exps.append(Experiment(eid, check, functional, raw["expect"], seed,
                               None if threshold is None else float(threshold), direction, params))
    return exps


def load_config(path) -> list[Experiment]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(doc)


# --------------------------------------------------------------------------
# execution

def _threshold(exp, default):
    return default if exp.threshold is None else exp.threshold


def _calibrate(spec, exp):
    p = exp.params
    const, se = calibrate_gaussian(spec, p["p"], p["n"], p["replicates"], exp.seed, with_error=True)
    dev = abs(const - p["target"]) / p["target"]
    rep = props._report("GaussianCalibration", dev, _threshold(exp, 0.02), p["n"], p["replicates"], exp.seed,
                        exp.direction, functional=spec.label, constant=const, standard_error=se,
                        target=p["target"], p=p["p"])
    return rep, spec.calibrated(const)


def run_experiment(exp: Experiment, spec: ScatterSpec):
    p, d = exp.params, exp.direction
    kw = {"direction": d}
    c = exp.check
    if c == "equivariance":
        return props.equivariance_check(spec, p["distribution"], p["n"], exp.seed, threshold=exp.threshold, **kw)
    if c == "proportionality":
        return props.proportionality_check(spec, p["distribution"], p["n"], exp.seed,
                                           threshold=exp.threshold, **kw)
    if c == "additivity":
        return props.additivity_check(spec, p["distribution"], p["secondary"], p["n"], p["replicates"],
                                      exp.seed, threshold=_threshold(exp, 0.08), **kw)
    if c == "independence":
        return props.independence_check(spec, p["distribution"], p["n"], p["replicates"], exp.seed,
                                        pairs=p.get("pairs"), threshold=_threshold(exp, 0.05), **kw)
    if c == "joint_independence":
        return props.joint_independence_check(spec, p["distribution"], p["n"], p["replicates"], exp.seed,
                                              threshold=_threshold(exp, 0.05), **kw)
    if c == "full_equivariance":
        return props.full_equivariance_check(spec, p["distribution"], p["k"], p["n"], exp.seed,
                                             threshold=_threshold(exp, 0.05), **kw)
    if c == "subvector_consistency":
        return props.subvector_consistency_check(spec, p["distribution"], p["n"], exp.seed,
                                                 threshold=_threshold(exp, props.ALGEBRAIC_TOL), **kw)
    if c == "normal_continuity":
        return props.normal_continuity_check(spec, p["distribution"], p["n_grid"], p["m"], p["replicates"],
                                             exp.seed, threshold=_threshold(exp, 0.05), **kw)
    if c == "sum_expansion":
        return props.sum_expansion_check(spec, p["distribution"], p["p_total"], p["n"], exp.seed,
                                         threshold=_threshold(exp, 0.1), **kw)
    if c == "fae_expansion":
        r = props.fae_expansion_experiment(spec, p["marginal"], p["n"], p["m"], exp.seed)
        return props._report("FaeExpansion", r.residual, _threshold(exp, 0.05), r.m, 1, exp.seed, d,
                             functional=spec.label, terms=r.n, lhs=r.lhs, s1_hat=r.s1_hat, c_hat=r.c_hat,
                             variance=r.variance)
    raise ConfigError(f"unknown check {c!r}")


def run(config_path, out_dir) -> int:
    try:
        exps = load_config(config_path)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    out = Path(out_dir)
    (out / "details").mkdir(parents=True, exist_ok=True)
    rows, reports, calibrated = [], [], {}
    status = 0
    for exp in exps:
        spec = calibrated[exp.functional[1:]] if isinstance(exp.functional, str) else exp.functional
        t0 = time.perf_counter()
        try:
            if exp.check == "calibrate":
                rep, calibrated[exp.id] = _calibrate(spec, exp)
            else:
                rep = run_experiment(exp, spec)
        except ScatterLabError as exc:
            log.error("experiment %s failed: %s: %s", exp.id, type(exc).__name__, exc)
            status = 3
            break
        except ValueError as exc:
            # parameter preconditions that only the check itself can verify
            log.error("experiment %s: invalid parameters: %s", exp.id, exc)
            status = 2
            break
        ms = int(round(1000 * (time.perf_counter() - t0)))
        row = ResultRow(exp.id, rep.property, spec.label, rep.statistic, rep.threshold, rep.passed,
                        exp.expect, rep.n, rep.replicates, rep.seed, ms)
        rows.append(row)
        detail = {"id": exp.id, "check": exp.check, "functional": spec.to_dict(), "expect": exp.expect,
                  **rep.to_dict()}
        reports.append(detail)
        (out / "details" / f"{exp.id}.json").write_text(json.dumps(detail, indent=2, default=float) + "\n")
        log.info("%-28s %-22s stat=%-12.5g thr=%-8.3g %s", exp.id, rep.property, rep.statistic, rep.threshold,
                 "as-expected" if row.as_expected else "MISMATCH")
        if not row.as_expected:
            status = max(status, 1)
    write_results(rows, out / "results.csv")
    (out / "results.json").write_text(json.dumps(reports, indent=2, default=float) + "\n")
    return status


def render_table(rows) -> str:
    head = ("id", "property", "functional", "statistic", "threshold", "verdict")
    body = [(r.id, r.property, r.family, f"{r.statistic:.4g}", f"{r.threshold:.3g}",
             "as-expected" if r.as_expected else "MISMATCH") for r in rows]
    widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*head), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*b) for b in body]
    return "\n".join(lines)


def report(results_dir, stream=None) -> int:
    stream = stream or sys.stdout
    d = Path(results_dir)
    try:
        rows = read_results(d / "results.csv")
    except MissingResults as exc:
        log.error("%s", exc)
        return 2
    print(render_table(rows), file=stream)
    for r in rows:
        if r.property != "NormalContinuity":
            continue
        try:
            detail = json.loads((d / "details" / f"{r.id}.json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            log.error("cannot read details for %s: %s", r.id, exc)
            return 2
        path = d / f"convergence_{r.id}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("n", "error", "seed"))
            for n, err in zip(detail["details"]["n_grid"], detail["details"]["errors"]):
                w.writerow((n, repr(float(err)), r.seed))
        log.info("wrote %s", path)
    return 0


def calibrate(spec_path, p, n, replicates, seed, out=None, stream=None) -> int:
    stream = stream or sys.stdout
    try:
        spec = ScatterSpec.from_dict(json.loads(Path(spec_path).read_text()))
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        log.error("cannot read functional spec: %s", exc)
        return 2
    try:
        const, se = calibrate_gaussian(spec, p, n, replicates, seed, with_error=True)
    except (ScatterLabError, ValueError) as exc:
        log.error("calibration failed: %s", exc)
        return 3
    updated = json.dumps(spec.calibrated(const).to_dict(), indent=2)
    print(f"{spec.label} p={p}: constant = {const:.6g} +/- {se:.2g}", file=stream)
    print(updated, file=stream)
    if out:
        Path(out).write_text(updated + "\n")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="scatterlab", description=__doc__.splitlines()[0])
    ap.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="execute an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)

    c = sub.add_parser("calibrate", help="Monte Carlo Gaussian-consistency constant of a functional")
    c.add_argument("--spec", required=True)
    c.add_argument("--p", type=int, required=True)
    c.add_argument("--n", type=int, default=100_000)
    c.add_argument("--replicates", type=int, default=5)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", help="write the calibrated spec here")

    rep = sub.add_parser("report", help="render results.csv and emit convergence CSVs")
    rep.add_argument("--dir", required=True)

    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.cmd == "run":
        return run(args.config, args.out)
    if args.cmd == "calibrate":
        return calibrate(args.spec, args.p, args.n, args.replicates, args.seed, args.out)
    return report(args.dir)


if __name__ == "__main__":
    sys.exit(main())
