"""Command-line entry point: ``ratingpoisson <command> [options]``.

Commands: ``homogeneous-report``, ``solve``, ``simulate``, ``analyze``.
Option precedence is flag > ``--config`` JSON file > built-in default.
Exit codes: 0 success, 2 usage or validation error, 3 solver non-convergence.
"""

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    Axis,
    RatingFormat,
    entity_counts,
    fit_power_law_exponent,
    format_ratings,
    parse_ratings,
    popularity_counts,
    rank_frequency,
    zipf_report,
)
from .errors import ConfigError, DomainError, FitError, ParseError
from .homogeneous import (
    ZipfDirection,
    feasibility_table,
    homogeneity_consistency_report,
    pmf_poisson,
)
from .inhomogeneous import PairStrategy, ResidualForm, build_system
from .plotting import two_panel_svg
from .simulator import (
    PiecewiseIntensity,
    counts_to_pmf,
    empirical_window_pmf,
    intensity_from_solution,
    mean_matching_intensity,
    rng_metadata,
    sample_events,
    segment_counts,
    stream_to_ratings,
)
from .solver import InhomogeneousSolution, SolverOptions, solve

EXIT_OK, EXIT_USAGE, EXIT_NO_CONVERGENCE = 0, 2, 3
SCHEMA_VERSION = 1
FORMATS = ("csv", "json", "svg")

DEFAULTS = {
    "homogeneous-report": {
        "k_max": None,
        "c": 1.0,
        "zipf_direction": "paper",
        "out_dir": ".",
        "format": "json",
    },
    "solve": {
        "K": 10,
        "strategy": "consecutive",
        "form": "derived-sum",
        "zipf_direction": "paper",
        "ordering_margin": 1e-6,
        "n_starts": 8,
        "max_iterations": 500,
        "residual_tol": 1e-8,
        "step_tol": 1e-12,
        "equal_lambdas": False,
        "seed": None,
        "entropy": False,
        "out_dir": ".",
        "format": "csv,json,svg",
    },
    "simulate": {
        "rate": None,
        "horizon": 1.0,
        "breakpoints": None,
        "rates": None,
        "from_solution": None,
        "mean_matching": False,
        "replications": 10000,
        "k_max": None,
        "zipf_items": None,
        "zipf_exponent": 1.0,
        "n_users": 100,
        "seconds_per_unit": 86400.0,
        "seed": None,
        "entropy": False,
        "out_dir": ".",
        "format": "csv,json",
    },
    "analyze": {
        "input": None,
        "strict": False,
        "pairs": "2:1,3:2,4:3,5:4",
        "k_min": 1,
        "delimiter": ",",
        "out_dir": ".",
        "format": "csv,json",
    },
}


class UsageError(Exception):
    pass


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _formats(value) -> set:
    fmts = {f.strip() for f in str(value).split(",") if f.strip()}
    bad = fmts - set(FORMATS)
    if bad:
        raise UsageError(f"unknown output format(s): {sorted(bad)}")
    return fmts


def _float_list(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v) for v in str(value).split(",") if v.strip()]


def _resolve_seed(cfg) -> int:
    if cfg["seed"] is not None:
        return int(cfg["seed"])
    if cfg["entropy"]:
        return int(np.random.SeedSequence().entropy) % 2**64
    raise UsageError("this command is random: pass --seed N (or --entropy to draw one)")


def _common(p, formats_help):
    p.add_argument("--config", help="JSON file of option values (flags take precedence)")
    p.add_argument("--out-dir", dest="out_dir", help="directory for output files")
    p.add_argument("--format", help=f"comma-separated subset of {formats_help}")


def _seeded(p):
    p.add_argument("--seed", type=int, help="random seed (required unless --entropy)")
    p.add_argument("--entropy", action="store_true", help="draw a fresh seed and record it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ratingpoisson", description=__doc__.splitlines()[0],
                                     argument_default=argparse.SUPPRESS)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("homogeneous-report", argument_default=argparse.SUPPRESS,
                       help="closed-form inconsistency and counting-form infeasibility")
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--c", type=float, help="Zipf proportionality constant")
    p.add_argument("--zipf-direction", dest="zipf_direction", choices=[d.value for d in ZipfDirection])
    _common(p, "json")

    p = sub.add_parser("solve", argument_default=argparse.SUPPRESS, help="fit the inhomogeneous system")
    p.add_argument("--K", dest="K", type=int)
    p.add_argument("--strategy", choices=[s.value for s in PairStrategy])
    p.add_argument("--form", choices=[f.value for f in ResidualForm])
    p.add_argument("--zipf-direction", dest="zipf_direction", choices=[d.value for d in ZipfDirection])
    p.add_argument("--ordering-margin", dest="ordering_margin", type=float)
    p.add_argument("--n-starts", dest="n_starts", type=int)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("--residual-tol", dest="residual_tol", type=float)
    p.add_argument("--step-tol", dest="step_tol", type=float)
    p.add_argument("--equal-lambdas", dest="equal_lambdas", action="store_true",
                   help="force one shared rate (homogeneous restriction)")
    _seeded(p)
    _common(p, "csv,json,svg")

    p = sub.add_parser("simulate", argument_default=argparse.SUPPRESS, help="sample event streams")
    p.add_argument("--rate", type=float, help="constant rate on [0, horizon)")
    p.add_argument("--horizon", type=float)
    p.add_argument("--breakpoints", help="comma-separated interval ends")
    p.add_argument("--rates", help="comma-separated rate per interval")
    p.add_argument("--from-solution", dest="from_solution", help="solve report or solution JSON")
    p.add_argument("--mean-matching", dest="mean_matching", action="store_true",
                   help="with --from-solution, match integrated intensity to fitted means")
    p.add_argument("--replications", type=int)
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--zipf-items", dest="zipf_items", type=int, help="also write ratings.csv with Zipf items")
    p.add_argument("--zipf-exponent", dest="zipf_exponent", type=float)
    p.add_argument("--n-users", dest="n_users", type=int)
    p.add_argument("--seconds-per-unit", dest="seconds_per_unit", type=float)
    _seeded(p)
    _common(p, "csv,json")

    p = sub.add_parser("analyze", argument_default=argparse.SUPPRESS, help="Zipf checks on a ratings CSV")
    p.add_argument("--input", help="ratings CSV (userId,movieId,rating,timestamp)")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--pairs", help="ratio pairs as k:j,k:j")
    p.add_argument("--k-min", dest="k_min", type=int)
    p.add_argument("--delimiter")
    _common(p, "csv,json")
    return parser


def resolve_config(command: str, args: dict) -> dict:
    cfg = dict(DEFAULTS[command])
    path = args.pop("config", None)
    if path:
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {path}: {e}") from None
        if not isinstance(loaded, dict):
            raise UsageError(f"config {path} must hold a JSON object")
        for key, value in loaded.items():
            key = key.replace("-", "_")
            if key not in cfg:
                raise UsageError(f"unknown config key {key!r} for {command}")
            cfg[key] = value
    args.pop("command", None)
    cfg.update(args)
    return cfg


def cmd_homogeneous_report(cfg) -> int:
    k_max = cfg["k_max"]
    if k_max is None or int(k_max) < 2:
        raise UsageError("--k-max must be at least 2 (a pair needs two counts)")
    k_max = int(k_max)
    report = homogeneity_consistency_report(k_max, direction=cfg["zipf_direction"])
    certs = feasibility_table(k_max, c=float(cfg["c"]), direction=cfg["zipf_direction"])
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "homogeneous-report",
        "k_max": k_max,
        "c": float(cfg["c"]),
        "zipf_direction": ZipfDirection(cfg["zipf_direction"]).value,
        "consistency": report.to_dict(),
        "feasibility": [c.to_dict() for c in certs],
        "all_infeasible": all(not c.feasible for c in certs),
    }
    fmts = _formats(cfg["format"])
    if "json" in fmts:
        write_atomic(Path(cfg["out_dir"]) / "homogeneous_report.json", _dump_json(doc))

    lines = [f"{'k':>4} {'j':>4} {'lambda':>14}"]
    lines += [f"{p.k:>4} {p.j:>4} {lam:>14.9f}" for p, lam in report.pair_lambdas]
    lines.append(f"spread = {report.spread:.9g}  verdict = {report.verdict.value}")
    lines.append(f"{'k':>4} {'x*':>8} {'f_min':>14} feasible")
    lines += [f"{c.k:>4} {c.x_star:>8.1f} {c.f_min:>14.9f} {c.feasible}" for c in certs]
    print("\n".join(lines))
    return EXIT_OK


def cmd_solve(cfg) -> int:
    seed = _resolve_seed(cfg)
    system = build_system(
        int(cfg["K"]),
        strategy=cfg["strategy"],
        form=cfg["form"],
        zipf_direction=cfg["zipf_direction"],
        ordering_margin=float(cfg["ordering_margin"]),
    )
    options = SolverOptions(
        max_iterations=int(cfg["max_iterations"]),
        residual_tol=float(cfg["residual_tol"]),
        step_tol=float(cfg["step_tol"]),
        n_starts=int(cfg["n_starts"]),
        seed=seed,
        equal_lambdas=bool(cfg["equal_lambdas"]),
    )
    report = solve(system, options)
    out = Path(cfg["out_dir"])
    fmts = _formats(cfg["format"])
    if "json" in fmts:
        write_atomic(out / "solve_report.json", _dump_json(report.to_dict()))
    if "csv" in fmts:
        write_atomic(out / "times.csv", report.times_csv())
        write_atomic(out / "lambdas.csv", report.lambdas_csv())
    best = report.best_solution
    if "svg" in fmts:
        write_atomic(out / "panels.svg", two_panel_svg(best.params.times, best.params.lambdas))
    print(
        f"best start {best.start_index}: converged={best.converged} "
        f"inf_norm={best.residuals.inf_norm:.3e} distinct={report.distinct_count} seed={seed}"
    )
    return EXIT_OK if best.converged else EXIT_NO_CONVERGENCE


def _load_solution(path) -> InhomogeneousSolution:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read solution {path}: {e}") from None
    if "solutions" in doc:
        doc = doc["solutions"][doc.get("best", 0)]
    sol = InhomogeneousSolution.from_dict(doc)
    if not sol.converged:
        raise UsageError(f"{path}: best solution did not converge; nothing to simulate")
    return sol


def _intensity(cfg):
    if cfg["from_solution"]:
        sol = _load_solution(cfg["from_solution"])
        build = mean_matching_intensity if cfg["mean_matching"] else intensity_from_solution
        return build(sol), sol
    if cfg["breakpoints"] is not None or cfg["rates"] is not None:
        return PiecewiseIntensity(_float_list(cfg["breakpoints"]), _float_list(cfg["rates"])), None
    if cfg["rate"] is not None:
        return PiecewiseIntensity.constant(float(cfg["rate"]), float(cfg["horizon"])), None
    raise UsageError("give --rate, --breakpoints/--rates, or --from-solution")


def cmd_simulate(cfg) -> int:
    seed = _resolve_seed(cfg)
    intensity, sol = _intensity(cfg)
    reps = int(cfg["replications"])
    if reps < 1:
        raise UsageError("--replications must be at least 1")
    mean = float(intensity.cumulative(intensity.horizon))
    k_max = cfg["k_max"]
    k_max = int(k_max) if k_max is not None else int(math.ceil(mean + 10 * math.sqrt(mean) + 10))

    stream = sample_events(intensity, seed)
    totals = segment_counts(intensity, [0.0, intensity.horizon], reps, seed)[:, 0]
    emp = counts_to_pmf(totals, k_max)
    theo = [pmf_poisson(k, mean) for k in range(k_max + 1)]
    emp_vals = [emp.get(k) for k in range(k_max + 1)]
    tv = 0.5 * (sum(abs(a - b) for a, b in zip(emp_vals, theo)) + abs(emp.tail_mass - max(0.0, 1 - sum(theo))))
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "seed": seed,
        "rng": rng_metadata(),
        "intensity": intensity.to_dict(),
        "replications": reps,
        "k_max": k_max,
        "expected_total": mean,
        "empirical_mean": float(totals.mean()),
        "empirical": emp_vals,
        "empirical_tail_mass": emp.tail_mass,
        "theoretical": theo,
        "tv_distance": tv,
        "stream_events": len(stream),
    }
    if sol is not None:
        ks = list(range(1, sol.params.K + 1))
        ends = sol.params.times
        probs = empirical_window_pmf(intensity, ends, ks, reps, seed)
        doc["window_checks"] = [
            {
                "k": k,
                "t_k": float(t),
                "integrated_mean": float(intensity.cumulative(t)),
                "fitted_mean": float(x),
                "empirical": float(p),
                "theoretical": pmf_poisson(k, float(intensity.cumulative(t))),
            }
            for k, t, x, p in zip(ks, ends, sol.params.products, probs)
        ]

    out = Path(cfg["out_dir"])
    fmts = _formats(cfg["format"])
    if "csv" in fmts:
        write_atomic(out / "events.csv", stream.to_csv())
        if cfg["zipf_items"]:
            ratings = stream_to_ratings(
                stream,
                n_items=int(cfg["zipf_items"]),
                exponent=float(cfg["zipf_exponent"]),
                n_users=int(cfg["n_users"]),
                seed=[seed, 1],
                seconds_per_unit=float(cfg["seconds_per_unit"]),
            )
            write_atomic(out / "ratings.csv", "\n".join(format_ratings(ratings)) + "\n")
    if "json" in fmts:
        write_atomic(out / "pmf_comparison.json", _dump_json(doc))
    print(f"{len(stream)} events on [0, {intensity.horizon:g}); tv_distance={tv:.4g} over {reps} replications")
    return EXIT_OK


def _parse_pairs(text):
    pairs = []
    for tok in str(text).split(","):
        if not tok.strip():
            continue
        try:
            k, j = (int(v) for v in tok.split(":"))
        except ValueError:
            raise UsageError(f"bad pair {tok!r}; expected k:j") from None
        if not k > j >= 1:
            raise UsageError(f"pair {tok!r} needs k > j >= 1")
        pairs.append((k, j))
    return pairs


def cmd_analyze(cfg) -> int:
    if not cfg["input"]:
        raise UsageError("--input is required")
    pairs = _parse_pairs(cfg["pairs"])
    fmt = RatingFormat(delimiter=cfg["delimiter"])
    try:
        with open(cfg["input"], encoding="utf-8") as fh:
            parsed = parse_ratings(fh, fmt, strict=bool(cfg["strict"]))
    except OSError as e:
        raise UsageError(f"cannot read {cfg['input']}: {e}") from None
    if not parsed.events:
        raise UsageError(f"{cfg['input']}: no events")

    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "analyze",
        "events": len(parsed.events),
        "parse_errors": [{"line": n, "message": m} for n, m in parsed.errors],
        "axes": {},
    }
    csvs = {}
    for axis in Axis:
        per_entity = entity_counts(parsed.events, axis)
        hist = popularity_counts(parsed.events, axis)
        rf = rank_frequency(per_entity)
        entry = {"entities": len(per_entity), "popularity": zipf_report(hist, pairs, int(cfg["k_min"])).to_dict()}
        try:
            fit = fit_power_law_exponent(rf)
            entry["rank_frequency"] = {"exponent": fit.exponent, "intercept": fit.intercept,
                                       "r_squared": fit.r_squared}
        except FitError as e:
            entry["rank_frequency"] = {"error": str(e)}
        doc["axes"][axis.value] = entry
        csvs[f"{axis.value}_popularity.csv"] = hist.to_csv()
        csvs[f"{axis.value}_rank_frequency.csv"] = rf.to_csv()

    out = Path(cfg["out_dir"])
    fmts = _formats(cfg["format"])
    if "json" in fmts:
        write_atomic(out / "zipf_report.json", _dump_json(doc))
    if "csv" in fmts:
        for name, text in csvs.items():
            write_atomic(out / name, text)
    item_rf = doc["axes"]["item"]["rank_frequency"]
    print(f"{len(parsed.events)} events; item rank-frequency exponent {item_rf.get('exponent')}")
    return EXIT_OK


COMMANDS = {
    "homogeneous-report": cmd_homogeneous_report,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args["command"]
    try:
        cfg = resolve_config(command, args)
        return COMMANDS[command](cfg)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, ConfigError, FitError, ParseError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
