"""Command-line harness: ``loopsoup <command> --config run.json``.

Every command writes CSV/JSONL/text outputs plus ``manifest.json`` (config
echo, versions, seed, output list) into ``--out``.  A manifest can be passed
back as ``--config`` to repeat the run.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (divergent
series, uncertified truncation, solver failure or a failed numerical check),
4 failed statistical test in ``verify``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cycle_weights import exact_weights, mean_particles, threshold
from .errors import (ConfigError, DivergentSeriesError, InsufficientSamplesError, SolverError,
                     TruncationError)
from .regimes import Regime
from .rng import check_seed

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_STAT = 0, 2, 3, 4

COMMANDS = ("thermo", "weights", "partition", "sample", "density-matrix", "verify", "sweep")
_TOP_FIELDS = {"trap", "beta", "chi", "a", "a_values", "zero_exponent", "N", "seed", "options"}
_OPTION_FIELDS = {
    "thermo": {"J", "ladder_free_energy"},
    "weights": {"mode"},
    "partition": {"tilt", "support"},
    "sample": {"n_samples", "m", "J"},
    "density-matrix": {"G", "n_modes", "profile_points", "export_grid"},
    "verify": {"criteria"},
    "sweep": {"chis", "J"},
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    trap: object
    beta: float
    regime: Regime | None
    ladder: tuple[int, ...]
    seed: int = 0
    options: dict = field(default_factory=dict)

    def a_values(self) -> list[float]:
        if self.regime is None:
            raise ConfigError("one of chi, a, a_values must be given")
        return self.regime.a_ladder(self.ladder, self.trap.d)

    def to_dict(self) -> dict:
        out = {"trap": self.trap.to_dict(), "beta": self.beta, "N": list(self.ladder),
               "seed": self.seed, "options": self.options}
        if self.regime is not None:
            out.update(self.regime.to_dict())
        return out


def _number(data: dict, key: str, positive: bool = True, default=None) -> float:
    if key not in data:
        if default is None:
            raise ConfigError(f"{key}: missing field")
        return default
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{key}: expected a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{key}: must be > 0, got {v!r}")
    return float(v)


def _ladder(value) -> tuple[int, ...]:
    vals = value if isinstance(value, list) else [value]
    if not vals:
        raise ConfigError("N: ladder must not be empty")
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(f"N: expected positive integers, got {v!r}")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError("N: ladder must be strictly increasing")
    return tuple(vals)


def parse_config(data: dict, command: str, require_regime: bool = True) -> RunConfig:
    from .traps import TrapPotential

    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a JSON object")
    extra = set(data) - _TOP_FIELDS
    if extra:
        raise ConfigError(f"config: unknown field(s) {sorted(extra)}")
    if "trap" not in data or not isinstance(data["trap"], dict):
        raise ConfigError("trap: missing object field")
    trap = TrapPotential.from_dict(data["trap"])
    beta = _number(data, "beta", default=1.0)
    regime_keys = {k: data[k] for k in ("chi", "a", "a_values", "zero_exponent") if k in data}
    regime = None
    if {"chi", "a", "a_values"} & set(regime_keys):
        regime = Regime.from_dict(regime_keys)
    elif require_regime:
        raise ConfigError("regime: one of chi, a, a_values must be given")
    ladder = _ladder(data.get("N", 1024))
    seed = check_seed(data.get("seed", 0))
    options = data.get("options", {})
    if not isinstance(options, dict):
        raise ConfigError("options: expected an object")
    # one config may serve several commands, so any known option name is accepted
    bad = set(options) - set().union(*_OPTION_FIELDS.values())
    if bad:
        raise ConfigError(f"options: unknown field(s) {sorted(bad)}")
    cfg = RunConfig(trap, beta, regime, ladder, seed, dict(options))
    if regime is not None and regime.kind == "explicit":
        cfg.a_values()
    return cfg


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if isinstance(data, dict) and "manifest_version" in data:
        data = data["config"]
    return data


def _opt_int(cfg: RunConfig, key: str, default: int, minimum: int = 1) -> int:
    v = cfg.options.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"options.{key}: expected an integer >= {minimum}, got {v!r}")
    return v


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _versions() -> dict:
    import mpmath
    import numba
    import scipy

    return {"loopsoup": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "mpmath": mpmath.__version__}


def write_manifest(out: Path, command: str, cfg: RunConfig | None, outputs: list[Path],
                   threads: int, extra: dict | None = None) -> Path:
    manifest = {
        "manifest_version": 1,
        "command": command,
        "config": cfg.to_dict() if cfg is not None else {},
        "seed": cfg.seed if cfg is not None else None,
        "threads": threads,
        "versions": _versions(),
        "outputs": sorted(p.name for p in outputs),
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _write_rows(path: Path, rows: list[dict]) -> Path:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        keys = list(rows[0]) if rows else []
        wr.writerow(keys)
        for row in rows:
            wr.writerow([repr(float(row[k])) if isinstance(row[k], (float, np.floating)) else row[k]
                         for k in keys])
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_thermo(cfg: RunConfig, out: Path, threads: int) -> list[Path]:
    from .thermo import ThermoReport, alpha_sequence, critical_density, free_energy_limit, solve_u_chi

    if cfg.regime is None or cfg.regime.kind == "explicit":
        raise ConfigError("thermo needs chi (scaling regime) or a constant a")
    chi = cfg.regime.chi_limit
    J = _opt_int(cfg, "J", 20)
    rho = critical_density(cfg.trap, cfg.beta)
    a_limit = cfg.regime.a if cfg.regime.kind == "const" else 0.0
    report = ThermoReport(cfg.trap, cfg.beta, chi, rho, solve_u_chi(cfg.trap, cfg.beta, chi),
                          alpha_sequence(cfg.trap, cfg.beta, chi, J),
                          free_energy_limit(cfg.trap, cfg.beta, chi, a_limit))
    if cfg.options.get("ladder_free_energy", True):
        from .partition import build_table

        for N, a in zip(cfg.ladder, cfg.a_values()):
            table = build_table(exact_weights(cfg.trap, cfg.beta, a, N))
            report.ladder.append({"N": N, "a": a, "f_exact": -float(table.log_h[N]) / (cfg.beta * N),
                                  "f_limit": report.f_limit})
    return report.write(out)


def cmd_weights(cfg: RunConfig, out: Path, threads: int) -> list[Path]:
    mode = cfg.options.get("mode", "auto")
    paths = []
    for N, a in zip(cfg.ladder, cfg.a_values()):
        w = exact_weights(cfg.trap, cfg.beta, a, N, mode=mode)
        rows = [{"j": j, "log_t": float(v)} for j, v in enumerate(w.log_t, start=1)]
        paths.append(_write_rows(out / f"weights_N{N}.csv", rows))
    summary = []
    for N, a in zip(cfg.ladder, cfg.a_values()):
        w = exact_weights(cfg.trap, cfg.beta, a, N, mode=mode)
        T = threshold(N, a, cfg.trap.alpha) if a <= 1 else threshold(N, a, cfg.trap.alpha, bounded=True)
        summary.append({"N": N, "a": a, "provenance": w.provenance.value, "lambda1": w.lambda1,
                        "mean_particles": mean_particles(w), "T_N": T, "n_asymptotic": w.n_asymptotic})
    paths.append(_write_rows(out / "weights_summary.csv", summary))
    return paths


def cmd_partition(cfg: RunConfig, out: Path, threads: int) -> list[Path]:
    from .partition import build_table, chemical_potential, recursion_residual

    paths, summary = [], []
    for N, a in zip(cfg.ladder, cfg.a_values()):
        w = exact_weights(cfg.trap, cfg.beta, a, N)
        mu = 0.0
        if cfg.options.get("tilt", False):
            mu = chemical_potential(w, float(N)).mu
            w = w.tilted(mu)
        table = build_table(w, support=cfg.options.get("support"))
        path = out / f"partition_N{N}.csv"
        table.to_csv(path)
        paths.append(path)
        summary.append({"N": N, "a": a, "mu": mu, "log_h_N": float(table.log_h[N]),
                        "log_prob_N": table.log_prob(N), "residual": recursion_residual(table) if N <= 4096 else math.nan})
    paths.append(_write_rows(out / "partition_summary.csv", summary))
    return paths


def cmd_sample(cfg: RunConfig, out: Path, threads: int) -> list[Path]:
    from .occupancy import exact_marginals, pd_convergence_test, sample_many, sample_pd1_many, write_jsonl
    from .partition import build_table
    from .rng import derive_seeds
    from .thermo import _rho_or_inf

    n_samples = _opt_int(cfg, "n_samples", 1000)
    m = _opt_int(cfg, "m", 3)
    J = _opt_int(cfg, "J", 10)
    paths, stats = [], []
    rho = _rho_or_inf(cfg.trap, cfg.beta)
    seeds = derive_seeds(cfg.seed, 2 * len(cfg.ladder))
    for i, (N, a) in enumerate(zip(cfg.ladder, cfg.a_values())):
        table = build_table(exact_weights(cfg.trap, cfg.beta, a, N))
        loop_seed, pd_seed = seeds[2 * i], seeds[2 * i + 1]
        samples = sample_many(table, n_samples, loop_seed, threads=threads)
        path = out / f"samples_N{N}.jsonl"
        write_jsonl(samples, path)
        paths.append(path)
        counts = np.array([s.counts(N)[1:J + 1] for s in samples], dtype=float)
        exact = exact_marginals(table, N)[:J]
        ones = np.array([s.counts(1)[1] for s in samples], dtype=float) / N
        largest = np.array([s.lengths[0] for s in samples], dtype=float) / N
        hist, edges = np.histogram(largest, bins=20, range=(0.0, 1.0))
        entry = {
            "N": N, "a": a, "n_samples": n_samples,
            "chi_N": N * a ** (0.5 * cfg.trap.d),
            "one_loop_fraction_exact": float(exact[0] / N) if J >= 1 else math.nan,
            "one_loop_fraction_sampled": float(ones.mean()),
            "marginals": [{"j": j + 1, "exact": float(exact[j]), "sampled": float(counts[:, j].mean()),
                           "stderr": float(counts[:, j].std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else math.nan}
                          for j in range(min(J, N))],
            "largest_loop_histogram": {"edges": edges.tolist(), "counts": hist.tolist()},
        }
        chi_N = entry["chi_N"]
        if chi_N > rho:
            try:
                rep = pd_convergence_test(samples, sample_pd1_many(n_samples, pd_seed), m,
                                          N * (1.0 - rho / chi_N))
                entry["pd_test"] = rep.as_dict()
                entry["pd_test"]["passed"] = rep.passed()
            except InsufficientSamplesError as exc:
                print(f"warning: {exc}; PD test skipped for N={N}", file=sys.stderr)
                entry["pd_test"] = None
        stats.append(entry)
    report = out / "sample_report.json"
    report.write_text(json.dumps(stats, indent=2) + "\n")
    paths.append(report)
    return paths


def cmd_density_matrix(cfg: RunConfig, out: Path, threads: int) -> list[Path]:
    from .density_matrix import (_length_scale, build_grid, condensate_profile, exact_sigma,
                                 principal_eigenvalue, write_profile_csv)
    from .partition import build_table
    from .thermo import _rho_or_inf

    G = _opt_int(cfg, "G", 128 if cfg.trap.d == 1 else 64)
    n_modes = _opt_int(cfg, "n_modes", 12)
    rho = _rho_or_inf(cfg.trap, cfg.beta)
    rows, paths = [], []
    last = None
    for N, a in zip(cfg.ladder, cfg.a_values()):
        table = build_table(exact_weights(cfg.trap, cfg.beta, a, N))
        grid = build_grid(cfg.trap, table, G=G, n_modes=n_modes)
        res = principal_eigenvalue(grid)
        if not res.converged:
            raise SolverError(f"power iteration did not converge for N={N}: last quotients {res.history[-5:]}")
        chi_N = N * a ** (0.5 * cfg.trap.d)
        rows.append({"N": N, "a": a, "chi_N": chi_N, "sigma": res.sigma, "sigma_over_N": res.sigma / N,
                     "sigma_exact": exact_sigma(table), "trace": grid.trace,
                     "condensate_fraction_limit": max(0.0, 1.0 - rho / chi_N), "iterations": res.iterations})
        last = (N, a, table, grid, chi_N)
    paths.append(_write_rows(out / "sigma_ladder.csv", rows))
    N, a, table, grid, chi_N = last
    if cfg.options.get("export_grid", True):
        paths.extend(grid.write_csv(out))
    if chi_N > rho:
        n_pts = _opt_int(cfg, "profile_points", 41)
        width = min(4.0 * _length_scale(cfg.trap, a), float(np.max(np.abs(grid.nodes))))
        xs = np.linspace(-width, width, n_pts)
        pts = np.zeros((n_pts, cfg.trap.d))
        pts[:, 0] = xs
        prof = condensate_profile(cfg.trap, table, chi_N, rho, pts)
        prof.x = xs
        path = out / "condensate_profile.csv"
        write_profile_csv(prof, path)
        paths.append(path)
    return paths


def cmd_sweep(cfg: RunConfig, out: Path, threads: int) -> list[Path]:
    from .density_matrix import exact_sigma
    from .partition import build_table
    from .thermo import _rho_or_inf, free_energy_limit, solve_u_chi

    chis = cfg.options.get("chis")
    if not isinstance(chis, list) or not chis or any(
            isinstance(c, bool) or not isinstance(c, (int, float)) or c < 0 for c in chis):
        raise ConfigError("options.chis: expected a non-empty list of numbers >= 0")
    rho = _rho_or_inf(cfg.trap, cfg.beta)
    rows = []
    for chi in chis:
        reg = Regime("scaling", chi=float(chi), zero_exponent=cfg.regime.zero_exponent if cfg.regime else 1.0)
        for N in cfg.ladder:
            a = reg.a_of(N, cfg.trap.d)
            w = exact_weights(cfg.trap, cfg.beta, a, N)
            table = build_table(w)
            rows.append({
                "chi": float(chi), "N": N, "a": a,
                "sigma_over_N": exact_sigma(table) / N,
                "condensate_fraction_limit": max(0.0, 1.0 - rho / chi) if chi > 0 else 0.0,
                "u_chi": solve_u_chi(cfg.trap, cfg.beta, chi) if chi > 0 else -math.inf,
                "f_exact": -float(table.log_h[N]) / (cfg.beta * N),
                "f_limit": free_energy_limit(cfg.trap, cfg.beta, chi) if chi > 0 else -math.inf,
                "one_loop_fraction": math.exp(w.log_t[0] + table.log_h[N - 1] - table.log_h[N]) / N,
            })
    return [_write_rows(out / "sweep.csv", rows)]


def cmd_verify(cfg_data: dict, out: Path, threads: int, seed: int | None) -> tuple[list[Path], int]:
    from .acceptance import CRITERIA, SEED, run_all

    opts = cfg_data.get("options", {}) if isinstance(cfg_data, dict) else {}
    selected = opts.get("criteria")
    if selected is not None:
        selected = [str(s) for s in selected]
        bad = [s for s in selected if s not in CRITERIA]
        if bad:
            raise ConfigError(f"options.criteria: unknown criteria {bad}")
    checks = run_all(selected, threads=threads, seed=SEED if seed is None else seed)
    lines = []
    for c in checks:
        lines.append(c.line())
        lines.extend(f"    info: {i}" for i in c.info)
    text = "\n".join(lines) + "\n"
    print(text, end="")
    path = out / "verify_report.txt"
    path.write_text(text)
    code = EXIT_OK
    if any(not c.passed and not c.statistical for c in checks):
        code = EXIT_NUMERIC
    elif any(not c.passed for c in checks):
        code = EXIT_STAT
    return [path], code


_HANDLERS = {
    "thermo": cmd_thermo, "weights": cmd_weights, "partition": cmd_partition, "sample": cmd_sample,
    "density-matrix": cmd_density_matrix, "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loopsoup", description="Trapped Bose gas loop-soup laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration (or a manifest.json from an earlier run)")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed, overrides the config")
        p.add_argument("--out", default="loopsoup_out", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sampling")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        data = load_config(args.config)
        if args.seed is not None:
            check_seed(args.seed)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "verify":
            paths, code = cmd_verify(data, out, args.threads, args.seed)
            write_manifest(out, "verify", None, paths, args.threads, {"seed": args.seed})
            return code
        if not data:
            raise ConfigError("--config is required for this command")
        if args.seed is not None:
            data = dict(data, seed=args.seed)
        cfg = parse_config(data, args.command, require_regime=args.command != "sweep")
        paths = _HANDLERS[args.command](cfg, out, args.threads)
        write_manifest(out, args.command, cfg, paths, args.threads)
        for p in paths:
            print(p)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergentSeriesError, TruncationError, SolverError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
