"""Command-line harness: moment-matching benchmarks, the tracking
simulation, and a self-check sweep.  Results are written as CSV with
deterministic bodies (timing columns excepted) so runs can be diffed across
machines and repeat runs.

Configuration is a flat ``key = value`` text file; command-line flags win
over file values, file values win over built-in defaults.  Streams are
derived per row/trial as ``SeedSequence(entropy=(seed, row, trial))`` on
numpy's PCG64 generator, which pins the drawn numbers across platforms.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass

import numpy as np

from .cubature import (
    DEFAULT_POINT_BUDGET,
    CubatureRule,
    RuleKind,
    gauss_hermite_rule,
    hermite_1d,
    make_classified,
    make_rule,
    rule_checks,
    spherical_rule,
    unscented_rule,
)
from .errors import PointBudgetExceededError
from .filters import FilterState, lrkf_step, pl_lrkf_step
from .linalg import cholesky_full, cholesky_partial
from .models import (
    BearingSensorParams,
    SingerParams,
    benchmark_function,
    fusion_model,
    simulate_tracking,
)
from .moments import match_full, match_pl

_TIMING_FLOOR_S = 0.2  # each timed mode accumulates at least this much wall time


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

DEFAULTS = {
    "seed": "1234",
    "bench.rule": "sc",
    "bench.ut_alpha": "1.0",
    "bench.ut_kappa": "2.0",
    "bench.gh_order": "3",
    "bench.dims": "3x10",
    "bench.trials": "10000",
    "bench.modes": "both",
    "bench.point_budget": str(DEFAULT_POINT_BUDGET),
    "sim.agents": "3",
    "sim.steps": "100",
    "sim.filters": "both",
    "sim.diagnostics": "0",
    "singer.dt": "0.1",
    "singer.tau": "2.0",
    "singer.sigma_m2": "1.0",
    "sensor.sigma_alpha": "0.01",
    "sensor.reported_var": "0.1",
    "validate.sc_max_dim": "50",
    "validate.ut_max_dim": "50",
    "validate.ut_alpha": "1.0",
    "validate.ut_kappa": "2.0",
    "validate.gh_max_order": "5",
    "validate.gh_max_dim": "6",
    "validate.chol_matrices": "1000",
    "validate.chol_max_dim": "40",
    "validate.hermite_max_order": "9",
}


def load_config_file(path: str) -> dict:
    """Parse a flat ``key = value`` file; '#' starts a comment."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def merged_config(path: str | None, overrides: dict) -> dict:
    cfg = dict(DEFAULTS)
    if path:
        cfg.update(load_config_file(path))
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _parse_dims(text: str):
    dims = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        z_txt, _, l_txt = part.partition("x")
        z, l = int(z_txt), int(l_txt)
        if z < 1 or l < 1:
            raise ValueError(f"dims entries must be positive, got {part!r}")
        dims.append((z, l))
    if not dims:
        raise ValueError("no (Z, L) pairs given")
    return dims


def _parse_modes(text: str):
    aliases = {
        "both": {"full", "pl"},
        "full": {"full"},
        "pl": {"pl"},
        "lrkf": {"full"},
        "pl-lrkf": {"pl"},
    }
    if text not in aliases:
        raise ValueError(f"unknown mode {text!r} (expected full, pl or both)")
    return frozenset(aliases[text])


@dataclass(frozen=True)
class BenchConfig:
    """Settings for one benchmark invocation."""

    kind: RuleKind
    dims: tuple
    trials: int
    seed: int
    modes: frozenset
    point_budget: int
    out: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trial count must be >= 1, got {self.trials}")


@dataclass(frozen=True)
class SimConfig:
    """Settings for one tracking-simulation invocation."""

    singer: SingerParams
    sensor: BearingSensorParams
    steps: int
    seed: int
    filters: frozenset  # subset of {"full", "pl"}; full = plain filter
    diagnostics: bool = False
    out: str | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"step count must be >= 1, got {self.steps}")


def bench_config_from(cfg: dict) -> BenchConfig:
    name = cfg["bench.rule"]
    if name == "sc":
        kind = RuleKind("sc")
    elif name == "ut":
        kind = RuleKind("ut", alpha=float(cfg["bench.ut_alpha"]), kappa=float(cfg["bench.ut_kappa"]))
    elif name == "gh":
        kind = RuleKind("gh", order=int(cfg["bench.gh_order"]))
    else:
        raise ValueError(f"unknown rule {name!r} (expected sc, ut or gh)")
    return BenchConfig(
        kind=kind,
        dims=tuple(_parse_dims(cfg["bench.dims"])),
        trials=int(cfg["bench.trials"]),
        seed=int(cfg["seed"]),
        modes=_parse_modes(cfg["bench.modes"]),
        point_budget=int(cfg["bench.point_budget"]),
        out=cfg.get("out"),
    )


def sim_config_from(cfg: dict) -> SimConfig:
    singer = SingerParams(
        dt=float(cfg["singer.dt"]),
        tau=float(cfg["singer.tau"]),
        sigma_m2=float(cfg["singer.sigma_m2"]),
        agents=int(cfg["sim.agents"]),
    )
    sensor = BearingSensorParams(
        sigma_alpha=float(cfg["sensor.sigma_alpha"]),
        reported_cov=float(cfg["sensor.reported_var"]) * np.eye(9),
    )
    return SimConfig(
        singer=singer,
        sensor=sensor,
        steps=int(cfg["sim.steps"]),
        seed=int(cfg["seed"]),
        filters=_parse_modes(cfg["sim.filters"]),
        diagnostics=cfg["sim.diagnostics"] not in ("0", "false", "no", ""),
        out=cfg.get("out"),
    )


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def _csv_quote(cell: str) -> str:
    if any(c in cell for c in (",", '"', "\n")):
        return '"' + cell.replace('"', '""') + '"'
    return cell


def write_csv(stream, comments, header, rows):
    """RFC-4180-style CSV with '#' comment lines first and LF endings."""
    for line in comments:
        stream.write(f"# {line}\n")
    stream.write(",".join(_csv_quote(c) for c in header) + "\n")
    for row in rows:
        stream.write(",".join(_csv_quote(str(c)) for c in row) + "\n")


def rule_to_csv(rule: CubatureRule, stream):
    """Debug dump of a rule: one row per point, weight first, 17 significant
    digits throughout."""
    header = ["weight"] + [f"xi_{i}" for i in range(rule.dim)]
    rows = [
        [_fmt(rule.weights[j])] + [_fmt(v) for v in rule.points[:, j]]
        for j in range(rule.count)
    ]
    write_csv(stream, [f"rule {rule.kind.label()} dim={rule.dim}"], header, rows)


# ---------------------------------------------------------------------------
# bench subcommand
# ---------------------------------------------------------------------------

BENCH_HEADER = [
    "rule", "z", "l", "x", "trials",
    "evals_full", "evals_pl",
    "delta_m_y", "delta_p_xy", "delta_p_yy",
    "t_full_s", "t_pl_s", "speedup", "status",
]


def _trial_inputs(seed: int, row: int, trial: int, x: int):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, row, trial)))
    m = rng.standard_normal(x)
    b = rng.standard_normal((x, x))
    p = b @ b.T + x * np.eye(x)
    return m, p


def _bench_row(cfg: BenchConfig, row: int, z: int, l: int):
    x = z + l
    plf = benchmark_function(z, l, np.random.SeedSequence(entropy=(cfg.seed, row)))
    run_full = "full" in cfg.modes
    run_pl = "pl" in cfg.modes
    status = "ok" if run_full and run_pl else ("full-only" if run_full else "pl-only")

    full_rule = None
    if run_full:
        try:
            full_rule = make_rule(cfg.kind, x, cfg.point_budget)
        except PointBudgetExceededError:
            status = "full-budget-exceeded"
    cls_rule = make_classified(cfg.kind, x, z, cfg.point_budget) if run_pl else None

    m_w, p_w = _trial_inputs(cfg.seed, row, cfg.trials, x)  # warm-up inputs
    evals_full = evals_pl = None
    if full_rule is not None:
        plf.reset_g_eval_count()
        match_full(plf, m_w, p_w, full_rule)
        evals_full = plf.g_eval_count
    if cls_rule is not None:
        plf.reset_g_eval_count()
        match_pl(plf, m_w, p_w, cls_rule)
        evals_pl = plf.g_eval_count

    t_full = t_pl = 0.0
    n_full = n_pl = 0
    d_my = d_pxy = d_pyy = 0.0
    for trial in range(cfg.trials):
        m, p = _trial_inputs(cfg.seed, row, trial, x)
        jf = jp = None
        if full_rule is not None:
            t0 = time.perf_counter()
            jf = match_full(plf, m, p, full_rule)
            t_full += time.perf_counter() - t0
            n_full += 1
        if cls_rule is not None:
            t0 = time.perf_counter()
            jp = match_pl(plf, m, p, cls_rule)
            t_pl += time.perf_counter() - t0
            n_pl += 1
        if jf is not None and jp is not None:
            d_my += float(np.linalg.norm(jf.m_y - jp.m_y))
            d_pxy += float(np.linalg.norm(jf.p_xy - jp.p_xy))
            d_pyy += float(np.linalg.norm(jf.p_yy - jp.p_yy))
    # top up short timings with extra repetitions on the warm-up inputs
    while full_rule is not None and t_full < _TIMING_FLOOR_S:
        t0 = time.perf_counter()
        match_full(plf, m_w, p_w, full_rule)
        t_full += time.perf_counter() - t0
        n_full += 1
    while cls_rule is not None and t_pl < _TIMING_FLOOR_S:
        t0 = time.perf_counter()
        match_pl(plf, m_w, p_w, cls_rule)
        t_pl += time.perf_counter() - t0
        n_pl += 1

    both = full_rule is not None and cls_rule is not None
    mean_full = t_full / n_full if n_full else None
    mean_pl = t_pl / n_pl if n_pl else None
    return [
        cfg.kind.label(), z, l, x, cfg.trials,
        "" if evals_full is None else evals_full,
        "" if evals_pl is None else evals_pl,
        _fmt(d_my / cfg.trials) if both else "",
        _fmt(d_pxy / cfg.trials) if both else "",
        _fmt(d_pyy / cfg.trials) if both else "",
        "" if mean_full is None else f"{mean_full:.6e}",
        "" if mean_pl is None else f"{mean_pl:.6e}",
        f"{mean_full / mean_pl:.6e}" if (mean_full and mean_pl) else "",
        status,
    ]


def run_bench(cfg: BenchConfig):
    comments = [
        "plfilt bench",
        "rng: numpy PCG64, streams SeedSequence(entropy=(seed, row, trial))",
        f"seed: {cfg.seed}",
        "nondeterministic columns: t_full_s, t_pl_s, speedup",
    ]
    rows = [_bench_row(cfg, i, z, l) for i, (z, l) in enumerate(cfg.dims)]
    return comments, BENCH_HEADER, rows


# ---------------------------------------------------------------------------
# sim subcommand
# ---------------------------------------------------------------------------


def _block_indices(n_agents: int):
    pos, vel, acc = [], [], []
    for i in range(n_agents):
        pos.extend(range(9 * i, 9 * i + 3))
        vel.extend(range(9 * i + 3, 9 * i + 6))
        acc.extend(range(9 * i + 6, 9 * i + 9))
    return np.array(pos), np.array(vel), np.array(acc)


def run_sim(cfg: SimConfig):
    data = simulate_tracking(
        cfg.singer, cfg.sensor, cfg.steps, np.random.SeedSequence(entropy=(cfg.seed,))
    )
    model = fusion_model(cfg.singer, cfg.sensor)
    blocks = _block_indices(cfg.singer.agents)
    labels = {"full": "lrkf", "pl": "pl"}
    runners = {"full": lrkf_step, "pl": pl_lrkf_step}
    active = [m for m in ("full", "pl") if m in cfg.filters]

    header = ["k"]
    for mode in active:
        tag = labels[mode]
        header += [f"rms_pos_{tag}", f"rms_vel_{tag}", f"rms_acc_{tag}"]
        header += [f"env3_pos_{tag}", f"env3_vel_{tag}", f"env3_acc_{tag}"]
    if len(active) == 2:
        header.append("mean_diff")

    states = {
        mode: FilterState(k=0, mean=data.init_mean.copy(), cov=data.init_cov.copy())
        for mode in active
    }
    rows = []
    for k in range(1, cfg.steps + 1):
        y = data.measurements[k - 1]
        row = [k]
        for mode in active:
            states[mode] = runners[mode](
                states[mode], model, y, keep_prediction=cfg.diagnostics
            )
            err = states[mode].mean - data.truth[k]
            var = np.diag(states[mode].cov)
            for idx in blocks:
                row.append(_fmt(float(np.sqrt(np.mean(err[idx] ** 2)))))
            for idx in blocks:
                row.append(_fmt(3.0 * float(np.sqrt(np.mean(var[idx])))))
        if len(active) == 2:
            row.append(_fmt(float(np.linalg.norm(states["full"].mean - states["pl"].mean))))
        rows.append(row)

    comments = [
        "plfilt sim",
        "rng: numpy PCG64, stream SeedSequence(entropy=(seed,))",
        f"seed: {cfg.seed}",
        f"agents: {cfg.singer.agents}, steps: {cfg.steps}",
    ]
    return comments, header, rows


# ---------------------------------------------------------------------------
# validate subcommand
# ---------------------------------------------------------------------------


def _spd_matrix(rng, n):
    b = rng.standard_normal((n, n))
    return b @ b.T + n * np.eye(n)


def run_validate(cfg: dict, corrupt: bool = False):
    """Self-check sweep.  Returns (lines, ok); one line per check."""
    seed = int(cfg["seed"])
    lines = []
    all_ok = True

    def emit(name, ok, detail):
        nonlocal all_ok
        all_ok &= ok
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")

    def sweep_rule(name, rule):
        w_dev, m_dev, symmetric = rule_checks(rule)
        ok = w_dev <= 1e-12 and m_dev <= 1e-10 and symmetric
        emit(
            name,
            ok,
            f"weight_dev={w_dev:.2e} moment_dev={m_dev:.2e} symmetric={'yes' if symmetric else 'no'}",
        )

    for x in range(1, int(cfg["validate.sc_max_dim"]) + 1):
        rule = spherical_rule(x)
        if corrupt and x == 3:
            w = rule.weights.copy()
            w[0] += 1e-6
            rule = CubatureRule(dim=x, weights=w, points=rule.points.copy(), kind=rule.kind)
        sweep_rule(f"sc x={x}", rule)
    alpha = float(cfg["validate.ut_alpha"])
    kappa = float(cfg["validate.ut_kappa"])
    for x in range(1, int(cfg["validate.ut_max_dim"]) + 1):
        sweep_rule(f"ut x={x}", unscented_rule(x, alpha, kappa))
    for p in range(2, int(cfg["validate.gh_max_order"]) + 1):
        for x in range(1, int(cfg["validate.gh_max_dim"]) + 1):
            sweep_rule(f"gh p={p} x={x}", gauss_hermite_rule(x, p))

    for p in range(1, int(cfg["validate.hermite_max_order"]) + 1):
        roots, _ = hermite_1d(p)
        h_prev, h = np.ones_like(roots), roots.copy()
        if p == 0:
            h = h_prev
        for k in range(1, p):
            h_prev, h = h, roots * h - k * h_prev
        res = float(np.abs(h).max())
        emit(f"hermite p={p}", res <= 1e-10, f"residual={res:.2e}")

    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, 10_000)))
    total = int(cfg["validate.chol_matrices"])
    max_dim = int(cfg["validate.chol_max_dim"])
    dims = [2 + (i % (max_dim - 1)) for i in range(total)]
    worst = {}
    for n in dims:
        p = _spd_matrix(rng, n)
        full = cholesky_full(p)
        for z in range(1, n + 1):
            part = cholesky_partial(p, z)
            dev = float(np.abs(part.column_block() - full[:, :z]).max())
            worst[n] = max(worst.get(n, 0.0), dev)
    for n in sorted(worst):
        emit(f"chol x={n}", worst[n] <= 1e-13, f"partial_vs_full={worst[n]:.2e}")

    return lines, all_ok


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _add_common(parser):
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--seed", type=int, help="master RNG seed")
    parser.add_argument("--out", help="output path (default: stdout)")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="plfilt", description="moment-matching and tracking experiment harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="compare full vs structured moment matching")
    _add_common(bench)
    bench.add_argument("--rule", choices=("sc", "ut", "gh"))
    bench.add_argument("--ut-alpha", type=float)
    bench.add_argument("--ut-kappa", type=float)
    bench.add_argument("--gh-order", type=int)
    bench.add_argument(
        "--dims", action="append", metavar="ZxL", help="nonlinear x linear sizes, repeatable"
    )
    bench.add_argument("--trials", type=int)
    bench.add_argument("--modes", choices=("full", "pl", "both"))
    bench.add_argument("--point-budget", type=int)

    sim = sub.add_parser("sim", help="run the tracking comparison")
    _add_common(sim)
    sim.add_argument("--agents", type=int)
    sim.add_argument("--steps", type=int)
    sim.add_argument("--modes", choices=("full", "pl", "both", "lrkf", "pl-lrkf"))

    validate = sub.add_parser("validate", help="run the built-in self checks")
    _add_common(validate)
    return parser


def _emit(out_path, write_fn):
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            write_fn(fh)
    else:
        write_fn(sys.stdout)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "bench":
        overrides = {
            "seed": None if args.seed is None else str(args.seed),
            "bench.rule": args.rule,
            "bench.ut_alpha": None if args.ut_alpha is None else str(args.ut_alpha),
            "bench.ut_kappa": None if args.ut_kappa is None else str(args.ut_kappa),
            "bench.gh_order": None if args.gh_order is None else str(args.gh_order),
            "bench.dims": ",".join(args.dims) if args.dims else None,
            "bench.trials": None if args.trials is None else str(args.trials),
            "bench.modes": args.modes,
            "bench.point_budget": None if args.point_budget is None else str(args.point_budget),
        }
        cfg = merged_config(args.config, overrides)
        bench_cfg = bench_config_from(cfg)
        started = time.perf_counter()
        comments, header, rows = run_bench(bench_cfg)
        _emit(args.out, lambda fh: write_csv(fh, comments, header, rows))
        print(
            f"bench: {len(rows)} rows in {time.perf_counter() - started:.2f} s",
            file=sys.stderr,
        )
        return 0
    if args.command == "sim":
        overrides = {
            "seed": None if args.seed is None else str(args.seed),
            "sim.agents": None if args.agents is None else str(args.agents),
            "sim.steps": None if args.steps is None else str(args.steps),
            "sim.filters": args.modes,
        }
        cfg = merged_config(args.config, overrides)
        sim_cfg = sim_config_from(cfg)
        started = time.perf_counter()
        comments, header, rows = run_sim(sim_cfg)
        _emit(args.out, lambda fh: write_csv(fh, comments, header, rows))
        print(
            f"sim: {len(rows)} steps in {time.perf_counter() - started:.2f} s",
            file=sys.stderr,
        )
        return 0
    if args.command == "validate":
        overrides = {"seed": None if args.seed is None else str(args.seed)}
        cfg = merged_config(args.config, overrides)
        lines, ok = run_validate(cfg)
        _emit(args.out, lambda fh: fh.write("\n".join(lines) + "\n"))
        if args.out:
            print(f"validate: {'all checks passed' if ok else 'FAILURES'}", file=sys.stderr)
        return 0 if ok else 1
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
