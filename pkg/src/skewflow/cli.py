"""Experiment runner: ``skewflow <subcommand> [options]``.

Each run writes ``<out>/<subcommand>.csv`` (deterministic, LF line endings,
``repr`` floats) and ``<out>/<subcommand>.json`` (config echo, gates,
wall-clock).  The exit status is 0 iff every gated check passes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, rng

# ---------------------------------------------------------------------------
# typed parameters


def _floats(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v.strip())


@dataclass(frozen=True)
class Param:
    type: Callable
    default: object
    help: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    params: dict
    seed: int = 0
    out: str = "out"
    workers: int | None = None

    def echo(self) -> dict:
        p = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params.items()}
        return {"command": self.command, "params": p, "seed": self.seed, "out": self.out,
                "workers": self.workers}


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    columns: list
    rows: list = field(default_factory=list)
    gates: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(self.gates.values())

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(row.get(c, "")) for c in self.columns])
        return buf.getvalue()

    def json_text(self) -> str:
        doc = {
            "config": self.config.echo(),
            "version": self.version,
            "rows": len(self.rows),
            "gates": self.gates,
            "passed": self.passed,
            "summary": self.summary,
            "wall_clock_s": self.wall_clock,
        }
        return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        name = self.config.command
        c = out / f"{name}.csv"
        j = out / f"{name}.json"
        with c.open("w", newline="") as fh:
            fh.write(self.csv_text())
        with j.open("w", newline="") as fh:
            fh.write(self.json_text())
        return c, j


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if v is None:
        return ""
    return str(v)


def _json_default(v):
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"cannot serialize {type(v)}")


# ---------------------------------------------------------------------------
# subcommands


def _fbm_check(cfg: ExperimentConfig) -> ExperimentReport:
    from .fbm import TimeGrid, covariance_matrix, sample_fbm

    p = cfg.params
    rep = ExperimentReport(cfg, ["h", "i", "j", "t_i", "t_j", "empirical", "exact", "stderr", "z"])
    grid = TimeGrid(p["T"], p["n"])
    worst = 0.0
    for h in p["h"]:
        b = sample_fbm(p["method"], h, grid, p["dim"], p["count"], cfg.seed, workers=cfg.workers)
        exact = covariance_matrix(h, grid)
        for c in range(p["dim"]):
            x = b.data[:, 1:, c]
            prod = x[:, :, None] * x[:, None, :]
            emp = prod.mean(axis=0)
            se = prod.std(axis=0, ddof=1) / math.sqrt(p["count"])
            z = (emp - exact) / se
            worst = max(worst, float(np.abs(z).max()))
            for i in range(grid.n_steps):
                for j in range(i, grid.n_steps):
                    rep.rows.append({"h": h, "i": i + 1, "j": j + 1, "t_i": grid.nodes[i + 1],
                                     "t_j": grid.nodes[j + 1], "empirical": emp[i, j],
                                     "exact": exact[i, j], "stderr": se[i, j], "z": z[i, j]})
    rep.summary["max_abs_z"] = worst
    rep.gates["covariance_within_5se"] = worst <= 5.0
    return rep


def _frac_check(cfg: ExperimentConfig) -> ExperimentReport:
    from .frac_calc import SampledFunction, rel_l2_error, rl_derivative_left, rl_integral_left

    p = cfg.params
    rep = ExperimentReport(cfg, ["alpha", "identity", "n", "rel_l2_error", "tol", "pass"])
    x = np.linspace(0.0, 1.0, p["n"] + 1)
    f = SampledFunction(0.0, 1.0, np.sin(3.0 * x) + x**2)
    ok = True
    for a in p["alpha"]:
        e1 = rel_l2_error(rl_derivative_left(rl_integral_left(f, a), a), f)
        e2 = rel_l2_error(rl_integral_left(rl_derivative_left(f, a), a), f)
        for name, e in (("D^a I^a f = f", e1), ("I^a D^a f = f", e2)):
            passed = e < p["tol"]
            ok &= passed
            rep.rows.append({"alpha": a, "identity": name, "n": p["n"], "rel_l2_error": e,
                             "tol": p["tol"], "pass": passed})
    rep.gates["inversion"] = ok
    return rep


def _kernel_check(cfg: ExperimentConfig) -> ExperimentReport:
    from .kernel_ops import kernel_factorization, kh_inverse, kh_operator
    from .frac_calc import SampledFunction, rel_l2_error
    from .fbm import fbm_covariance

    p = cfg.params
    rep = ExperimentReport(cfg, ["check", "h", "t", "s", "n", "value", "exact", "rel_error", "tol", "pass"])
    ok_f, ok_r = True, True
    ts = p["t"]
    ss = p["s"]
    for h in p["h"]:
        for t, s in zip(ts, ss):
            v = kernel_factorization(h, t, s)
            ex = fbm_covariance(h, t, s)
            e = abs(v - ex) / abs(ex)
            ok_f &= e < p["tol"]
            rep.rows.append({"check": "factorization", "h": h, "t": t, "s": s, "value": v, "exact": ex,
                             "rel_error": e, "tol": p["tol"], "pass": e < p["tol"]})
        x = np.linspace(0.0, 1.0, p["n"] + 1)
        psi = SampledFunction(0.0, 1.0, np.sin(3.0 * x) + x)
        kpsi = kh_operator(h, psi)
        dk = np.gradient(kpsi.values, x, edge_order=2)
        back = kh_inverse(h, kpsi, kpsi.with_values(dk))
        e = rel_l2_error(back, psi)
        ok_r &= e < p["tol"]
        rep.rows.append({"check": "roundtrip", "h": h, "n": p["n"], "rel_error": e, "tol": p["tol"],
                         "pass": e < p["tol"]})
    rep.gates["factorization"] = ok_f
    rep.gates["roundtrip"] = ok_r
    return rep


def _girsanov_check(cfg: ExperimentConfig) -> ExperimentReport:
    from .fbm import TimeGrid, sample_wiener
    from .frac_calc import SampledFunction
    from .girsanov import exp_moment_probe, girsanov_mean, girsanov_weight

    p = cfg.params
    cols = ["check", "h", "eps", "k", "estimate", "stderr", "censored_fraction", "target", "pass"]
    rep = ExperimentReport(cfg, cols)
    grid = TimeGrid(p["T"], p["n"])
    x = grid.nodes
    # Brownian reduction
    w = sample_wiener(grid, 1, min(p["count"], 1000), cfg.seed, workers=cfg.workers)
    c = p["amplitude"]
    xi = girsanov_weight(0.5, [SampledFunction(0.0, grid.t_end, np.full(x.size, c))], w)
    classic = np.exp(-c * w.data[:, -1, 0] - 0.5 * c * c * grid.t_end)
    err = float(np.max(np.abs(xi / classic - 1.0)))
    rep.rows.append({"check": "brownian", "h": 0.5, "estimate": err, "target": 0.0, "pass": err < 1e-10})
    rep.gates["brownian_reduction"] = err < 1e-10
    u = [SampledFunction(0.0, grid.t_end, c * (np.sin(2 * np.pi * x / grid.t_end) + 0.5))]
    est = girsanov_mean(p["h"], u, grid, 1, p["count"], cfg.seed, workers=cfg.workers)
    good = est.within(1.0, 3.0)
    rep.rows.append({"check": "mean_density", "h": p["h"], "estimate": est.value, "stderr": est.stderr,
                     "target": 1.0, "pass": good})
    rep.gates["mean_density_within_3se"] = good
    probe_grid = TimeGrid(p["T"], p["probe_n"])
    for eps in p["eps"]:
        for k in p["k"]:
            pr = exp_moment_probe(p["probe_h"], p["d"], k, eps, 0.0, p["probe_count"], probe_grid,
                                  seed=cfg.seed, workers=cfg.workers)
            rep.rows.append({"check": "exp_moment", "h": p["probe_h"], "eps": eps, "k": k,
                             "estimate": pr.estimate, "stderr": pr.stderr,
                             "censored_fraction": pr.censored_fraction})
    return rep


def _skew_sim(cfg: ExperimentConfig) -> ExperimentReport:
    from .fbm import TimeGrid, sample_fbm
    from .skew_sde import SkewConfig, coupling_ok, solve_skew_mollified

    p = cfg.params
    rep = ExperimentReport(cfg, ["n_moll", "eps", "mean", "variance", "l2_cauchy", "coupling_ok"])
    grid = TimeGrid(p["T"], p["n"])
    noise = sample_fbm(p["method"], p["h"], grid, p["d"], p["count"], cfg.seed, workers=cfg.workers)
    base = SkewConfig(p["alpha"], (p["x0"],) * p["d"], p["h"], grid, p["n_moll"][0], p["d"], p["method"])
    finals = []
    for n in p["n_moll"]:
        sol = solve_skew_mollified(base.with_n(n), noise)
        finals.append(sol.data[:, -1, :])
    cauchy = []
    for idx, n in enumerate(p["n_moll"]):
        xt = finals[idx]
        diff = float(np.sqrt(np.mean(np.sum((finals[idx + 1] - xt) ** 2, axis=1)))) \
            if idx + 1 < len(finals) else math.nan
        cauchy.append(diff)
        rep.rows.append({"n_moll": n, "eps": 1.0 / n, "mean": float(xt[:, 0].mean()),
                         "variance": float(xt[:, 0].var(ddof=1)), "l2_cauchy": diff,
                         "coupling_ok": coupling_ok(1.0 / n, noise)})
    bad = [r["n_moll"] for r in rep.rows if not r["coupling_ok"]]
    if bad:
        print(f"warning: sqrt(eps) < 4 x RMS step for n_moll in {bad}; the drift is under-resolved",
              file=sys.stderr)
    rep.summary["under_resolved_n"] = bad
    finite = [c for c in cauchy if not math.isnan(c)]
    rep.summary["cauchy_decreasing"] = all(b < a for a, b in zip(finite, finite[1:]))
    return rep


def _flow_reg(cfg: ExperimentConfig) -> ExperimentReport:
    from .fbm import TimeGrid
    from .flow_regularity import moment_table
    from .skew_sde import SkewConfig

    p = cfg.params
    rep = ExperimentReport(cfg, ["n", "x", "k", "p", "estimate", "stderr"])
    grid = TimeGrid(p["T"], p["n"])
    base = SkewConfig(p["alpha"], (0.0,) * p["d"], p["h"], grid, p["n_moll"][0], p["d"], p["method"])
    xs = [(x,) * p["d"] for x in p["x"]]
    tab = moment_table(base, p["n_moll"], p["p"], p["k"], xs, p["count"], cfg.seed)
    for r in tab.rows:
        rep.rows.append({"n": r.n_moll, "x": ";".join(repr(v) for v in r.x), "k": r.k, "p": r.p,
                         "estimate": r.estimate, "stderr": r.stderr})
    ratios = tab.successive_ratios()
    rep.summary["successive_ratios"] = ratios
    rep.summary["bounded_trend"] = all(r < 2.0 for r in ratios)
    return rep


def _random_poly(seed: int, index: int, deg: int = 3):
    coef = rng.path_normals(seed, rng.AUX, index, deg + 1)
    return np.polynomial.Polynomial(coef)


def _shuffle_verify(cfg: ExperimentConfig) -> ExperimentReport:
    from .shuffle_algebra import enumerate_shuffles, verify_partial_shuffle, verify_shuffle_identity

    p = cfg.params
    rep = ExperimentReport(cfg, ["case", "m", "n", "k", "terms", "residual", "pass"])
    tol = p["tol"]
    ok_card, ok_id = True, True
    for tot in range(p["card_max"] + 1):
        for m in range(tot + 1):
            size = len(enumerate_shuffles(m, tot - m))
            good = size == math.comb(tot, m)
            ok_card &= good
            rep.rows.append({"case": "cardinality", "m": m, "n": tot - m, "terms": size, "pass": good})
    idx = 0
    th, t = p["theta"], p["t"]
    mmax = p["mmax"]
    for m in range(1, mmax + 1):
        for n in range(1, mmax + 1):
            fs = [_random_poly(cfg.seed, idx + i) for i in range(m)]
            gs = [_random_poly(cfg.seed, idx + m + i) for i in range(n)]
            idx += m + n
            r = verify_shuffle_identity(fs, gs, th, t)
            ok_id &= r.residual < tol
            rep.rows.append({"case": "shuffle", "m": m, "n": n, "terms": r.terms, "residual": r.residual,
                             "pass": r.residual < tol})
            for k in range(m + 1):
                r = verify_partial_shuffle(fs, gs, k, th, t)
                ok_id &= r.residual < tol
                rep.rows.append({"case": "partial", "m": m, "n": n, "k": k, "terms": r.terms,
                                 "residual": r.residual, "pass": r.residual < tol})
    rep.gates["cardinalities"] = ok_card
    rep.gates["residuals"] = ok_id
    return rep


def _bound_scan(cfg: ExperimentConfig) -> ExperimentReport:
    from .bound_eval import summability_scan, verdict_flip_ok

    p = cfg.params
    rep = ExperimentReport(cfg, ["d", "k", "q", "h", "verdict", "tail_ratio", "threshold", "failure_m", "reason"])
    grid = p["h"] if p["h"] else tuple(np.round(np.arange(p["h_start"], p["h_stop"] + 1e-12, p["h_step"]), 10))
    ok = True
    for d in p["d"]:
        for k in p["k"]:
            rows = summability_scan(d, k, p["q"], grid, p["m_max"])
            flip = verdict_flip_ok(rows, p["h_step"])
            rep.summary[f"flip_d{d}_k{k}"] = flip
            ok &= flip
            for r in rows:
                rep.rows.append({"d": d, "k": k, "q": p["q"], "h": r.h, "verdict": r.verdict,
                                 "tail_ratio": r.tail_ratio, "threshold": r.threshold,
                                 "failure_m": r.failure_m, "reason": r.reason})
    rep.gates["verdict_flips_at_threshold"] = ok
    return rep


def _thresholds(cfg: ExperimentConfig) -> ExperimentReport:
    from .bound_eval import hurst_thresholds

    p = cfg.params
    rep = ExperimentReport(cfg, ["d", "name", "threshold", "value"])
    for d in p["d"]:
        for name, v in hurst_thresholds(d, p["k_max"]).rows():
            rep.rows.append({"d": d, "name": name, "threshold": v, "value": float(v)})
    return rep


COMMANDS: dict[str, tuple[Callable, dict, str]] = {
    "fbm-check": (_fbm_check, {
        "h": Param(_floats, (0.1, 0.25, 0.4), "Hurst values"),
        "n": Param(int, 16, "grid steps"),
        "T": Param(float, 1.0, "horizon"),
        "count": Param(int, 50_000, "paths"),
        "dim": Param(int, 1, "dimension"),
        "method": Param(str, "cholesky", "cholesky | circulant | volterra"),
    }, "empirical fBm covariance vs the exact kernel"),
    "frac-check": (_frac_check, {
        "alpha": Param(_floats, (0.1, 0.3, 0.45), "orders"),
        "n": Param(int, 4096, "grid steps"),
        "tol": Param(float, 1e-3, "relative L2 tolerance"),
    }, "fractional integral/derivative inversion"),
    "kernel-check": (_kernel_check, {
        "h": Param(_floats, (0.1, 0.3), "Hurst values"),
        "t": Param(_floats, (1.0, 2.0, 1.0), "first times"),
        "s": Param(_floats, (1.0, 1.0, 0.5), "second times"),
        "n": Param(int, 4096, "grid steps for the round trip"),
        "tol": Param(float, 1e-2, "relative tolerance"),
    }, "kernel factorization and K_H round trip"),
    "girsanov-check": (_girsanov_check, {
        "h": Param(float, 0.3, "Hurst value for the mean-density check"),
        "T": Param(float, 1.0, "horizon"),
        "n": Param(int, 256, "grid steps"),
        "count": Param(int, 100_000, "paths"),
        "amplitude": Param(float, 0.7, "drift amplitude"),
        "probe_h": Param(float, 0.2, "Hurst value for the exponential-moment probe"),
        "probe_n": Param(int, 128, "probe grid steps"),
        "probe_count": Param(int, 20_000, "probe paths"),
        "d": Param(int, 1, "probe dimension"),
        "eps": Param(_floats, (1.0, 0.5, 0.25, 0.125), "mollifier widths"),
        "k": Param(_floats, (0.0, 0.5, 1.0), "exponent multipliers"),
    }, "Girsanov density and exponential-moment probe"),
    "skew-sim": (_skew_sim, {
        "h": Param(float, 0.2, "Hurst value"),
        "d": Param(int, 1, "dimension"),
        "alpha": Param(float, 1.0, "local-time coefficient"),
        "x0": Param(float, 0.0, "initial point (all coordinates)"),
        "n_moll": Param(_ints, (4, 8, 16, 32, 64), "mollification indices"),
        "T": Param(float, 1.0, "horizon"),
        "n": Param(int, 512, "grid steps"),
        "count": Param(int, 4000, "paths"),
        "method": Param(str, "circulant", "fBm sampler"),
    }, "mollified skew-fBm Euler runs"),
    "flow-reg": (_flow_reg, {
        "h": Param(float, 0.1, "Hurst value"),
        "d": Param(int, 1, "dimension"),
        "alpha": Param(float, 1.0, "local-time coefficient"),
        "n_moll": Param(_ints, (4, 16, 64, 256), "mollification indices"),
        "k": Param(int, 1, "derivative order (1 or 2)"),
        "p": Param(float, 2.0, "moment"),
        "x": Param(_floats, (-0.5, -0.25, 0.0, 0.25, 0.5), "initial points"),
        "T": Param(float, 1.0, "horizon"),
        "n": Param(int, 1024, "grid steps"),
        "count": Param(int, 4000, "paths"),
        "method": Param(str, "circulant", "fBm sampler"),
    }, "moments of flow derivatives across mollification levels"),
    "shuffle-verify": (_shuffle_verify, {
        "mmax": Param(int, 3, "largest block size"),
        "card_max": Param(int, 8, "largest m+n for cardinality checks"),
        "theta": Param(float, 0.0, "lower simplex limit"),
        "t": Param(float, 1.0, "upper simplex limit"),
        "tol": Param(float, 1e-8, "residual tolerance"),
    }, "shuffle and partial-shuffle identities"),
    "bound-scan": (_bound_scan, {
        "d": Param(_ints, (1, 2), "dimensions"),
        "k": Param(_ints, (1, 2), "derivative orders"),
        "q": Param(int, 1, "dyadic exponent"),
        "h": Param(_floats, (), "explicit h grid (overrides start/stop/step)"),
        "h_start": Param(float, 0.02, ""),
        "h_stop": Param(float, 0.40, ""),
        "h_step": Param(float, 0.02, ""),
        "m_max": Param(int, 50, "largest series index"),
    }, "summability scan of the derivative series"),
    "thresholds": (_thresholds, {
        "d": Param(_ints, (1,), "dimensions"),
        "k_max": Param(int, 6, "largest derivative order"),
    }, "Hurst threshold table (exact rationals)"),
}


def run(config: ExperimentConfig) -> ExperimentReport:
    if config.command not in COMMANDS:
        raise ValueError(f"unknown subcommand {config.command!r}")
    fn = COMMANDS[config.command][0]
    start = time.perf_counter()
    report = fn(config)
    report.wall_clock = time.perf_counter() - start
    return report


# ---------------------------------------------------------------------------


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skewflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, params, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--seed", type=int, default=None, help="64-bit seed (default 0)")
        sp.add_argument("--out", default=None, help="output directory (default ./out)")
        sp.add_argument("--workers", type=int, default=None,
                        help=f"worker threads (default ${rng.WORKERS_ENV} or 1)")
        sp.add_argument("--config", default=None, help="key=value file; flags override it")
        for key, prm in params.items():
            flag = "--" + key.replace("_", "-")
            sp.add_argument(flag, dest=key, default=None, help=f"{prm.help} (default {prm.default})")
    return parser


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    params_spec = COMMANDS[ns.command][1]
    values = {k: p.default for k, p in params_spec.items()}
    common = {"seed": 0, "out": "out", "workers": None}
    if ns.config:
        for key, raw in read_config_file(ns.config).items():
            if key in common:
                common[key] = raw
            elif key in params_spec:
                values[key] = raw
            else:
                raise ValueError(f"unknown config key {key!r} for {ns.command}")
    for key in params_spec:
        if getattr(ns, key) is not None:
            values[key] = getattr(ns, key)
    for key in common:
        if getattr(ns, key) is not None:
            common[key] = getattr(ns, key)
    typed = {}
    for key, raw in values.items():
        try:
            typed[key] = params_spec[key].type(raw)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"bad value for {key}: {raw!r} ({exc})") from None
    workers = None if common["workers"] in (None, "") else int(common["workers"])
    return ExperimentConfig(ns.command, typed, int(common["seed"]), str(common["out"]), workers)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = config_from_args(ns)
        report = run(cfg)
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"skewflow {ns.command}: error: {exc}", file=sys.stderr)
        return 2
    csv_path, json_path = report.write(cfg.out)
    status = "PASS" if report.passed else "FAIL"
    gates = ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in report.gates.items()) or "no gates"
    print(f"{cfg.command}: {status} ({gates}); {len(report.rows)} rows -> {csv_path}, {json_path}")
    return 0 if report.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
