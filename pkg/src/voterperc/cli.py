"""Command-line front end.

One executable, one subcommand per capability:

    sample      draw a stationary-field window and write it as JSON
    hscan       meeting-probability scan over pair separations (CSV)
    bounds      run the inequality battery and write the report (CSV)
    renorm      count/validate scale-tree placements, write sparsity audit
    threshold   finite-size crossing thresholds vs interaction range (CSV)
    covariance  two-point covariance vs separation, dual-route columns (CSV)
    crossval    forward torus dynamics vs dual-walk sampling; exit 3 on
                disagreement

Configuration comes from an optional key=value file (--config) overlaid by
command-line flags; flags win.  Every output file embeds the resolved
configuration echo and the master seed.  Wall-clock timings go to stdout
only, never into output files, so reruns with the same seed are
byte-identical.

Exit codes: 0 success, 1 configuration error, 2 runtime error,
3 consistency/inequality check failed.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import coalescence, io, mc, measure, renorm, walks
from . import threshold as threshold_mod

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_CHECK = 3

CROSSVAL_T = 5.0


class ConfigError(Exception):
    """Bad key=value file or invalid parameter combination."""


@dataclass
class RunConfig:
    d: int = 3
    R: str = "1"              # comma list allowed where a range sweep applies
    alpha: float = 0.5
    L: int = 2
    N: int = 1
    M: int = 8
    box: int = 8
    samples: int = 1000
    seed: int = 0
    eps_stop: float = 1e-3
    eps_trunc: float = 1e-3   # config-file key; sets the pair escape radius
    p_star: float = 0.5       # config-file key; crossing criterion level
    workers: int = 1
    out: str = ""
    provided: set = field(default_factory=set, repr=False, compare=False)

    def echo(self):
        parts = []
        for f in dc_fields(self):
            if f.name == "provided":
                continue
            parts.append(f"{f.name}={getattr(self, f.name)}")
        return "config: " + " ".join(parts)

    def R_list(self):
        try:
            vals = [int(tok) for tok in str(self.R).split(",") if tok.strip()]
        except ValueError as exc:
            raise ConfigError(f"cannot parse R={self.R!r}: {exc}") from None
        if not vals:
            raise ConfigError("R must name at least one range")
        return vals

    def R_single(self):
        vals = self.R_list()
        if len(vals) != 1:
            raise ConfigError("this command takes a single R, not a list")
        return vals[0]


_CASTS = {"d": int, "R": str, "alpha": float, "L": int, "N": int, "M": int,
          "box": int, "samples": int, "seed": int, "eps_stop": float,
          "eps_trunc": float, "p_star": float, "workers": int, "out": str}


def load_config_file(path):
    """Parse a key=value file ('#' comments allowed) into raw string values."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, "
                              f"got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CASTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        updates[key] = val
    return updates


def resolve_config(args):
    """Defaults <- config file <- explicit flags, with type checking."""
    cfg = RunConfig()
    provided = set()
    if getattr(args, "config", None):
        for key, raw in load_config_file(args.config).items():
            try:
                setattr(cfg, key, _CASTS[key](raw))
            except ValueError as exc:
                raise ConfigError(f"config key {key}={raw!r}: {exc}") from None
            provided.add(key)
    for key in _CASTS:
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
            provided.add(key)
    cfg.provided = provided
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if not 0.0 <= cfg.alpha <= 1.0:
        raise ConfigError(f"alpha={cfg.alpha} outside [0, 1]")
    if cfg.d < 1:
        raise ConfigError("d must be >= 1")
    for R in cfg.R_list():
        if R < 1:
            raise ConfigError("R must be >= 1")
    if cfg.L < 1:
        raise ConfigError("L must be >= 1")
    if cfg.N < 0:
        raise ConfigError("N must be >= 0")
    if cfg.M < 1:
        raise ConfigError("M must be >= 1")
    if cfg.box < 1:
        raise ConfigError("box must be >= 1")
    if cfg.samples < 1:
        raise ConfigError("samples must be >= 1")
    if cfg.eps_stop <= 0:
        raise ConfigError("eps-stop must be positive")
    if not 0.0 < cfg.eps_trunc < 1.0:
        raise ConfigError("eps-trunc must lie in (0, 1)")
    if not 0.0 < cfg.p_star < 1.0:
        raise ConfigError("p-star must lie strictly between 0 and 1")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")


def _require_transient(cfg):
    if cfg.d < 3:
        raise ConfigError(
            "stationary sampling needs d >= 3 (pair walks must be transient "
            "for the early-stopping error bound to converge)")


def _stopping(cfg, base=None):
    base = base or coalescence.DEFAULT_STOPPING
    if "eps_stop" in cfg.provided:
        return coalescence.StoppingPolicy(
            eps_stop=cfg.eps_stop, t_max=base.t_max,
            max_events=base.max_events, check_every=base.check_every,
            pair_cutoff=base.pair_cutoff, sub_pairs=base.sub_pairs)
    return base


def _out(cfg, default):
    return cfg.out or default


def _announce_workers(cfg):
    if cfg.workers > 1:
        print(f"note: workers={cfg.workers} accepted, but the compiled "
              "kernels run serially on this build")


# ---------------------------------------------------------------------------
# subcommands


def cmd_sample(cfg):
    _require_transient(cfg)
    R = cfg.R_single()
    policy = _stopping(cfg)
    fld = measure.sample_mu(cfg.d, R, cfg.alpha, ((0,) * cfg.d, cfg.box),
                            seed=cfg.seed, policy=policy)
    payload = fld.to_payload()
    payload["config_echo"] = cfg.echo()
    payload["seed"] = cfg.seed
    out = _out(cfg, "sample.json")
    io.write_json(out, payload)
    prov = fld.provenance
    print(f"sampled {len(fld.values)} sites: density {fld.density():.4f}, "
          f"stop={prov['stop_reason']}, residual qsum "
          f"{prov['achieved_qsum']:.2e}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_hscan(cfg):
    _require_transient(cfg)
    R = cfg.R_single()
    radii = [1, 2, 4, 8, 16]
    trunc = walks.TruncationPolicy.for_residual(cfg.eps_trunc, cfg.d)
    header, rows = walks.calibrate_remeet(cfg.d, R, radii, n=cfg.samples,
                                          seed=cfg.seed, policy=trunc)
    out = _out(cfg, "remeet_scan.csv")
    io.write_csv(out, header, rows, comments=[cfg.echo()])
    for row in rows:
        print(f"r={row[2]:>3}  remeet={float(row[3]):.5f} "
              f"+- {float(row[4]):.5f}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_bounds(cfg):
    _require_transient(cfg)
    _announce_workers(cfg)
    sets = bounds_mod.default_battery(cfg.d)
    policy = _stopping(cfg, base=bounds_mod.BOUNDS_STOPPING)
    reports = bounds_mod.run_battery(sets, n=cfg.samples, seed=cfg.seed,
                                     policy=policy)
    out = _out(cfg, "bounds.csv")
    bounds_mod.battery_csv(out, reports, comments=[cfg.echo()])
    tally = {"pass": 0, "fail": 0, "inconclusive": 0}
    for rep in reports:
        tally[rep.verdict] += 1
        print(f"{rep.kind:<22} {rep.verdict:<12} margin {rep.margin:+.3e}")
    print(f"verdicts: {tally['pass']} pass, {tally['inconclusive']} "
          f"inconclusive, {tally['fail']} fail")
    print(f"wrote {out}")
    return EXIT_CHECK if tally["fail"] else EXIT_OK


def cmd_renorm(cfg):
    count = renorm.embedding_count(cfg.N, cfg.d)
    print(f"proper placements at N={cfg.N}, d={cfg.d}, L={cfg.L}: {count}")
    if count <= 10_000:
        n_valid = 0
        for emb in renorm.enumerate_embeddings(cfg.N, cfg.d, cfg.L):
            if validate_ok(emb):
                n_valid += 1
        print(f"enumerated and validated: {n_valid}/{count}")
        if n_valid != count:
            print("validation failures during enumeration", file=sys.stderr)
            return EXIT_CHECK
    emb = renorm.sample_random_embedding(cfg.N, cfg.d, cfg.L, seed=cfg.seed)
    header, rows = renorm.sparsity_audit(emb, embedding_id=cfg.seed)
    out = _out(cfg, "sparsity_audit.csv")
    io.write_csv(out, header, rows, comments=[cfg.echo()])
    n_bad = sum(1 for row in rows if not row[-1])
    print(f"sparsity audit: {len(rows)} rows, {n_bad} over bound")
    emb_path = Path(out).with_name(Path(out).stem + "_embedding.json")
    payload = emb.to_payload()
    payload["config_echo"] = cfg.echo()
    payload["seed"] = cfg.seed
    io.write_json(emb_path, payload)
    print(f"wrote {out} and {emb_path}")
    return EXIT_OK


def validate_ok(emb):
    return renorm.validate_embedding(emb)


def cmd_threshold(cfg):
    _require_transient(cfg)
    _announce_workers(cfg)
    R_list = cfg.R_list()
    policy = _stopping(cfg, base=threshold_mod.THRESHOLD_STOPPING)
    header, rows, _ = threshold_mod.theorem_trend_report(
        R_list, d=cfg.d, box=cfg.box, p_star=cfg.p_star, n=cfg.samples,
        seed=cfg.seed, policy=policy)
    out = _out(cfg, "trend.csv")
    threshold_mod.trend_csv(out, header, rows, config_echo=cfg.echo())
    for row in rows:
        print(f"R={row[1]:>3}  alpha_c={row[4]:.4f} "
              f"[{row[5]:.4f}, {row[6]:.4f}]  gap to Bernoulli {row[10]:.4f}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_covariance(cfg):
    _require_transient(cfg)
    R = cfg.R_single()
    policy = _stopping(cfg)
    header = ["d", "R", "alpha", "r", "cov_hat", "stderr", "ci_lo", "ci_hi",
              "merge_prob", "walk_meet_hat", "walk_meet_stderr", "n"]
    rows = []
    origin = (0,) * cfg.d
    for r in (1, 2, 4):
        z = (r,) + (0,) * (cfg.d - 1)
        cov = measure.estimate_covariance(cfg.d, R, cfg.alpha, origin, z,
                                          n=cfg.samples, seed=cfg.seed,
                                          policy=policy)
        meet = walks.estimate_meet_probability(
            cfg.d, R, origin, z, n=cfg.samples, seed=cfg.seed,
            policy=walks.TruncationPolicy.for_residual(cfg.eps_trunc, cfg.d))
        rows.append([cfg.d, R, cfg.alpha, r, cov.value, cov.stderr,
                     cov.ci_lo, cov.ci_hi, cov.meta["merge_prob"],
                     meet.est.value, meet.est.stderr, cfg.samples])
        print(f"r={r}  cov={cov.value:.5f} +- {cov.stderr:.5f}  "
              f"merge={cov.meta['merge_prob']:.4f} "
              f"walk-meet={meet.est.value:.4f}")
    out = _out(cfg, "covariance.csv")
    io.write_csv(out, header, rows, comments=[cfg.echo()])
    print(f"wrote {out}")
    return EXIT_OK


def cmd_crossval(cfg):
    """Forward torus dynamics vs dual-walk sampling at a finite horizon.

    Both routes target the same two quantities at time t: the one-site
    density (exactly alpha for either route) and the adjacent-pair joint
    occupation.  Disagreement beyond 4 combined standard errors exits 3.
    """
    _require_transient(cfg)
    R = cfg.R_single()
    d, alpha, t = cfg.d, cfg.alpha, CROSSVAL_T
    origin = (0,) * d
    e1 = (1,) + (0,) * (d - 1)

    def dual_sampler(s):
        return measure.sample_mu_finite_time(d, R, alpha, [origin, e1], t,
                                             seed=s)

    pair_event = measure.CylinderEvent({origin: 1, e1: 1})
    one_event = measure.CylinderEvent({origin: 1})
    dual_pair = measure.estimate_event_prob(dual_sampler, pair_event,
                                            n=cfg.samples, seed=cfg.seed)
    dual_one = measure.estimate_event_prob(dual_sampler, one_event,
                                           n=cfg.samples, seed=cfg.seed)

    side = max(16, 2 * (R + int(np.ceil(t * R))) + 2)
    n_torus = max(50, cfg.samples // 10)
    one_vals = np.empty(n_torus)
    pair_vals = np.empty(n_torus)
    for k, s in enumerate(mc.replicate_seeds(cfg.seed, n_torus, stream=60)):
        fld = measure.sample_voter_torus(d, R, alpha, side, t, seed=int(s))
        grid = fld.grid().astype(np.float64)
        one_vals[k] = grid.mean()
        pair_vals[k] = (grid * np.roll(grid, -1, axis=0)).mean()
    torus_one = mc.mean_estimate(one_vals)
    torus_pair = mc.mean_estimate(pair_vals)

    checks = [("one-site density", dual_one, torus_one),
              ("adjacent pair joint", dual_pair, torus_pair)]
    worst = 0.0
    for name, a, b in checks:
        sig = a.combined_sigma_distance(b)
        worst = max(worst, sig)
        print(f"{name:<20} dual {a.value:.5f} +- {a.stderr:.5f}   "
              f"torus {b.value:.5f} +- {b.stderr:.5f}   {sig:.2f} sigma")
    ok = worst <= 4.0
    out = _out(cfg, "crossval.json")
    io.write_json(out, {
        "config_echo": cfg.echo(), "seed": cfg.seed, "t": t, "side": side,
        "agreement": "ok" if ok else "mismatch",
        "worst_sigma_distance": worst,
        "checks": [{"name": name,
                    "dual": {"value": a.value, "stderr": a.stderr, "n": a.n},
                    "torus": {"value": b.value, "stderr": b.stderr, "n": b.n}}
                   for name, a, b in checks]})
    print(f"wrote {out}")
    if not ok:
        print(f"routes disagree by {worst:.2f} sigma (limit 4.0)",
              file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


COMMANDS = {
    "sample": (cmd_sample, "draw one stationary-field window, write JSON"),
    "hscan": (cmd_hscan, "meeting-probability scan over separations"),
    "bounds": (cmd_bounds, "run the inequality battery"),
    "renorm": (cmd_renorm, "count placements and audit sparsity"),
    "threshold": (cmd_threshold, "finite-size thresholds vs range"),
    "covariance": (cmd_covariance, "two-point covariance vs separation"),
    "crossval": (cmd_crossval, "torus dynamics vs dual sampling"),
}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; route those through the config exit code
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="voterperc",
                     description="spread-out voter model toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="key=value file; flags override it")
        sp.add_argument("--d", type=int, help="lattice dimension")
        sp.add_argument("--R", type=str,
                        help="interaction range (comma list for sweeps)")
        sp.add_argument("--alpha", type=float, help="site density in [0, 1]")
        sp.add_argument("--L", type=int, help="base box radius")
        sp.add_argument("--N", type=int, help="tree depth")
        sp.add_argument("--M", type=int, help="cluster-extent threshold")
        sp.add_argument("--box", type=int, help="window radius")
        sp.add_argument("--samples", type=int, help="replicates per estimate")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--eps-stop", dest="eps_stop", type=float,
                        help="residual pair-meeting budget at early stop")
        sp.add_argument("--eps-trunc", dest="eps_trunc", type=float,
                        help="neglected re-meeting mass for pair-walk escape")
        sp.add_argument("--p-star", dest="p_star", type=float,
                        help="crossing-probability level defining the "
                             "density threshold")
        sp.add_argument("--workers", type=int, help="worker processes")
        sp.add_argument("--out", type=str, help="output file path")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command][0](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wall time: {time.perf_counter() - t0:.2f} s")
    return code


if __name__ == "__main__":
    sys.exit(main())
