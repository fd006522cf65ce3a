"""Command-line front end: ``mssmpc design|solve|simulate|compare|bounds``.

Exit codes: 0 success, 1 configuration error, 2 infeasible design,
3 controller infeasibility at run time.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import report
from .baseline import IsOptions, solve_is
from .config import ConfigError, benchmark_config, load_config, load_design, save_design
from .controller import STRATEGIES, ControllerError, solve_ocp
from .offline import DesignArtifacts, DesignInfeasible
from .sim import ControllerSpec, bound_table, monte_carlo

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DESIGN = 2
EXIT_RUNTIME = 3

log = logging.getLogger("mssmpc")


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not "design infeasible"
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _parse_x0(text: str | None):
    if text is None:
        return None
    try:
        return np.array([float(v) for v in text.replace(" ", "").split(",")], dtype=float)
    except ValueError:
        raise ConfigError(f"--x0 expects comma-separated numbers, got {text!r}") from None


def _config(args):
    return load_config(args.config) if args.config else benchmark_config()


def _design(args, cfg) -> DesignArtifacts:
    if getattr(args, "design", None):
        art = load_design(args.design)
    else:
        art = cfg.build_design()
    if not art.report.passed:
        raise DesignInfeasible("design infeasible:\n" + art.report.format())
    return art


def _x0(args, cfg, n: int) -> np.ndarray:
    x0 = _parse_x0(args.x0)
    if x0 is None:
        if not cfg.sim.x0:
            raise ConfigError("no initial state: pass --x0 or set sim.x0 in the config")
        x0 = np.array(cfg.sim.x0[0], dtype=float)
    if x0.shape != (n,):
        raise ConfigError(f"--x0 needs {n} components, got {x0.size}")
    return x0


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _campaign(args, cfg, art, x0, spec: ControllerSpec):
    episodes = args.episodes or cfg.sim.episodes
    seed = cfg.sim.seed if args.seed is None else args.seed
    horizon = args.horizon or cfg.sim.horizon
    workers = args.workers or cfg.sim.workers
    log.info("%s: %d episodes x %d steps from x0=%s", spec.label, episodes, horizon, x0.tolist())
    return monte_carlo(art, spec, x0, horizon, episodes, seed, workers=workers)


def _strategy(args, cfg) -> str:
    return args.strategy or cfg.strategy


def cmd_design(args) -> int:
    cfg = _config(args)
    art = cfg.build_design()
    path = save_design(art, _out(args) / "design.json")
    print(art.report.format())
    print(f"lambda {art.lam!r}  rho {art.rho!r}  r_x {art.r_x!r}  r_u {art.r_u!r}")
    if art.sys.noise_free:
        print("certificate: not applicable (noise-free plant)")
    elif art.certificate is None:
        print("certificate: none found on the mu grid")
    else:
        print(f"certificate: mu {art.certificate.mu!r}  beta {art.certificate.beta!r}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _config(args)
    art = _design(args, cfg)
    x0 = _x0(args, cfg, art.n)
    if args.controller == "is":
        sol = solve_is(art, x0, IsOptions())
        if sol is None:
            raise ControllerError(f"IS-SMPC initially infeasible at x0={x0.tolist()}")
    else:
        sol = solve_ocp(art, x0, _strategy(args, cfg))
    print(f"status {sol.status.value}")
    print(f"u0 {' '.join(repr(float(v)) for v in sol.u0)}")
    print(f"gamma_x {sol.gamma_x!r}")
    print(f"gamma_u {sol.gamma_u!r}")
    print(f"J_p {sol.J_p!r}")
    if sol.conic is not None:
        print(f"newton_steps {sol.conic.newton_steps}")
    return EXIT_OK


def _spec(args, cfg, kind=None) -> ControllerSpec:
    kind = kind or args.controller
    return ControllerSpec(kind=kind, strategy=_strategy(args, cfg))


def _first_failure(summary):
    if summary.failures:
        log.warning("%d of %d episodes failed; first: %s", summary.failures, summary.episodes,
                    summary.failure_messages[0])


def cmd_simulate(args) -> int:
    cfg = _config(args)
    art = _design(args, cfg)
    x0 = _x0(args, cfg, art.n)
    out = _out(args)
    s = _campaign(args, cfg, art, x0, _spec(args, cfg))
    _first_failure(s)
    report.write_trajectories(out / "trajectories.csv", s, art.n, art.m)
    report.write_summary(out / "summary.csv", [s])
    rows = bound_table(s.traces, s.traces[0].sol0, art) if s.traces else []
    report.write_bounds(out / "bounds.csv", rows)
    report.write_histogram(out / "histogram.csv", s)
    report.write_frequencies(out / "frequencies.csv", s)
    report.write_svg(out / "report.svg", s, art)
    print(f"{s.controller} x0={x0.tolist()}: J_mean {s.J_mean!r}  J_std {s.J_std!r}  "
          f"failures {s.failures}/{s.episodes}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args)
    art = _design(args, cfg)
    x0 = _x0(args, cfg, art.n)
    out = _out(args)
    is_ = _campaign(args, cfg, art, x0, _spec(args, cfg, "is"))
    ms = _campaign(args, cfg, art, x0, _spec(args, cfg, "ms"))
    _first_failure(ms)
    _first_failure(is_)
    _, ratio = report.write_compare(out / "compare.csv", ms, is_)
    report.write_summary(out / "summary.csv", [ms, is_])
    print(f"x0={x0.tolist()}: mean ratio J_ms/J_is {ratio!r}  "
          f"(J_ms {ms.J_mean!r}, J_is {is_.J_mean!r})")
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = _config(args)
    art = _design(args, cfg)
    x0 = _x0(args, cfg, art.n)
    s = _campaign(args, cfg, art, x0, _spec(args, cfg, "ms"))
    rows = bound_table(s.traces, s.traces[0].sol0, art) if s.traces else []
    report.write_bounds(_out(args) / "bounds.csv", rows)
    print(",".join(report.BOUNDS_COLUMNS))
    for r in rows:
        print(",".join([str(r.ell)] + [f"{v:.4f}" if not math.isnan(v) else "nan"
                                       for v in (r.p_x, r.p_u, r.f_x, r.f_u)]))
    return EXIT_OK


COMMANDS = {
    "design": cmd_design,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "bounds": cmd_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mssmpc", description="Measured-state stochastic MPC.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--config", metavar="PATH",
                       help="run configuration (default: bundled benchmark)")
        c.add_argument("--out", metavar="DIR", default=".", help="output directory")
        if name == "design":
            continue
        c.add_argument("--design", metavar="PATH", help="design file from 'mssmpc design'")
        c.add_argument("--x0", metavar='"a,b"', help="initial state (default: first sim.x0)")
        c.add_argument("--strategy", choices=STRATEGIES)
        if name in ("solve", "simulate"):
            c.add_argument("--controller", choices=("ms", "is"), default="ms")
        if name != "solve":
            c.add_argument("--episodes", type=_positive)
            c.add_argument("--seed", type=int)
            c.add_argument("--horizon", type=_positive)
            c.add_argument("--workers", type=_positive)
    return p


def _join_x0(argv):
    # "--x0 -40,40" would otherwise be read as an unknown option
    out = list(argv)
    for i in range(len(out) - 1):
        if out[i] == "--x0":
            out[i:i + 2] = [f"--x0={out[i + 1]}"]
            break
    return out


def main(argv=None) -> int:
    argv = _join_x0(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DesignInfeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DESIGN
    except ControllerError as exc:
        print(f"controller infeasible: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
