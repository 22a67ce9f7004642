"""Command-line front end: ``gwgames <command> [flags]``.

Every command prints a machine-readable block of ``key = value`` lines, then a
blank line and a human-readable table. Vectors are listed per colour, colour 1
first. Exit status: 0 success, 2 bad spec or flags, 3 internal-consistency
failure (including a checked inequality that does not hold).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import casestudies as cs
from . import simulate as sim
from . import theorems as th
from .fixedpoint import (DEFAULT_MAX_ITER, DEFAULT_TOL, ConsistencyError, FirstMover, GameKind,
                         solve_outcomes, truncated_values)
from .model import SpecError, dump_spec, load_spec

EXIT_OK, EXIT_USAGE, EXIT_CONSISTENCY = 0, 2, 3
SEED_MAX = 2**64 - 1

QUANTITIES = ("nw1", "nl1", "nd1", "nw2", "nl2", "nd2",
              "mw1", "ml1", "md1", "mw2", "ml2", "md2",
              "esw", "esl", "eew", "eel")


class UsageError(Exception):
    pass


class Report:
    def __init__(self):
        self.machine: list[tuple[str, str]] = []
        self.table: list[str] = []

    def put(self, key: str, value) -> None:
        self.machine.append((key, fmt(value)))

    def row(self, *cells, widths=None) -> None:
        widths = widths or [12] * len(cells)
        self.table.append("  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip())

    def text(self) -> str:
        lines = [f"{k} = {v}" for k, v in self.machine]
        return "\n".join(lines) + "\n\n" + "\n".join(self.table) + "\n"


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.15g}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(fmt(v) for v in value)
    return str(value)


def short(x: float) -> str:
    return f"{float(x):.6g}"


def _zero(x: float) -> float:
    """Draw probabilities below the cross-check tolerance read as 0 in tables."""
    return 0.0 if abs(x) <= cs.DRAW_ZERO_TOL else x


# -- argument types ----------------------------------------------------------

def _probability(text: str) -> float:
    x = float(text)
    if not 0.0 <= x <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return x


def _positive_float(text: str) -> float:
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"{text} is not positive")
    return x


def _nonneg_int(text: str) -> int:
    x = int(float(text)) if "e" in text.lower() else int(text)
    if x < 0:
        raise argparse.ArgumentTypeError(f"{text} is negative")
    return x


def _positive_int(text: str) -> int:
    x = _nonneg_int(text)
    if x == 0:
        raise argparse.ArgumentTypeError("must be at least 1")
    return x


def _seed(text: str) -> int:
    x = int(text)
    if not 0 <= x <= SEED_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return x


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gwgames", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def with_spec(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--spec", required=True, help="model spec JSON file")
        s.add_argument("--dump-spec", action="store_true", help="print the parsed spec as JSON and stop")
        return s

    def with_tol(s):
        s.add_argument("--tol", type=_positive_float, default=DEFAULT_TOL)
        s.add_argument("--max-iter", type=_positive_int, default=DEFAULT_MAX_ITER)

    s = with_spec("solve", "fixed-point win/lose/draw probabilities of all games")
    with_tol(s)
    s = with_spec("truncate", "probabilities of a decision in fewer than n rounds")
    s.add_argument("--depth", type=_nonneg_int, required=True)
    s = with_spec("sample", "sample one truncated tree and solve every game on it")
    s.add_argument("--depth", type=_nonneg_int, required=True)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--root-color", type=_positive_int, default=None)
    s.add_argument("--max-population", type=_positive_float, default=sim.DEFAULT_MAX_POPULATION)
    s = with_spec("montecarlo", "Monte Carlo estimate against the truncated value")
    s.add_argument("--depth", type=_nonneg_int, default=30)
    s.add_argument("--samples", type=_positive_int, default=10**5)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--game", choices=[k.value for k in GameKind], default="normal")
    s.add_argument("--mover", type=int, choices=[1, 2], default=1)
    s.add_argument("--root-color", type=_positive_int, default=1)
    s.add_argument("--max-population", type=_positive_float, default=sim.DEFAULT_MAX_POPULATION)

    s = sub.add_parser("binary", help="bi-type binary tree verdict")
    for name in ("p0", "pbb", "prr", "pbr", "q0", "qbb", "qrr", "qbr"):
        s.add_argument(f"--{name}", type=_probability, default=0.0)
    s.add_argument("--dump-spec", action="store_true")
    with_tol(s)

    s = sub.add_parser("poisson", help="bi-type Poisson tree conditions and fixed points")
    s.add_argument("--lambda", dest="lam", type=_positive_float, required=True)
    s.add_argument("--pb", type=_probability, required=True)
    s.add_argument("--qb", type=_probability, required=True)
    s.add_argument("--grid", type=_positive_int, default=10**4)
    s.add_argument("--dump-spec", action="store_true")
    with_tol(s)

    s = with_spec("check", "comparison inequalities between the games")
    with_tol(s)
    s = with_spec("survive", "spectral criterion for the Escaper to win")
    s.add_argument("--max-candidates", type=_positive_int, default=10**6)
    with_tol(s)
    s = with_spec("probe", "continuity of outcomes under small law perturbations")
    s.add_argument("--eps", type=float, nargs="+", default=list(th.DEFAULT_EPS))
    s.add_argument("--trials", type=_positive_int, default=10)
    s.add_argument("--seed", type=_seed, default=0)
    with_tol(s)
    return p


# -- commands ----------------------------------------------------------------

def _outcome_report(rep: Report, out) -> None:
    for q in QUANTITIES:
        rep.put(q, getattr(out, q))
    rep.put("converged", out.converged)
    rep.put("iterations", max(g.iterations for g in out))
    rep.row("quantity", *[f"colour {j + 1}" for j in range(out.spec.m)])
    for q in QUANTITIES:
        rep.row(q, *[short(v) for v in getattr(out, q)])


def cmd_solve(args, spec) -> int:
    out = solve_outcomes(spec, tol=args.tol, max_iter=args.max_iter)
    rep = Report()
    rep.put("m", spec.m)
    _outcome_report(rep, out)
    print(rep.text(), end="")
    return EXIT_OK if out.converged else EXIT_CONSISTENCY


def cmd_truncate(args, spec) -> int:
    tv = truncated_values(spec, args.depth)
    rep = Report()
    rep.put("depth", args.depth)
    names = ("nw1", "nl1", "nw2", "nl2", "mw1", "ml1", "mw2", "ml2", "esw", "eel")
    for q in names:
        rep.put(q, getattr(tv, q))
    rep.row("quantity", *[f"colour {j + 1}" for j in range(spec.m)])
    for q in names:
        rep.row(q, *[short(v) for v in getattr(tv, q)])
    print(rep.text(), end="")
    return EXIT_OK


def _root_color(args, spec) -> int | None:
    if args.root_color is None:
        return None
    if args.root_color > spec.m:
        raise UsageError(f"--root-color must be between 1 and {spec.m}")
    return args.root_color - 1


def cmd_sample(args, spec) -> int:
    tree = sim.sample_tree(spec, args.depth, args.seed, _root_color(args, spec), args.max_population)
    rep = Report()
    rep.put("vertices", tree.size)
    rep.put("depth", tree.truncation_depth)
    rep.put("root_color", int(tree.color[0]) + 1)
    rep.put("level_sizes", np.bincount(tree.depth, minlength=tree.truncation_depth + 1))
    for kind in GameKind:
        for mover in FirstMover:
            label = sim.solve_game_on_tree(tree, kind, mover, spec)
            rep.put(f"root_label.{kind.value}.{mover.value}", label.name)
    rep.row("index parent depth color", widths=[0])
    rep.table.extend(sim.dump_tree(tree).splitlines())
    print(rep.text(), end="")
    return EXIT_OK


def cmd_montecarlo(args, spec) -> int:
    root = _root_color(args, spec)
    kind, mover = GameKind(args.game), FirstMover(args.mover)
    est = sim.monte_carlo(spec, kind, mover, root, args.depth, args.samples, args.seed,
                          args.max_population)
    win_t, lose_t = truncated_values(spec, args.depth).win_lose(kind, mover)
    exact = {"win": float(win_t[root]), "lose": float(lose_t[root])}
    exact["draw"] = 1.0 - exact["win"] - exact["lose"]
    rep = Report()
    for key in ("game", "mover", "root_color", "depth", "samples", "seed"):
        rep.put(key, getattr(args, key))
    rep.row("outcome", "estimate", "stderr", "truncated", "z")
    for name in ("win", "lose", "draw"):
        value, se = getattr(est, name), getattr(est, f"{name}_stderr")
        z = (value - exact[name]) / se if se > 0 else 0.0
        rep.put(name, value)
        rep.put(f"{name}_stderr", se)
        rep.put(f"{name}_truncated", exact[name])
        rep.row(name, short(value), short(se), short(exact[name]), f"{z:+.2f}")
    if kind is GameKind.ESCAPE:
        rep.put("bracket", est.bracket)
    print(rep.text(), end="")
    return EXIT_OK


def cmd_binary(args) -> int:
    params = cs.BinaryParams(args.p0, args.pbb, args.prr, args.pbr,
                             args.q0, args.qbb, args.qrr, args.qbr)
    if args.dump_spec:
        print(dump_spec(cs.binary_to_spec(params)))
        return EXIT_OK
    v = cs.binary_verdict(params, tol=args.tol)
    rep = Report()
    rep.put("verdict", v.value)
    rep.put("max_deviation", v.max_deviation)
    for name, colour, _, observed in v.rows():
        rep.put(f"{name}_{colour}", observed)
    rep.table.append(f"draw={v.value} for all games/colors")
    rep.row("quantity", "colour", "verdict", "solved")
    for name, colour, value, observed in v.rows():
        rep.row(name, colour, value, short(observed))
    print(rep.text(), end="")
    return EXIT_OK


def cmd_poisson(args) -> int:
    params = cs.PoissonParams(args.lam, args.pb, args.qb)
    if args.dump_spec:
        print(dump_spec(cs.poisson_to_spec(params)))
        return EXIT_OK
    r = cs.poisson_report(params, grid=args.grid, tol=args.tol, on_violation="record")
    rep = Report()
    for key, value in r.rows():
        rep.put(key, value)
    for ch, flags in r.conditions.by_channel.items():
        for name, value in flags.items():
            rep.put(f"channel.{ch}.{name}", value)
        rep.put(f"channel.{ch}.derived_by_symmetry", r.conditions.derived[ch])
    rep.put("violations", len(r.conditions.violations))
    flags = r.conditions.flags()
    rep.table.append("; ".join(f"{k}: {fmt(v)}" for k, v in flags.items())
                     + f"; nd_1b = {short(_zero(r.nd_1b_scalar))}")
    rep.row("channel", "unique", "normal", "misere", "escape", "derived")
    for ch, c in r.conditions.by_channel.items():
        esc = fmt(c["escape"]) if ch.startswith("1") else "-"
        rep.row(ch, fmt(c["unique"]), fmt(c["normal"]), fmt(c["misere"]), esc,
                fmt(r.conditions.derived[ch]))
    for msg in r.conditions.violations:
        rep.table.append(f"violation: {msg}")
    print(rep.text(), end="")
    return EXIT_CONSISTENCY if r.conditions.violations else EXIT_OK


def cmd_check(args, spec) -> int:
    out = solve_outcomes(spec, tol=args.tol, max_iter=args.max_iter)
    rep = Report()
    rep.row("part", "inequality", "colour", "lhs", "rhs", "margin", "verdict",
            widths=[6, 16, 7, 12, 12, 12, 16])
    ok = True
    for report in (th.check_part1(spec, out), th.check_part2(spec, out), th.check_part3(spec, out)):
        ok &= report.passed
        rep.put(f"{report.part}.passed", report.passed)
        rep.put(f"{report.part}.min_margin", report.min_margin)
        for e in report.entries:
            tag = e.verdict + (" (derived)" if e.derived else "")
            rep.row(report.part, e.name, e.color + 1, short(e.lhs), short(e.rhs), short(e.margin),
                    tag, widths=[6, 16, 7, 12, 12, 12, 16])
        for note in report.notes:
            rep.table.append(f"{report.part}: {note}")
    print(rep.text(), end="")
    return EXIT_OK if ok else EXIT_CONSISTENCY


def cmd_survive(args, spec) -> int:
    sc = th.survival_criterion(spec, args.max_candidates)
    out = solve_outcomes(spec, tol=args.tol, max_iter=args.max_iter)
    eq = th.eew_esl_equivalence(spec, out)
    rep = Report()
    rep.put("f", [c + 1 for c in sc.f])
    rep.put("rho", sc.rho)
    rep.put("status", sc.status)
    rep.put("irreducible", sc.irreducible)
    rep.put("guaranteed", [int(g) for g in sc.guaranteed])
    rep.put("candidates", sc.candidates)
    rep.put("eew", out.eew)
    rep.put("esl", out.esl)
    rep.put("equivalence", eq.verdict)
    rep.table.append(f"criterion: {sc.status} (rho = {short(sc.rho)})")
    rep.table.append("M'' =")
    for row in sc.M2:
        rep.table.append("  " + "  ".join(short(v).rjust(10) for v in row))
    rep.row("colour", "eew", "esl", "guaranteed")
    for j in range(spec.m):
        rep.row(j + 1, short(out.eew[j]), short(out.esl[j]), fmt(sc.guaranteed[j]))
    rep.table.append(f"eew > 0 for all colours iff esl > 0 for all colours: {eq.verdict}")
    bad = eq.verdict == th.FAIL or any(
        g and out.eew[j] <= eq.threshold for j, g in enumerate(sc.guaranteed))
    print(rep.text(), end="")
    return EXIT_CONSISTENCY if bad else EXIT_OK


def cmd_probe(args, spec) -> int:
    if any(e < 0 for e in args.eps):
        raise UsageError("--eps values must be non-negative")
    r = th.continuity_probe(spec, args.eps, args.trials, args.seed, tol=args.tol)
    rep = Report()
    for k, v in r.membership.as_dict().items():
        rep.put(f"member.{k}", v)
    rep.put("nd", r.normal_draw)
    rep.put("md", r.misere_draw)
    for e in r.eps:
        rep.put(f"modulus.{e:g}", r.modulus(e))
    for game, ok in r.continuity_checked.items():
        rep.put(f"continuity.{game}", ok)
    rep.row("eps", *th.QUANTITIES, widths=[8] + [10] * len(th.QUANTITIES))
    for e in r.eps:
        rep.row(f"{e:g}", *[f"{r.deltas[e][q]:.3g}" for q in th.QUANTITIES],
                widths=[8] + [10] * len(th.QUANTITIES))
    print(rep.text(), end="")
    return EXIT_OK if r.passed else EXIT_CONSISTENCY


SPEC_COMMANDS = {
    "solve": cmd_solve, "truncate": cmd_truncate, "sample": cmd_sample,
    "montecarlo": cmd_montecarlo, "check": cmd_check, "survive": cmd_survive, "probe": cmd_probe,
}


def _check_threads() -> None:
    raw = os.environ.get("GWGAMES_THREADS")
    if raw is None:
        return
    try:
        ok = int(raw) >= 1
    except ValueError:
        ok = False
    if not ok:
        raise UsageError("GWGAMES_THREADS must be a positive integer")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _check_threads()
        if args.command == "binary":
            return cmd_binary(args)
        if args.command == "poisson":
            return cmd_poisson(args)
        spec = load_spec(args.spec)
        if args.dump_spec:
            print(dump_spec(spec))
            return EXIT_OK
        return SPEC_COMMANDS[args.command](args, spec)
    except (SpecError, UsageError, sim.PopulationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConsistencyError as exc:
        print(f"consistency failure: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
