"""Command-line entry point: ``maskcfg <subcommand>``.

Exit codes: 0 success, 2 configuration error, 3 validation failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import output
from .analysis import (
    decay_exponent_fit,
    limit_distribution_2d,
    region_decomposition_2d,
    tv,
    tv_curve_1d_closed,
    tv_curve_2d,
)
from .closed_form import (
    TimeRatio,
    coefficients_2d,
    density_from_coefficients,
    perturbed,
    sampled_distribution_2d,
    solve_1d_guided,
)
from .errors import DegenerateLimit, MaskCFGError
from .oracle import absorb, evolve_exact
from .rates import guided_reverse
from .samplers import (
    chi_square_test,
    empirical_distribution,
    sample_exact_event,
    sample_tau_leaping,
    sample_uniformization,
    write_samples_csv,
)
from .scenarios import BUILTIN, ConfigError, Scenario, load_scenario
from .state import DenseDistribution, GuidanceConfig

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION = 0, 2, 3
DRIFT_TOL = 1e-6

log = logging.getLogger("maskcfg")


class ValidationFailure(RuntimeError):
    pass


# -- shared helpers -------------------------------------------------------------------


def _all_mask(space) -> DenseDistribution:
    return DenseDistribution.point_mass(space, (space.alphabet,) * space.dims)


def _closed_form(sc: Scenario, w: float, times, fault: str | None) -> list[DenseDistribution]:
    m, g = sc.mixture, GuidanceConfig(sc.class_index, w)
    if m.space.dims == 1:
        return [solve_1d_guided(m, g, sc.T, t) for t in times]
    coef = coefficients_2d(m, g)
    grids = []
    for t in times:
        if fault == "coefficient":
            # renormalized so the corruption surfaces as oracle drift, not a type error
            grid = density_from_coefficients(perturbed(coef, 1e-3), TimeRatio(sc.T, t).s)
            grid = grid / grid.sum()
        else:
            grid = density_from_coefficients(coef, TimeRatio(sc.T, t).s)
        grids.append(DenseDistribution.from_grid(m.space, grid))
    return grids


def _oracle(sc: Scenario, w: float, times) -> list[DenseDistribution]:
    g = GuidanceConfig(sc.class_index, w)
    return evolve_exact(guided_reverse(sc.mixture, g), sc.T, times, _all_mask(sc.mixture.space)).densities


def _terminal_plot(dens: DenseDistribution, title: str) -> str:
    space = dens.space
    if space.dims == 2:
        return output.heatmap(dens.grid(), title)
    keep = space.unmasked_states
    labels = [",".join(map(str, c)) for c in space.coords[keep]]
    return output.bar_chart(dens.probs[keep], labels, title)


def _slug(w: float) -> str:
    return format(w, "g").replace("-", "m").replace(".", "p")


# -- subcommands ----------------------------------------------------------------------


def cmd_evolve(sc: Scenario, args) -> int:
    dims = sc.mixture.space.dims
    use_oracle = args.oracle or dims > 2
    if dims > 2 and not args.oracle:
        raise ConfigError(f"closed forms cover D <= 2; rerun with --oracle for D = {dims}")
    out = Path(args.out)
    rows = []
    worst = 0.0
    for w in sc.ws:
        dens = _oracle(sc, w, sc.times) if use_oracle else _closed_form(sc, w, sc.times, args.inject_fault)
        if args.validate:
            ref = _oracle(sc, w, sc.times) if not use_oracle else dens
            cf = dens if not use_oracle else (_closed_form(sc, w, sc.times, args.inject_fault) if dims <= 2 else dens)
            drift = max(np.abs(a.probs - b.probs).max() for a, b in zip(cf, ref))
            worst = max(worst, drift)
            for d in dens:
                if abs(d.probs.sum() - 1) > 1e-10 or d.probs.min() < 0:
                    raise ValidationFailure("oracle density failed conservation")
        rows += [(w, t, d) for t, d in zip(sc.times, dens)]
        final = dens[int(np.argmax(sc.times))]
        output.write_text(out / f"terminal_w{_slug(w)}.svg",
                          _terminal_plot(final, f"{sc.name}: w={w:g}, t={max(sc.times):g}"))
    output.write_density_csv(out / "densities.csv", rows)
    print(f"wrote {len(rows)} densities to {out / 'densities.csv'}")
    if args.validate:
        print(f"closed form vs oracle max drift {worst:.3e} (tolerance {DRIFT_TOL:g}); conservation ok")
        if worst > DRIFT_TOL:
            raise ValidationFailure(f"closed form drifted {worst:.3e} from the oracle")
    return EXIT_OK


def _oracle_tv_curve(sc: Scenario, w: float):
    times = sorted(set(sc.times) | {sc.T})
    dens = _oracle(sc, w, times)
    final = dens[-1]
    vals = np.array([tv(d, final) for d in dens])
    idx = [times.index(t) for t in sc.times]
    return vals[idx]


def cmd_tv_curve(sc: Scenario, args) -> int:
    dims = sc.mixture.space.dims
    if dims > 2 and not args.oracle:
        raise ConfigError(f"closed forms cover D <= 2; rerun with --oracle for D = {dims}")
    out = Path(args.out)
    t0 = args.t0 if args.t0 is not None else 0.5 * sc.T
    times = sorted(set(sc.times) | {t0})
    rows, curves = [], []
    for w in sc.ws:
        g = GuidanceConfig(sc.class_index, w)
        if args.oracle:
            vals = _oracle_tv_curve(Scenario(sc.name, sc.mixture, sc.guided_class, (w,), sc.T, tuple(times)), w)
            with np.errstate(divide="ignore"):
                logs = np.log(vals)
            rows += [(w, t, v, lv) for t, v, lv in zip(times, vals, logs)]
            continue
        c = (tv_curve_1d_closed if dims == 1 else tv_curve_2d)(sc.mixture, g, sc.T, times)
        curves.append(c)
        rows += list(c.rows())
    output.write_tv_csv(out / "tv.csv", rows)
    at_t0 = [(w, v, lv) for (w, t, v, lv) in rows if t == t0]
    ws = [r[0] for r in at_t0]
    output.write_text(
        out / "tv_vs_w.svg",
        output.line_chart(ws, {"TV": [r[1] for r in at_t0], "log TV": [r[2] for r in at_t0]},
                          f"{sc.name}: TV at t={t0:g}", "w", "TV / log TV"),
    )
    report = {"t0": t0, "fit": None}
    big = [(w, c) for w, c in zip(sc.ws, curves) if w >= 2]
    if len(big) >= 2:
        try:
            fit = decay_exponent_fit([c for _, c in big], [w for w, _ in big], t0)
            report["fit"] = {"slope": fit.slope, "intercept": fit.intercept, "max_residual": fit.residual,
                             "ws": list(fit.used_ws)}
        except MaskCFGError as exc:
            report["fit_error"] = str(exc)
    (out / "decay_fit.json").write_text(json.dumps(report, indent=1))
    print(f"wrote {len(rows)} TV rows to {out / 'tv.csv'}; fit: {report['fit']}")
    return EXIT_OK


def cmd_regions(sc: Scenario, args) -> int:
    m = sc.mixture
    if m.space.dims != 2:
        raise ConfigError("regions needs a D = 2 mixture")
    out = Path(args.out)
    rd = region_decomposition_2d(m, sc.guided_class)
    report = rd.to_dict()
    report["weights"] = {
        format(w, "g"): [{"x": list(x), "weight": v} for x, v in sorted(rd.weights(w).items())]
        for w in sc.ws if w >= 0
    }
    membership = {x: name for name, xs in rd.regions.items() for x in xs}
    output.write_text(out / "regions.svg", output.region_map(m.space.alphabet - 1, membership, f"{sc.name}: regions"))
    try:
        lim = limit_distribution_2d(rd, m)
        output.write_density_csv(out / "limit.csv", [(float("inf"), sc.T, lim)])
        report["limit_degenerate"] = False
    except DegenerateLimit as exc:
        report["limit_degenerate"] = True
        log.warning("%s", exc)
    (out / "regions.json").write_text(json.dumps(report, indent=1))
    print(json.dumps({k: len(v) for k, v in report["regions"].items()}))
    return EXIT_OK


def _exact_terminal(sc: Scenario, w: float) -> DenseDistribution:
    m, g = sc.mixture, GuidanceConfig(sc.class_index, w)
    if m.space.dims == 1:
        return solve_1d_guided(m, g, sc.T, sc.T)
    if m.space.dims == 2:
        return sampled_distribution_2d(m, g)
    gen = guided_reverse(m, g)
    return DenseDistribution(m.space, absorb(gen, _all_mask(m.space).probs))


def _run_sampler(scheme, gen, T, n, steps, seed):
    if scheme == "exact-event":
        return sample_exact_event(gen, T, n, seed)
    if scheme == "tau-leaping":
        return sample_tau_leaping(gen, T, steps, n, seed)
    return sample_uniformization(gen, T, n, seed)


def cmd_sample(sc: Scenario, args) -> int:
    if args.n < 1 or args.steps < 1:
        raise ConfigError("n and steps must be >= 1")
    w = args.w if args.w is not None else sc.ws[-1]
    seed = args.seed if args.seed is not None else sc.seed
    g = GuidanceConfig(sc.class_index, w)
    gen = guided_reverse(sc.mixture, g)
    out = Path(args.out)
    batch = _run_sampler(args.scheme, gen, sc.T, args.n, args.steps, seed)
    write_samples_csv(batch, out / "samples.csv")
    q = _exact_terminal(sc, w)
    emp = empirical_distribution(batch)
    stat, p, bins = chi_square_test(batch, q)
    report = {
        "scheme": args.scheme, "n": args.n, "w": w, "seed": seed, "steps": args.steps,
        "tv_to_exact": tv(emp, q), "chi_square": stat, "p_value": p, "bins": bins,
        "wall_time": batch.wall_time, "diagnostics": batch.diagnostics,
    }
    if args.compare_steps:
        other = sample_tau_leaping(gen, sc.T, args.compare_steps, args.n, seed)
        report["compare"] = {"steps": args.compare_steps, "tv_to_exact": tv(empirical_distribution(other), q)}
        report["instability_gap"] = report["tv_to_exact"] - report["compare"]["tv_to_exact"]
    (out / "sample_report.json").write_text(json.dumps(report, indent=1, default=float))
    print(f"{args.scheme}: n={args.n} w={w:g} TV to exact terminal law {report['tv_to_exact']:.4g}")
    if "compare" in report:
        print(f"steps {args.steps} vs {args.compare_steps}: instability gap {report['instability_gap']:.4g}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import run_all

    results = run_all(quick=args.quick, fault=args.inject_fault)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "validation.json").write_text(json.dumps(
            [{"criterion": r.key, "name": r.name, "passed": r.passed, "detail": r.detail, "seconds": r.seconds}
             for r in results], indent=1))
    return EXIT_OK if ok else EXIT_VALIDATION


# -- argument parsing -----------------------------------------------------------------


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help=f"scenario JSON path or built-in name: {', '.join(BUILTIN)}")
    p.add_argument("--out", default=d("out"), help="output directory")
    p.add_argument("--seed", type=int, default=d(None), help="sampler seed (overrides the scenario)")
    p.add_argument("--oracle", action="store_true", default=d(False), help="use the brute-force solver")
    p.add_argument("--validate", action="store_true", default=d(False), help="cross-check against the oracle")
    p.add_argument("--quick", action="store_true", default=d(False), help="reduced validation subset")
    p.add_argument("--inject-fault", choices=["coefficient"], default=d(None),
                   help="corrupt the 2D coefficients (negative control)")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maskcfg", description=__doc__.splitlines()[0])
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("evolve", "tv-curve", "regions", "sample", "validate"):
        sp = sub.add_parser(name)
        _add_globals(sp, suppress=True)
        if name == "tv-curve":
            sp.add_argument("--t0", type=float, default=None, help="time for the TV-vs-w plot and fit")
        if name == "sample":
            sp.add_argument("--scheme", choices=["exact-event", "tau-leaping", "uniformization"],
                            default="exact-event")
            sp.add_argument("-n", type=int, default=100_000)
            sp.add_argument("--steps", type=int, default=50)
            sp.add_argument("--w", type=float, default=None, help="guidance strength (default: last scenario w)")
            sp.add_argument("--compare-steps", type=int, default=None,
                            help="also run tau-leaping with this many steps and report the gap")
    return parser


COMMANDS = {"evolve": cmd_evolve, "tv-curve": cmd_tv_curve, "regions": cmd_regions, "sample": cmd_sample}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.config is None:
            raise ConfigError("--config is required")
        sc = load_scenario(args.config)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](sc, args)
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConfigError, MaskCFGError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
