"""Command-line runner: ``tracesmc run`` and ``tracesmc kl-curve``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from pathlib import Path
from typing import Iterator

from . import output
from .models import BENCHMARKS
from .oracles import exact_posterior
from .pg import iter_pg
from .pimh import iter_pimh
from .resampling import SCHEMES
from .smc import SmcConfig, SweepResult, iter_smc

log = logging.getLogger("tracesmc")

ENGINES = ("smc", "pimh", "pg")


def iterate(engine: str, model, cfg: SmcConfig, iterations: int) -> Iterator[tuple[SweepResult, dict]]:
    """Yield (emitted sample block, extra diagnostics) per iteration."""
    if engine == "smc":
        for block in iter_smc(model, cfg, iterations):
            yield block, {}
    elif engine == "pimh":
        for state in iter_pimh(model, cfg, iterations):
            yield state.current, {
                "accepted": state.last_accepted,
                "acceptance_rate": state.acceptance_rate,
            }
    elif engine == "pg":
        for step in iter_pg(model, cfg, iterations):
            offspring = [e.retained_offspring for e in step.result.events]
            yield step.result, {
                "retained_offspring": offspring if offspring and offspring[0] is not None else None
            }
    else:
        raise ValueError(f"unknown engine {engine!r}")


def run(args: argparse.Namespace) -> int:
    cfg = SmcConfig(
        particles=args.particles,
        tau=args.tau,
        scheme=args.scheme,
        seed=args.seed,
        workers=args.workers,
    )
    model = BENCHMARKS[args.model].model
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    samples, diags = [], []
    t0 = time.perf_counter()
    for m, (block, extra) in enumerate(iterate(args.engine, model, cfg, args.iterations)):
        samples.extend(output.sample_rows(m, block, args.full_precision))
        diags.append(
            output.Diagnostics(
                m,
                time.perf_counter() - t0,
                block.log_evidence,
                [e.ess for e in block.events],
                [e.resampled for e in block.events],
                **extra,
            )
        )
        log.info("iteration %d done", m)

    output.write_csv(out / "samples.csv", output.SAMPLES_HEADER, samples)
    output.write_csv(out / "diagnostics.csv", output.DIAGNOSTICS_HEADER, [d.row() for d in diags])
    if args.eval:
        exact = exact_posterior(args.model)
        clock = {d.iteration: d.wallclock for d in diags}
        rows = [[str(x) for x in r] for r in samples]
        output.write_csv(out / "kl_curve.csv", output.KL_HEADER, output.kl_curve(rows, clock, exact))
    return 0


def kl_curve_cmd(args: argparse.Namespace) -> int:
    _, samples = output.read_csv(args.samples)
    _, diag = output.read_csv(args.diagnostics)
    curve = output.kl_curve(samples, output.wallclock_from_diagnostics(diag), exact_posterior(args.model))
    output.write_csv(args.out, output.KL_HEADER, curve)
    return 0


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracesmc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run inference on a benchmark model")
    r.add_argument("--model", choices=sorted(BENCHMARKS), required=True)
    r.add_argument("--engine", choices=ENGINES, required=True)
    r.add_argument("--particles", type=_positive_int, default=100)
    r.add_argument("--iterations", type=_positive_int, default=100)
    r.add_argument("--tau", type=float, default=None, help="ESS threshold (default particles/2)")
    r.add_argument("--scheme", choices=SCHEMES, default="systematic")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--workers", type=_positive_int, default=1)
    r.add_argument("--out", default="out")
    r.add_argument("--eval", action="store_true", help="also write kl_curve.csv against the exact posterior")
    r.add_argument("--full-precision", action="store_true", help="write real predicts with repr() precision")
    r.set_defaults(func=run)

    k = sub.add_parser("kl-curve", help="recompute kl_curve.csv from samples.csv and diagnostics.csv")
    k.add_argument("--model", choices=sorted(BENCHMARKS), required=True)
    k.add_argument("--samples", required=True)
    k.add_argument("--diagnostics", required=True)
    k.add_argument("--out", required=True)
    k.set_defaults(func=kl_curve_cmd)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "tau", None) is not None and args.tau > args.particles:
        parser.error(f"--tau must not exceed --particles ({args.particles})")
    if getattr(args, "tau", None) is not None and args.tau < 0:
        parser.error("--tau must be non-negative")
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        try:
            return args.func(args)
        except Exception as exc:
            print(f"tracesmc: error: {exc}", file=sys.stderr)
            return 1


if __name__ == "__main__":
    sys.exit(main())
