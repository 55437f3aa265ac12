"""Command-line front door.

Subcommands: simulate, fit, mdi, asympt, experiment, density, analyze.
Outputs are CSV files plus a JSON run-manifest sidecar.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import build_workspace, fk_matrix, mdi_limit_spectrum
from .dataio import (
    config_hash,
    read_fieldsample_csv,
    read_locations_csv,
    read_matrix_csv,
    write_fieldsample_csv,
    write_manifest,
    write_matrix_csv,
)
from .errors import SpatialBssError
from .experiments import (
    DesignSpec,
    load_config,
    run_data_analysis,
    run_density_comparison,
    run_experiment,
)
from .fields import LatentSampler, LatentSpec, MaternParams, latent_preset, mix
from .kernels import parse_kernel_list
from .pipeline import fit as fit_sample


def _parse_latent(args) -> LatentSpec:
    if args.preset:
        return latent_preset(args.preset, args.phi)
    if args.components:
        comps = []
        for chunk in args.components.split(","):
            kappa, phi = chunk.split(":")
            comps.append(MaternParams(float(kappa), float(phi)))
        return LatentSpec(comps)
    raise SystemExit("one of --preset or --components is required")


def _parse_design(spec: str) -> DesignSpec:
    parts = spec.split(":")
    kind, args = parts[0], parts[1:]
    if kind == "nested" and len(args) == 2:
        return DesignSpec("nested_squares", {"base_count": int(args[0]), "layers": int(args[1])})
    if kind == "diamond" and len(args) == 1:
        return DesignSpec("diamond", {"radius": int(args[0])})
    if kind == "rect" and len(args) == 1:
        return DesignSpec("rectangle", {"radius": int(args[0])})
    if kind == "uniform" and len(args) == 5:
        n, x0, x1, y0, y1 = args
        return DesignSpec(
            "uniform_rect",
            {"n": int(n), "bounds": [[float(x0), float(x1)], [float(y0), float(y1)]]},
        )
    raise SystemExit(
        f"bad design spec {spec!r}; use nested:base:layers, diamond:m, rect:m "
        "or uniform:n:x0:x1:y0:y1"
    )


def _locations_from_args(args, seed: int):
    if args.locations:
        return read_locations_csv(args.locations)
    if args.design:
        return _parse_design(args.design).build(seed)
    raise SystemExit("one of --locations or --design is required")


def _cmd_simulate(args) -> int:
    locs = _locations_from_args(args, args.seed)
    spec = _parse_latent(args)
    sampler = LatentSampler(locs, spec)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 1]))
    sample = sampler.draw(rng)
    mixing = "identity"
    if args.mix:
        omega = read_matrix_csv(args.mix)
        sample = mix(sample, omega)
        mixing = args.mix
    out = Path(args.out)
    write_fieldsample_csv(sample, out.with_suffix(".sample.csv"))
    write_manifest(
        out.with_suffix(".manifest.json"),
        {
            "command": "simulate",
            "seed": args.seed,
            "latent": [[c.kappa, c.phi] for c in spec.components],
            "mixing": mixing,
            "n": locs.n,
            "jitter_used": sampler.jitter_used,
            "version": __version__,
        },
    )
    print(f"wrote {out.with_suffix('.sample.csv')} (n={locs.n}, p={spec.p})")
    return 0


def _cmd_fit(args) -> int:
    sample = read_fieldsample_csv(args.data)
    kernels = parse_kernel_list(args.kernels)
    start = time.perf_counter()
    fitted = fit_sample(sample, kernels, centered=args.centered)
    out = Path(args.out)
    write_matrix_csv(fitted.gamma, out.with_suffix(".gamma.csv"))
    write_matrix_csv(np.stack(fitted.unmixing.lambdas), out.with_suffix(".lambda.csv"))
    write_matrix_csv(fitted.scores, out.with_suffix(".scores.csv"))
    if args.trace:
        write_matrix_csv(
            np.asarray(fitted.unmixing.criterion_trace)[:, None],
            out.with_suffix(".trace.csv"),
        )
    write_manifest(
        out.with_suffix(".manifest.json"),
        {
            "command": "fit",
            "kernels": [k.spec_string() for k in kernels],
            "centered": args.centered,
            "criterion": fitted.unmixing.criterion,
            "sweeps": fitted.unmixing.sweeps,
            "converged": fitted.unmixing.converged,
            "elapsed_s": time.perf_counter() - start,
            "version": __version__,
        },
    )
    print(f"wrote {out.with_suffix('.gamma.csv')} (criterion={fitted.unmixing.criterion:.6g})")
    return 0


def _cmd_mdi(args) -> int:
    from .metrics import mdi

    gamma = read_matrix_csv(args.gamma)
    omega = read_matrix_csv(args.omega)
    res = mdi(gamma, omega)
    print(f"mdi={res.value:.17g}")
    print("assignment=" + ",".join(str(i) for i in res.assignment))
    return 0


def _cmd_asympt(args) -> int:
    locs = _locations_from_args(args, args.seed)
    spec = _parse_latent(args)
    kernels = parse_kernel_list(args.kernels)
    omega = read_matrix_csv(args.omega) if args.omega else None
    ws = build_workspace(locs, spec, omega)
    cov = fk_matrix(ws, kernels)
    spectrum = mdi_limit_spectrum(cov.fk)
    out = Path(args.out)
    write_matrix_csv(spectrum.deltas[None, :], out.with_suffix(".deltas.csv"))
    if args.full_matrix:
        write_matrix_csv(cov.fk, out.with_suffix(".fk.csv"))
    write_manifest(
        out.with_suffix(".manifest.json"),
        {
            "command": "asympt",
            "kernels": [k.spec_string() for k in kernels],
            "n": locs.n,
            "sum_delta": spectrum.expected_nmdi,
            "version": __version__,
        },
    )
    print(f"sum_delta={spectrum.expected_nmdi:.17g}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = type(cfg)(**{**cfg.__dict__, "seed": args.seed})
    report = run_experiment(cfg, threads=args.threads)
    out_dir = Path(args.out or cfg.outputs or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.csv").write_text(report.to_csv_text())
    write_manifest(out_dir / "manifest.json", report.manifest)
    print(report.to_csv_text(), end="")
    return 0


def _cmd_density(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = type(cfg)(**{**cfg.__dict__, "seed": args.seed})
    pairs = run_density_comparison(cfg, draws=args.draws, threads=args.threads)
    out_dir = Path(args.out or cfg.outputs or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    for (n, name), (empirical, limit) in pairs.items():
        write_matrix_csv(empirical[:, None], out_dir / f"empirical_n{n}_{name}.csv")
        write_matrix_csv(limit[:, None], out_dir / f"limit_n{n}_{name}.csv")
    write_manifest(
        out_dir / "manifest.json",
        {
            "command": "density",
            "config_hash": config_hash(cfg.payload()),
            "draws": args.draws,
            "version": __version__,
        },
    )
    print(f"wrote {2 * len(pairs)} sample files to {out_dir}")
    return 0


def _cmd_analyze(args) -> int:
    kernel_sets = {}
    for chunk in args.kernel_sets.split(";"):
        name, _, specs = chunk.partition("=")
        if not specs:
            raise SystemExit(f"bad kernel set {chunk!r}; use name=spec,spec,...")
        kernel_sets[name.strip()] = parse_kernel_list(specs)
    out_dir = args.out or "."
    fits, tables = run_data_analysis(
        args.data, kernel_sets, args.reference, out_dir
    )
    for name, fitres in fits.items():
        print(f"{name}: criterion={fitres.unmixing.criterion:.6g}")
    if tables:
        for name, vals in tables.items():
            print(name + ": " + " ".join(f"{v:.3f}" for v in vals))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatialbss",
        description="Spatial blind source separation toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--seed", type=int, default=0, help="master RNG seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", required=out_required, help="output path prefix")

    p = sub.add_parser("simulate", help="simulate a latent (optionally mixed) field")
    p.add_argument("--design", help="nested:base:layers | diamond:m | rect:m | uniform:n:x0:x1:y0:y1")
    p.add_argument("--locations", help="locations CSV instead of --design")
    p.add_argument("--preset", help="latent preset name (sim1, sim2, sim3)")
    p.add_argument("--phi", type=float, help="range override for presets")
    p.add_argument("--components", help="explicit kappa:phi list, comma separated")
    p.add_argument("--mix", help="CSV with a mixing matrix to apply")
    common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="estimate the unmixing matrix from a data CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--kernels", required=True, help="comma-separated kernel specs")
    p.add_argument("--centered", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--trace", action="store_true", help="emit the criterion trace CSV")
    common(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("mdi", help="minimum distance index of gamma vs omega")
    p.add_argument("--gamma", required=True)
    p.add_argument("--omega", required=True)
    common(p, out_required=False)
    p.set_defaults(func=_cmd_mdi)

    p = sub.add_parser("asympt", help="delta spectrum of a kernel set")
    p.add_argument("--design")
    p.add_argument("--locations")
    p.add_argument("--preset")
    p.add_argument("--phi", type=float)
    p.add_argument("--components")
    p.add_argument("--kernels", required=True)
    p.add_argument("--omega", help="CSV with a mixing matrix (default identity)")
    p.add_argument("--full-matrix", action="store_true")
    common(p)
    p.set_defaults(func=_cmd_asympt)

    p = sub.add_parser("experiment", help="run a replicated experiment from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("density", help="empirical vs asymptotic index samples")
    p.add_argument("--config", required=True)
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_density)

    p = sub.add_parser("analyze", help="fit kernel sets to data and correlate components")
    p.add_argument("--data", required=True)
    p.add_argument("--kernel-sets", required=True, help="name=specs;name=specs")
    p.add_argument("--reference", help="reference scores CSV for correlation tables")
    common(p, out_required=False)
    p.set_defaults(func=_cmd_analyze)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpatialBssError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
