"""Replicated-experiment engine and the data-analysis workflow.

An experiment config (TOML) fixes a location design, a latent model, a mixing
matrix, named kernel sets, sample sizes, and a replication count.  The runner
simulates fields, fits every kernel set per replication, aggregates the
scaled minimum distance index, and puts the asymptotic prediction (the delta
sum) next to each Monte Carlo mean.  All randomness flows through
per-replication substreams of the master seed, so results are byte-identical
for any thread count.
"""

from __future__ import annotations

import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .asymptotics import build_workspace, fk_matrix, mdi_limit_spectrum, sample_limit_nmdi
from .dataio import config_hash, read_fieldsample_csv, write_matrix_csv
from .errors import DataFormatError
from .fields import LatentSampler, LatentSpec, MaternParams, latent_preset
from .kernels import Kernel, parse_kernel
from .locations import (
    LocationSet,
    gen_diamond_grid,
    gen_nested_squares,
    gen_rectangle_grid,
    gen_uniform_rect,
)
from .metrics import max_abs_correlations, mdi
from .pipeline import PreparedFit, SbssFit

# fixed stream labels so every consumer of the master seed is independent
_STREAM_DESIGN = 424243
_STREAM_MIXING = 999983
_STREAM_LIMIT = 777213


@dataclass(frozen=True)
class DesignSpec:
    kind: str
    params: dict

    def build(self, seed: int) -> LocationSet:
        rng = np.random.default_rng(np.random.SeedSequence([seed, _STREAM_DESIGN]))
        if self.kind == "nested_squares":
            return gen_nested_squares(
                int(self.params["base_count"]), int(self.params["layers"]), rng
            )
        if self.kind == "diamond":
            return gen_diamond_grid(int(self.params["radius"]))
        if self.kind == "rectangle":
            return gen_rectangle_grid(int(self.params["radius"]))
        if self.kind == "uniform_rect":
            return gen_uniform_rect(int(self.params["n"]), self.params["bounds"], rng)
        raise ValueError(f"unknown design kind {self.kind!r}")

    @property
    def prefixable(self) -> bool:
        return self.kind == "nested_squares"


@dataclass(frozen=True)
class ExperimentConfig:
    design: DesignSpec
    latent: LatentSpec
    kernel_sets: dict[str, tuple[Kernel, ...]]
    replications: int
    sample_sizes: tuple[int, ...]
    seed: int
    centered: bool = False
    mixing_kind: str = "identity"
    mixing_matrix: Optional[np.ndarray] = None
    outputs: Optional[str] = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.kernel_sets:
            raise ValueError("at least one kernel set is required")
        if not self.sample_sizes:
            raise ValueError("at least one sample size is required")

    def mixing(self, p: int) -> np.ndarray:
        if self.mixing_kind == "identity":
            return np.eye(p)
        if self.mixing_kind == "matrix":
            m = np.asarray(self.mixing_matrix, dtype=np.float64)
            if m.shape != (p, p):
                raise ValueError(f"mixing matrix must be {p} x {p}")
            return m
        if self.mixing_kind == "random":
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, _STREAM_MIXING]))
            while True:
                m = rng.normal(size=(p, p))
                if np.linalg.cond(m) < 1e6:
                    return m
        raise ValueError(f"unknown mixing kind {self.mixing_kind!r}")

    def payload(self) -> dict:
        return {
            "design": {"kind": self.design.kind, **self.design.params},
            "latent": [[c.kappa, c.phi] for c in self.latent.components],
            "kernel_sets": {
                name: [k.spec_string() for k in ks]
                for name, ks in self.kernel_sets.items()
            },
            "replications": self.replications,
            "sample_sizes": list(self.sample_sizes),
            "seed": self.seed,
            "centered": self.centered,
            "mixing": self.mixing_kind,
        }


def _latent_from_table(table: dict) -> LatentSpec:
    if "preset" in table:
        return latent_preset(table["preset"], table.get("phi"))
    comps = [MaternParams(float(k), float(ph)) for k, ph in table["components"]]
    return LatentSpec(comps)


def parse_config(data: dict, path: str = "<config>") -> ExperimentConfig:
    try:
        design_table = dict(data["design"])
        design = DesignSpec(design_table.pop("kind"), design_table)
        latent = _latent_from_table(data["latent"])
        kernel_sets = {
            name: tuple(parse_kernel(s) for s in specs)
            for name, specs in data["kernel_sets"].items()
        }
        mixing_table = data.get("mixing", {"kind": "identity"})
        mixing_kind = mixing_table.get("kind", "identity")
        mixing_matrix = (
            np.asarray(mixing_table["matrix"], dtype=np.float64)
            if mixing_kind == "matrix"
            else None
        )
        return ExperimentConfig(
            design=design,
            latent=latent,
            kernel_sets=kernel_sets,
            replications=int(data["replications"]),
            sample_sizes=tuple(int(n) for n in data["sample_sizes"]),
            seed=int(data["seed"]),
            centered=bool(data.get("centered", False)),
            mixing_kind=mixing_kind,
            mixing_matrix=mixing_matrix,
            outputs=data.get("outputs"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: bad experiment config: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise DataFormatError(f"{path}: {exc}") from exc
    return parse_config(data, str(path))


@dataclass(frozen=True)
class ReportRow:
    n: int
    kernel_set: str
    replications: int
    failures: int
    mean_nmdi: float
    mc_se: float
    expected_nmdi: float
    wall_time_s: float


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple[ReportRow, ...]
    manifest: dict = field(default_factory=dict)

    def to_csv_text(self) -> str:
        """Deterministic report CSV; timings live in the manifest instead."""
        out = StringIO()
        out.write("n,kernel_set,replications,failures,mean_nmdi,mc_se,expected_nmdi\n")
        for r in self.rows:
            out.write(
                f"{r.n},{r.kernel_set},{r.replications},{r.failures},"
                f"{r.mean_nmdi:.17g},{r.mc_se:.17g},{r.expected_nmdi:.17g}\n"
            )
        return out.getvalue()


def _slice_design(full: LocationSet, n: int, design: DesignSpec) -> LocationSet:
    if n == full.n:
        return full
    if design.prefixable and n < full.n:
        return full.prefix(n)
    raise ValueError(
        f"sample size {n} not achievable by design {design.kind!r} (n={full.n})"
    )


def _replication_values(
    locs: LocationSet,
    sampler: LatentSampler,
    fits: dict[str, PreparedFit],
    omega: np.ndarray,
    centered: bool,
    seed: int,
    design_index: int,
    rep: int,
) -> dict[str, float]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, design_index, rep]))
    z = sampler.draw(rng)
    x = z.values @ omega.T
    p = z.p
    out = {}
    for name, prepared in fits.items():
        fitres = prepared.fit_values(x, centered)
        out[name] = locs.n * (p - 1) * mdi(fitres.gamma, omega).value ** 2
    return out


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    """Run the replicated study and attach asymptotic predictions.

    Per replication, one latent draw is shared by all kernel sets (paired
    comparison).  Failed replications are excluded from the aggregates and
    counted in the report, never silently dropped.
    """
    full = cfg.design.build(cfg.seed)
    p = cfg.latent.p
    omega = cfg.mixing(p)
    rows = []
    timings = {}
    for design_index, n in enumerate(cfg.sample_sizes):
        start = time.perf_counter()
        locs = _slice_design(full, n, cfg.design)
        sampler = LatentSampler(locs, cfg.latent)
        fits = {
            name: PreparedFit(locs, ks) for name, ks in cfg.kernel_sets.items()
        }

        values = {name: np.full(cfg.replications, np.nan) for name in fits}
        failures = np.zeros(cfg.replications, dtype=bool)

        def one(rep: int):
            try:
                return rep, _replication_values(
                    locs, sampler, fits, omega, cfg.centered,
                    cfg.seed, design_index, rep,
                )
            except Exception:
                return rep, None

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(one, range(cfg.replications)))
        else:
            results = [one(rep) for rep in range(cfg.replications)]
        for rep, res in results:
            if res is None:
                failures[rep] = True
            else:
                for name, val in res.items():
                    values[name][rep] = val

        ws = build_workspace(locs, cfg.latent)
        n_fail = int(failures.sum())
        n_ok = cfg.replications - n_fail
        for name, ks in cfg.kernel_sets.items():
            spectrum = mdi_limit_spectrum(fk_matrix(ws, ks).fk)
            good = values[name][~failures]
            mean = float(good.mean()) if n_ok else float("nan")
            se = float(good.std(ddof=1) / np.sqrt(n_ok)) if n_ok > 1 else float("nan")
            elapsed = time.perf_counter() - start
            rows.append(
                ReportRow(n, name, n_ok, n_fail, mean, se, spectrum.expected_nmdi, elapsed)
            )
        timings[f"n={n}"] = time.perf_counter() - start
    manifest = {
        "config_hash": config_hash(cfg.payload()),
        "version": __version__,
        "timings_s": timings,
    }
    return ExperimentReport(tuple(rows), manifest)


def run_density_comparison(
    cfg: ExperimentConfig, draws: int, threads: int = 1
) -> dict[tuple[int, str], tuple[np.ndarray, np.ndarray]]:
    """Paired samples per (n, kernel set): empirical scaled-index replications
    and draws from the asymptotic chi-squared mixture."""
    full = cfg.design.build(cfg.seed)
    p = cfg.latent.p
    omega = cfg.mixing(p)
    out = {}
    for design_index, n in enumerate(cfg.sample_sizes):
        locs = _slice_design(full, n, cfg.design)
        sampler = LatentSampler(locs, cfg.latent)
        fits = {name: PreparedFit(locs, ks) for name, ks in cfg.kernel_sets.items()}

        def one(rep: int):
            return _replication_values(
                locs, sampler, fits, omega, cfg.centered, cfg.seed, design_index, rep
            )

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(one, range(cfg.replications)))
        else:
            results = [one(rep) for rep in range(cfg.replications)]

        ws = build_workspace(locs, cfg.latent)
        for set_index, (name, ks) in enumerate(cfg.kernel_sets.items()):
            empirical = np.array([res[name] for res in results])
            spectrum = mdi_limit_spectrum(fk_matrix(ws, ks).fk)
            rng = np.random.default_rng(
                np.random.SeedSequence([cfg.seed, _STREAM_LIMIT, design_index, set_index])
            )
            out[(n, name)] = (empirical, sample_limit_nmdi(spectrum, draws, rng))
    return out


def run_data_analysis(
    data_csv,
    kernel_sets: dict[str, Sequence[Kernel]],
    reference_scores_csv=None,
    out_dir=None,
) -> tuple[dict[str, SbssFit], Optional[dict[str, np.ndarray]]]:
    """Fit each kernel set to a data CSV (centered) and, when a reference score
    file is given, tabulate maximal absolute correlations per component."""
    sample = read_fieldsample_csv(data_csv)
    reference = None
    if reference_scores_csv is not None:
        from .dataio import read_matrix_csv

        reference = read_matrix_csv(reference_scores_csv)
        if reference.shape[0] != sample.n:
            raise DataFormatError(
                f"{reference_scores_csv}: {reference.shape[0]} rows, data has {sample.n}"
            )
    fits = {}
    tables = {} if reference is not None else None
    for name, ks in kernel_sets.items():
        fitres = PreparedFit(sample.locations, ks).fit_values(sample.values, centered=True)
        fits[name] = fitres
        if reference is not None:
            values, _ = max_abs_correlations(fitres.scores, reference)
            tables[name] = values
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, fitres in fits.items():
            write_matrix_csv(fitres.gamma, out / f"{name}.gamma.csv")
            write_matrix_csv(np.stack(fitres.unmixing.lambdas), out / f"{name}.lambda.csv")
            write_matrix_csv(fitres.scores, out / f"{name}.scores.csv")
        if tables is not None:
            with open(out / "correlations.csv", "w") as fh:
                q = len(next(iter(tables.values())))
                fh.write("estimator," + ",".join(f"IC{j + 1}" for j in range(q)) + "\n")
                for name, vals in tables.items():
                    fh.write(name + "," + ",".join(f"{v:.17g}" for v in vals) + "\n")
    return fits, tables
