"""Experiment runner: JSON configuration in, CSV/PGM/summary files out.

    recover --config suite.json --out results/ [--verbose]

Every (replicate, prior) cell of the experiment matrix is independent and may
run in a worker process; results are gathered in a fixed order and written by
the parent, so the files do not depend on ``workers``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import io
from .forward_models import Measurement, acquire, make_model
from .signals import IMAGE_IDS, SIGNAL_IDS, make_grid, sample_image, sample_signal
from .solver import HyperParams, PosteriorResult, SolverError, gsbl_run, mmv_gsbl_run, trace_rows
from .transforms import DEFAULT_ZETA, make_transform, stack_2d
from .uq import conditional_posterior, credible_band, sample

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

_SEED = {"type": "integer", "minimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "dimension", "n", "measurements", "priors", "replicates"],
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "dimension": {"enum": [1, 2]},
        "n": {"type": "integer", "minimum": 4, "multipleOf": 2},
        "image_path": {"type": "string"},
        "crop": {"type": "boolean"},
        "measurements": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["target", "kind", "snr_db", "noise_seed"],
                "properties": {
                    "target": {"type": "string"},
                    "kind": {"enum": ["identity", "blur", "subsample", "partial_fourier"]},
                    "gamma": {"type": "number", "exclusiveMinimum": 0},
                    "r": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                    "mask_seed": _SEED,
                    "keep_dc": {"type": "boolean"},
                    "snr_db": {"type": ["number", "string"]},
                    "noise_seed": _SEED,
                },
                "allOf": [
                    {"if": {"properties": {"kind": {"const": "blur"}}}, "then": {"required": ["gamma"]}},
                    {
                        "if": {"properties": {"kind": {"enum": ["subsample", "partial_fourier"]}}},
                        "then": {"required": ["r", "mask_seed"]},
                    },
                ],
            },
        },
        "priors": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "kind", "vartheta"],
                "properties": {
                    "name": {"type": "string", "pattern": "^[A-Za-z0-9_-]+$"},
                    "kind": {"enum": ["local", "residual"]},
                    "p": {"type": "integer", "minimum": 0},
                    "zeta": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                    "vartheta": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "hyper": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "beta": {"type": "number"},
                "hyperprior": {"enum": ["rate", "scale"]},
                "max_outer_iters": {"type": "integer", "minimum": 1},
                "x_tol": {"type": "number", "exclusiveMinimum": 0},
                "cg_tol": {"type": "number", "exclusiveMinimum": 0},
                "cg_max_iters": {"type": "integer", "minimum": 1},
            },
        },
        "modes": {
            "type": "array",
            "minItems": 1,
            "uniqueItems": True,
            "items": {"enum": ["separate", "joint"]},
        },
        "uq": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "samples": {"type": "integer", "minimum": 0},
                "seed": _SEED,
            },
        },
        "replicates": {"type": "array", "minItems": 1, "uniqueItems": True, "items": _SEED},
        "dump_transforms": {"type": "boolean"},
        "workers": {"type": "integer", "minimum": 1},
    },
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MeasurementSpec:
    target: str
    kind: str
    snr_db: float
    noise_seed: int
    gamma: float | None = None
    r: float | None = None
    mask_seed: int | None = None
    keep_dc: bool = False


@dataclass(frozen=True)
class PriorSpec:
    name: str
    kind: str
    vartheta: float
    p: int = 0
    zeta: float = DEFAULT_ZETA


@dataclass(frozen=True)
class UQSpec:
    enabled: bool = False
    level: float = 0.99
    samples: int = 0
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dimension: int
    n: int
    measurements: tuple
    priors: tuple
    replicates: tuple
    hyper: dict = field(default_factory=dict)
    modes: tuple = ("separate",)
    uq: UQSpec = UQSpec()
    image_path: str | None = None
    crop: bool = False
    dump_transforms: bool = False
    workers: int = 1

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "ExperimentConfig":
        try:
            jsonschema.validate(raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{where}: {exc.message}") from None
        ms = tuple(MeasurementSpec(**{**m, "snr_db": _parse_snr(m["snr_db"])}) for m in raw["measurements"])
        priors = tuple(PriorSpec(**p) for p in raw["priors"])
        image_path = raw.get("image_path")
        if image_path is not None and base_dir is not None and not Path(image_path).is_absolute():
            image_path = str(Path(base_dir) / image_path)
        cfg = cls(
            name=raw["name"],
            dimension=raw["dimension"],
            n=raw["n"],
            measurements=ms,
            priors=priors,
            replicates=tuple(raw["replicates"]),
            hyper=dict(raw.get("hyper", {})),
            modes=tuple(raw.get("modes", ["separate"])),
            uq=UQSpec(**raw.get("uq", {})),
            image_path=image_path,
            crop=raw.get("crop", False),
            dump_transforms=raw.get("dump_transforms", False),
            workers=raw.get("workers", 1),
        )
        cfg._check()
        return cfg

    def _check(self):
        allowed = SIGNAL_IDS if self.dimension == 1 else IMAGE_IDS + ("input",)
        for m in self.measurements:
            if m.target not in allowed:
                raise ConfigError(f"target {m.target!r} is not one of {allowed}")
        if any(m.target == "input" for m in self.measurements) and self.image_path is None:
            raise ConfigError("target 'input' needs image_path")
        names = [p.name for p in self.priors]
        if len(set(names)) != len(names):
            raise ConfigError("prior names must be unique")
        try:
            hyper = self.hyper_for(self.priors[0])
            if "separate" in self.modes:
                hyper.eta()
            if "joint" in self.modes:
                counts = [sum(m.target == t for m in self.measurements) for t in self.targets()]
                for count in counts:
                    hyper.eta(count, joint=True)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"hyper: {exc}") from None
        if self.uq.enabled and self.n ** self.dimension > 4096:
            raise ConfigError("uncertainty quantification is limited to 4096 unknowns")

    def hyper_for(self, prior: PriorSpec) -> HyperParams:
        return HyperParams(vartheta=prior.vartheta, **self.hyper)

    def targets(self) -> list:
        return list(dict.fromkeys(m.target for m in self.measurements))


def _parse_snr(v) -> float:
    if isinstance(v, str):
        if v.lower() not in ("inf", "infinity"):
            raise ConfigError(f"snr_db must be a number or 'inf', got {v!r}")
        return float("inf")
    return float(v)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return ExperimentConfig.from_dict(raw, base_dir=path.parent)


# ---------------------------------------------------------------- running


@dataclass
class Recovery:
    """One recovered signal plus everything written next to it."""

    replicate: int
    prior: str
    mode: str
    index: int  # measurement position in the config
    target: str
    x: np.ndarray
    truth: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    samples: np.ndarray | None = None

    @property
    def abs_err(self) -> np.ndarray:
        return np.abs(self.x - self.truth)

    @property
    def key(self) -> str:
        return f"{self.target}.m{self.index}.{self.prior}.{self.mode}"


@dataclass
class Run:
    """A single solver call: one measurement, or one joint group."""

    replicate: int
    prior: str
    mode: str
    label: str
    result: PosteriorResult


@dataclass
class ExperimentResults:
    config: ExperimentConfig
    truths: dict
    measurements: dict  # replicate -> list of Measurement
    recoveries: list
    runs: list

    def mean_abs(self) -> dict:
        """``{key: [per-replicate mean abs error, ...]}`` in replicate order."""
        out: dict = {}
        for rec in self.recoveries:
            out.setdefault(rec.key, []).append(float(np.mean(rec.abs_err)))
        return out


def build_truths(cfg: ExperimentConfig) -> dict:
    truths = {}
    for target in cfg.targets():
        if cfg.dimension == 1:
            truths[target] = sample_signal(target, make_grid(cfg.n)).values
        elif target == "input":
            truths[target] = io.load_image(cfg.image_path, n=cfg.n, crop=cfg.crop)
        else:
            truths[target] = sample_image(target, cfg.n)
    return truths


def build_measurements(cfg: ExperimentConfig, truths: dict, replicate: int) -> list:
    out = []
    for spec in cfg.measurements:
        mask_seed = None if spec.mask_seed is None else [spec.mask_seed, replicate]
        model = make_model(spec.kind, cfg.n, cfg.dimension, gamma=spec.gamma, r=spec.r, seed=mask_seed, keep_dc=spec.keep_dc)
        out.append(acquire(truths[spec.target], model, spec.snr_db, [spec.noise_seed, replicate]))
    return out


def build_transform(cfg: ExperimentConfig, prior: PriorSpec):
    base = make_transform(prior.kind, cfg.n, prior.p, prior.zeta)
    return base if cfg.dimension == 1 else stack_2d(base, cfg.n)


def _flat(image):
    return np.asarray(image, dtype=float).ravel(order="F")


def _uq(cfg, rec: Recovery, m: Measurement, transform, theta, seed_tail):
    post = conditional_posterior(m, transform, theta)
    band = credible_band(post, cfg.uq.level)
    rec.lower, rec.upper = band.lower, band.upper
    if cfg.uq.samples:
        rec.samples = sample(post, cfg.uq.samples, [cfg.uq.seed, *seed_tail])


def run_cell(cfg: ExperimentConfig, truths: dict, replicate: int, prior_index: int):
    """All recovery modes for one replicate and one prior."""
    prior = cfg.priors[prior_index]
    hyper = cfg.hyper_for(prior)
    transform = build_transform(cfg, prior)
    ms = build_measurements(cfg, truths, replicate)
    recoveries, runs = [], []
    for mode in cfg.modes:
        if mode == "separate":
            for i, (spec, m) in enumerate(zip(cfg.measurements, ms)):
                res = gsbl_run(m, transform, hyper)
                rec = Recovery(replicate, prior.name, mode, i, spec.target, res.x, _flat(truths[spec.target]))
                if cfg.uq.enabled:
                    _uq(cfg, rec, m, transform, res.theta, (replicate, prior_index, i, 0))
                recoveries.append(rec)
                runs.append(Run(replicate, prior.name, mode, f"m{i}", res))
        else:
            for target in cfg.targets():
                members = [i for i, spec in enumerate(cfg.measurements) if spec.target == target]
                res = mmv_gsbl_run([ms[i] for i in members], transform, hyper)
                for i, x in zip(members, res.x_map):
                    rec = Recovery(replicate, prior.name, mode, i, target, x, _flat(truths[target]))
                    if cfg.uq.enabled:
                        _uq(cfg, rec, ms[i], transform, res.theta, (replicate, prior_index, i, 1))
                    recoveries.append(rec)
                runs.append(Run(replicate, prior.name, mode, target, res))
    return recoveries, runs


def run_suite(cfg: ExperimentConfig) -> ExperimentResults:
    """Run every cell of the experiment matrix and collect results in memory."""
    truths = build_truths(cfg)
    cells = [(r, k) for r in cfg.replicates for k in range(len(cfg.priors))]
    if cfg.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(run_cell, cfg, truths, r, k) for r, k in cells]
            outputs = [f.result() for f in futures]
    else:
        outputs = []
        for r, k in cells:
            log.info("replicate %d prior %s", r, cfg.priors[k].name)
            outputs.append(run_cell(cfg, truths, r, k))
    recoveries = [rec for recs, _ in outputs for rec in recs]
    runs = [run for _, rs in outputs for run in rs]
    measurements = {r: build_measurements(cfg, truths, r) for r in cfg.replicates}
    return ExperimentResults(cfg, truths, measurements, recoveries, runs)


# ---------------------------------------------------------------- writing


def _grid_columns(cfg):
    if cfg.dimension == 1:
        return ["s"], [make_grid(cfg.n).points]
    rows, cols = np.meshgrid(np.arange(1, cfg.n + 1), np.arange(1, cfg.n + 1), indexing="ij")
    return ["row", "col"], [rows.ravel(order="F"), cols.ravel(order="F")]


def _image(v, n):
    return np.asarray(v).reshape(n, n, order="F")


def emit_results(results: ExperimentResults, out_dir) -> list:
    """Write every artifact under ``out_dir``; returns the paths in write order."""
    cfg = results.config
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put_csv(name, header, columns):
        path = out / name
        io.write_csv(path, header, columns)
        written.append(path)

    grid_header, grid_cols = _grid_columns(cfg)
    for target, truth in results.truths.items():
        put_csv(f"truth_{target}.csv", grid_header + ["value"], grid_cols + [_flat(truth)])
        if cfg.dimension == 2:
            io.save_image(out / f"truth_{target}.pgm", truth)
            written.append(out / f"truth_{target}.pgm")

    for r, ms in results.measurements.items():
        for i, m in enumerate(ms):
            y = np.asarray(m.y)
            put_csv(f"measurement_rep{r}_m{i}.csv", ["index", "real", "imag"], [np.arange(y.size), y.real, y.imag])

    for rec in results.recoveries:
        stem = f"recovery_rep{rec.replicate}_{rec.prior}_{rec.mode}_m{rec.index}_{rec.target}"
        header = grid_header + ["truth", "map", "abs_err"]
        columns = grid_cols + [rec.truth, rec.x, rec.abs_err]
        if rec.lower is not None:
            header += ["lower", "upper"]
            columns += [rec.lower, rec.upper]
        put_csv(stem + ".csv", header, columns)
        if rec.samples is not None:
            draws, size = rec.samples.shape
            put_csv(
                stem + "_samples.csv",
                ["draw", "index", "value"],
                [np.repeat(np.arange(draws), size), np.tile(np.arange(size), draws), rec.samples.ravel()],
            )
        if cfg.dimension == 2:
            io.save_image(out / (stem + ".pgm"), _image(rec.x, cfg.n))
            written.append(out / (stem + ".pgm"))

    for run in results.runs:
        rows = trace_rows(run.result)
        cols = [np.array([row[c] for row in rows]) for c in range(3)]
        cols[0] = cols[0].astype(int)
        put_csv(f"trace_rep{run.replicate}_{run.prior}_{run.mode}_{run.label}.csv", ["iter", "objective", "x_change"], cols)

    if cfg.dump_transforms and cfg.dimension == 1:
        for prior in cfg.priors:
            path = out / f"transform_{prior.name}.csv"
            build_transform(cfg, prior).to_csv(path)
            written.append(path)

    summary = out / "summary.txt"
    summary.write_text(format_summary(results), encoding="utf-8")
    written.append(summary)
    return written


def format_summary(results: ExperimentResults) -> str:
    cfg = results.config
    lines = [f"name={cfg.name}", f"dimension={cfg.dimension}", f"n={cfg.n}", f"replicates={len(cfg.replicates)}"]
    for key, values in results.mean_abs().items():
        for r, v in zip(cfg.replicates, values):
            lines.append(f"mean_abs.{key}.rep{r}={v!r}")
        lines.append(f"mean_abs.{key}.avg={float(np.mean(values))!r}")
    for run in results.runs:
        tag = f"{run.label}.{run.prior}.{run.mode}.rep{run.replicate}"
        lines.append(f"iters.{tag}={run.result.iters}")
        lines.append(f"converged.{tag}={str(run.result.converged).lower()}")
    return "\n".join(lines) + "\n"


def read_summary(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        key, _, value = line.partition("=")
        out[key] = value
    return out


def run_experiment(config, out_dir) -> int:
    """Run a suite end to end. Returns the process exit status."""
    try:
        cfg = config if isinstance(config, ExperimentConfig) else (
            ExperimentConfig.from_dict(config) if isinstance(config, dict) else load_config(config)
        )
        results = run_suite(cfg)
    except (ConfigError, io.ImageFormatError, FileNotFoundError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except SolverError as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    emit_results(results, out_dir)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="recover", description="Sparse Bayesian signal and image recovery suites.")
    parser.add_argument("--config", required=True, help="JSON experiment description")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--verbose", action="store_true", help="log progress and solver iterations")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run_experiment(args.config, args.out)


if __name__ == "__main__":
    sys.exit(main())
