"""YAML run configuration shared by all CLI commands."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .inference import ChainConfig, PriorSpec
from .rates import BLOCK_NAMES, BLOCK_SIZES, HyperParams, RateCoefficients

DEFAULT_CLASS_PROPORTIONS = {
    "new": 0.05, "quarter": 0.15, "halfyear": 0.20, "adult_f": 0.35, "adult_m": 0.25,
}


@dataclass(frozen=True)
class SimulateConfig:
    n_months: int = 60
    aerial_total_t0: float = 4000.0
    class_proportions: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_PROPORTIONS))
    coefficients: RateCoefficients | None = None  # default: prior means

    def __post_init__(self):
        if self.n_months < 0:
            raise ValueError("n_months must be >= 0")
        missing = set(DEFAULT_CLASS_PROPORTIONS) - set(self.class_proportions)
        if missing:
            raise ValueError(f"class_proportions missing {sorted(missing)}")
        total = sum(self.class_proportions.values())
        if not np.isclose(total, 1.0, atol=1e-6):
            raise ValueError(f"class_proportions must sum to 1, got {total}")


@dataclass(frozen=True)
class FitConfig:
    aerial_total_t0: float | None = None  # default: first aerial estimate


@dataclass(frozen=True)
class ValidateConfig:
    frame_area: float = 6665.6
    frame_units: int = 705
    n_bootstrap: int = 10
    n_series: int = 10
    reference_iters: int = 20000
    reference_burn_in: int = 4000
    short_iters: int = 2000
    short_burn_in: int = 200
    n_seeds: int = 10

    def __post_init__(self):
        if self.n_bootstrap <= 0 or self.n_series <= 0:
            raise ValueError("n_bootstrap and n_series must be positive")


@dataclass(frozen=True)
class RunConfig:
    output_dir: Path
    seed: int
    paths: dict                 # ground / aerial / covariates / units
    hyper: HyperParams
    priors: PriorSpec
    chain: ChainConfig
    simulate: SimulateConfig
    fit: FitConfig
    validate: ValidateConfig

    def path(self, name: str, required: bool = True) -> Path | None:
        p = self.paths.get(name)
        if p is None:
            if required:
                raise ValueError(f"config does not declare a '{name}' data path")
            return None
        return Path(p)

    def simulate_coefficients(self) -> RateCoefficients:
        if self.simulate.coefficients is not None:
            return self.simulate.coefficients
        return self.priors.mean_coefficients()


def _coeff_blocks(raw: dict, what: str) -> dict:
    out = {}
    for name, vec in raw.items():
        if name not in BLOCK_NAMES:
            raise ValueError(f"{what}: unknown coefficient block '{name}' "
                             f"(expected one of {', '.join(BLOCK_NAMES)})")
        arr = np.asarray(vec, dtype=float)
        if arr.shape != (BLOCK_SIZES[name],):
            raise ValueError(f"{what}: block '{name}' must have "
                             f"{BLOCK_SIZES[name]} entries, got {arr.shape}")
        out[name] = arr
    return out


def _priors_from(raw: dict | None) -> PriorSpec:
    base = PriorSpec.default()
    if not raw:
        return base
    means = {n: base.means[n].copy() for n in BLOCK_NAMES}
    sds = {n: base.sds[n].copy() for n in BLOCK_NAMES}
    for name, spec in raw.items():
        if name not in BLOCK_NAMES:
            raise ValueError(f"priors: unknown block '{name}'")
        if "mean" in spec:
            means[name] = _coeff_blocks({name: spec["mean"]}, "priors.mean")[name]
        if "sd" in spec:
            sds[name] = _coeff_blocks({name: spec["sd"]}, "priors.sd")[name]
    return PriorSpec(means=means, sds=sds)


def _only_keys(raw: dict, allowed, where: str) -> dict:
    unknown = set(raw) - set(allowed)
    if unknown:
        raise ValueError(f"{where}: unknown key(s) {sorted(unknown)}")
    return raw


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a YAML run configuration.

    ``overrides`` may carry CLI-level settings: seed, n_iter, burn_in,
    aerial_rate, output_dir.
    """
    path = Path(path)
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    overrides = overrides or {}

    paths = dict(raw.get("data") or {})
    _only_keys(paths, ("ground", "aerial", "covariates", "units"), "data")
    for name, p in paths.items():
        if p is not None:
            resolved = (path.parent / p) if not Path(p).is_absolute() else Path(p)
            if not resolved.exists():
                raise ValueError(f"data.{name}: file not found: {resolved}")
            paths[name] = resolved

    hyper_raw = dict(raw.get("hyper") or {})
    _only_keys(hyper_raw, HyperParams.__dataclass_fields__, "hyper")
    if "aerial_rate" in overrides and overrides["aerial_rate"] is not None:
        hyper_raw["aerial_rate"] = overrides["aerial_rate"]
    hyper = HyperParams(**hyper_raw)

    priors = _priors_from(raw.get("priors"))

    chain_raw = dict(raw.get("chain") or {})
    _only_keys(chain_raw, ChainConfig.__dataclass_fields__, "chain")
    if "blocks" in chain_raw:
        chain_raw["blocks"] = tuple(chain_raw["blocks"])
    chain_raw.setdefault("seed", int(raw.get("seed", 0)))
    chain = ChainConfig(**chain_raw)
    if overrides.get("n_iter") is not None:
        chain = replace(chain, n_iter=int(overrides["n_iter"]))
    if overrides.get("burn_in") is not None:
        chain = replace(chain, burn_in=int(overrides["burn_in"]))

    sim_raw = dict(raw.get("simulate") or {})
    _only_keys(sim_raw, ("n_months", "aerial_total_t0", "class_proportions",
                         "coefficients"), "simulate")
    if "coefficients" in sim_raw and sim_raw["coefficients"] is not None:
        blocks = _coeff_blocks(sim_raw["coefficients"], "simulate.coefficients")
        full = {n: np.zeros(BLOCK_SIZES[n]) for n in BLOCK_NAMES}
        full.update(blocks)
        sim_raw["coefficients"] = RateCoefficients(**full)
    simulate = SimulateConfig(**sim_raw)

    fit_raw = dict(raw.get("fit") or {})
    _only_keys(fit_raw, ("aerial_total_t0",), "fit")
    fit = FitConfig(**fit_raw)

    val_raw = dict(raw.get("validate") or {})
    _only_keys(val_raw, ValidateConfig.__dataclass_fields__, "validate")
    validate = ValidateConfig(**val_raw)

    seed = int(overrides.get("seed") if overrides.get("seed") is not None
               else raw.get("seed", 0))
    if overrides.get("seed") is not None:
        chain = replace(chain, seed=seed)

    out_dir = overrides.get("output_dir") or raw.get("output_dir", "out")
    out_dir = Path(out_dir)
    if not out_dir.is_absolute():
        out_dir = path.parent / out_dir

    known = {"data", "hyper", "priors", "chain", "simulate", "fit", "validate",
             "seed", "output_dir"}
    _only_keys(raw, known, str(path))

    return RunConfig(output_dir=out_dir, seed=seed, paths=paths, hyper=hyper,
                     priors=priors, chain=chain, simulate=simulate, fit=fit,
                     validate=validate)
