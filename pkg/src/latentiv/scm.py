"""Seeded synthetic structural causal models with latent confounders.

Every generator emits a dataset whose treatment effect on the outcome is
fixed at 2.0, together with the latent ground truth (the unmeasured
instrument Z and confounders) for diagnostics.  Exogenous draws use
per-variable substreams of a counter-based RNG (Philox), so adding a column
never perturbs the draws of existing ones.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import SpecError

__all__ = ["ScenarioSpec", "Dataset", "propensity_single_siv",
           "generate_single_siv", "generate_multi_siv", "generate_highdim",
           "generate"]

BETA_TRUE = 2.0

# sqrt of 0.5: N(0, 0.5) is read as (mean, variance)
_NOISE_STD = np.sqrt(0.5)


@dataclass(frozen=True)
class ScenarioSpec:
    generator: str  # single_siv | multi_siv | highdim
    n: int
    outcome: str = "linear"  # linear | nonlinear
    siv_count: int | None = None  # multi_siv only
    dim: int | None = None  # highdim only
    seed: int = 0

    def __post_init__(self):
        if self.generator not in ("single_siv", "multi_siv", "highdim"):
            raise SpecError(f"unknown generator {self.generator!r}")
        if self.n < 2:
            raise SpecError("n must be >= 2")
        if self.outcome not in ("linear", "nonlinear"):
            raise SpecError(f"unknown outcome kind {self.outcome!r}")
        if self.generator == "multi_siv":
            if self.siv_count not in (2, 3):
                raise SpecError("siv_count must be 2 or 3 for multi_siv")
        elif self.siv_count is not None:
            raise SpecError("siv_count only applies to multi_siv")
        if self.generator == "highdim":
            if self.dim not in (8, 16, 32, 64):
                raise SpecError("dim must be one of 8, 16, 32, 64")
        elif self.dim is not None:
            raise SpecError("dim only applies to highdim")


@dataclass
class Dataset:
    """Observed covariates/treatment/outcome plus optional ground truth."""

    x: np.ndarray  # n x d covariates (SIV columns included)
    w: np.ndarray  # n binary treatment
    y: np.ndarray  # n outcome
    columns: list
    beta_true: float | None = None
    latents: dict = field(default_factory=dict)  # diagnostics only, not in x

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.w = np.asarray(self.w, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.shape != (len(self.w), len(self.columns)):
            raise SpecError("covariate matrix shape does not match columns")
        if not np.isin(self.w, (0.0, 1.0)).all():
            raise SpecError("treatment vector must be binary")
        for arr in (self.x, self.w, self.y):
            if not np.all(np.isfinite(arr)):
                raise SpecError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return len(self.w)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.x[:, self.columns.index(name)]

    def to_csv(self, path) -> None:
        """Write observed data; latent diagnostics go to `<path>.latent.csv`."""
        path = str(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns + ["W", "Y"])
            for i in range(self.n):
                writer.writerow([repr(float(v)) for v in self.x[i]]
                                + [repr(float(self.w[i])), repr(float(self.y[i]))])
        if self.latents:
            with open(path + ".latent.csv", "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                names = sorted(self.latents)
                writer.writerow(names)
                cols = [self.latents[k] for k in names]
                for row in zip(*cols):
                    writer.writerow([repr(float(v)) for v in row])


def _stream(seed: int, name: str) -> np.random.Generator:
    """Independent substream keyed by (seed, column name)."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(
        np.random.Philox(key=[np.uint64(seed) & np.uint64(0xFFFFFFFFFFFFFFFF),
                              np.uint64(key)]))


def propensity_single_siv(u, z, x4, x5, u2):
    """P(W=1) = 1 / (1 + exp(2 - 2u - 2z - 3*x4 - x5 - 3*u2))."""
    logit = -(2.0 - 2.0 * u - 2.0 * z - 3.0 * x4 - x5 - 3.0 * u2)
    return _expit(logit)


def _expit(logit):
    logit = np.asarray(logit, dtype=np.float64)
    out = np.empty_like(logit)
    pos = logit >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logit[pos]))
    e = np.exp(logit[~pos])
    out[~pos] = e / (1.0 + e)
    # keep strictly inside (0, 1) despite float saturation
    out = np.clip(out, 1e-308, np.nextafter(1.0, 0.0))
    return out if out.ndim else float(out)


def _base_structure(spec: ScenarioSpec, z_count: int = 1):
    """Draw the shared part of all generators.

    Returns (columns dict for X, latents dict, z_list).  The instrument block
    follows: Z_k ~ N(0,1), S_k = N(0,1) + Z_k + eps with eps ~ N(0, 0.5).
    """
    n, seed = spec.n, spec.seed
    z_list, s_cols = [], {}
    for k in range(1, z_count + 1):
        tag = "" if z_count == 1 else str(k)
        z = _stream(seed, f"Z{tag}").standard_normal(n)
        eps_s = _stream(seed, f"eps_S{tag}").standard_normal(n) * _NOISE_STD
        s = _stream(seed, f"S{tag}_base").standard_normal(n) + z + eps_s
        z_list.append(z)
        s_cols[f"S{tag}"] = s

    u1 = _stream(seed, "U1").standard_normal(n)
    u2 = _stream(seed, "U2").standard_normal(n)
    x1 = _stream(seed, "X1").standard_normal(n)
    x3 = _stream(seed, "X3").standard_normal(n)
    x5 = _stream(seed, "X5").standard_normal(n)
    x7 = _stream(seed, "X7").standard_normal(n)
    eps = {i: _stream(seed, f"eps_{i}").standard_normal(n) * _NOISE_STD
           for i in (1, 2, 3, 4)}
    u = _stream(seed, "U_base").standard_normal(n) + 0.8 * x1 + eps[1]
    x2 = _stream(seed, "X2_base").standard_normal(n) + 2.0 * u + eps[2]
    x4 = _stream(seed, "X4_base").standard_normal(n) + u1 + eps[3]
    x6 = _stream(seed, "X6_base").standard_normal(n) + 0.6 * u2 + eps[4]

    xcols = dict(s_cols)
    xcols.update({"X1": x1, "X2": x2, "X3": x3, "X4": x4,
                  "X5": x5, "X6": x6, "X7": x7})
    latents = {"U": u, "U1": u1, "U2": u2}
    for k, z in enumerate(z_list, start=1):
        latents["Z" if z_count == 1 else f"Z{k}"] = z
    return xcols, latents, z_list


def _treatment(spec: ScenarioSpec, z_list, u, x4, x5, u2) -> np.ndarray:
    # One -2*Z_k term per instrument; covariate terms as in the one-SIV case.
    logit = -2.0 + 2.0 * u + 3.0 * x4 + x5 + 3.0 * u2
    for z in z_list:
        logit = logit + 2.0 * z
    prob = _expit(logit)
    draws = _stream(spec.seed, "W").random(spec.n)
    return (draws < prob).astype(np.float64)


def _outcome(spec: ScenarioSpec, w, u, u1, x3, x6, x7) -> np.ndarray:
    eps_w = _stream(spec.seed, "eps_w").standard_normal(spec.n)
    x6_term = x6 ** 2 if spec.outcome == "nonlinear" else x6
    return (2.0 + BETA_TRUE * w + 2.0 * u + 3.0 * u1
            + 2.0 * x3 + 2.0 * x6_term + 2.0 * x7 + eps_w)


def _assemble(spec: ScenarioSpec, xcols: dict, latents: dict,
              z_list) -> Dataset:
    u, u1, u2 = latents["U"], latents["U1"], latents["U2"]
    w = _treatment(spec, z_list, u, xcols["X4"], xcols["X5"], u2)
    y = _outcome(spec, w, u, u1, xcols["X3"], xcols["X6"], xcols["X7"])
    columns = list(xcols)
    x = np.column_stack([xcols[c] for c in columns])
    return Dataset(x=x, w=w, y=y, columns=columns,
                   beta_true=BETA_TRUE, latents=latents)


def generate_single_siv(spec: ScenarioSpec) -> Dataset:
    """One latent instrument Z with one measured surrogate S (8 covariates)."""
    if spec.generator != "single_siv":
        raise SpecError("spec.generator must be 'single_siv'")
    xcols, latents, z_list = _base_structure(spec, z_count=1)
    return _assemble(spec, xcols, latents, z_list)


def generate_multi_siv(spec: ScenarioSpec) -> Dataset:
    """Two or three latent instruments, each with its own surrogate column."""
    if spec.generator != "multi_siv":
        raise SpecError("spec.generator must be 'multi_siv'")
    xcols, latents, z_list = _base_structure(spec, z_count=spec.siv_count)
    return _assemble(spec, xcols, latents, z_list)


def generate_highdim(spec: ScenarioSpec) -> Dataset:
    """Single-SIV process padded with independent standard-normal covariates."""
    if spec.generator != "highdim":
        raise SpecError("spec.generator must be 'highdim'")
    xcols, latents, z_list = _base_structure(spec, z_count=1)
    for j in range(8, spec.dim):
        name = f"X{j}"
        xcols[name] = _stream(spec.seed, name).standard_normal(spec.n)
    return _assemble(spec, xcols, latents, z_list)


_GENERATORS = {
    "single_siv": generate_single_siv,
    "multi_siv": generate_multi_siv,
    "highdim": generate_highdim,
}


def generate(spec: ScenarioSpec) -> Dataset:
    return _GENERATORS[spec.generator](spec)
