"""Metrics and the seeded multi-replication experiment harness."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import LatentIVError, NumericError, SpecError
from .estimators import estimate_effect
from .model import VaeConfig
from .scm import ScenarioSpec, generate

__all__ = ["estimation_bias", "pcc_profile", "pdf_compare", "replicate",
           "ReplicationSummary", "PdfComparison"]


def estimation_bias(beta_hat: float, beta_true: float) -> float:
    """|(beta_hat - beta_true) / beta_true| * 100, in percent."""
    if beta_true == 0:
        raise SpecError("beta_true must be nonzero")
    return abs((beta_hat - beta_true) / beta_true) * 100.0


def pcc_profile(z, c):
    """Pearson correlation of z against each column of c.

    Returns (per-column correlations, mean of their absolute values).
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 1:
        c = c[:, None]
    if len(z) < 3:
        raise SpecError("pcc_profile needs at least 3 rows")
    zc = z - z.mean()
    z_ss = np.dot(zc, zc)
    if z_ss == 0:
        raise NumericError("zero-variance column: z")
    out = np.empty(c.shape[1])
    for j in range(c.shape[1]):
        cc = c[:, j] - c[:, j].mean()
        c_ss = np.dot(cc, cc)
        if c_ss == 0:
            raise NumericError(f"zero-variance column: c[{j}]")
        out[j] = np.dot(zc, cc) / np.sqrt(z_ss * c_ss)
    return out, float(np.mean(np.abs(out)))


@dataclass
class PdfComparison:
    bin_edges: np.ndarray
    true_mass: np.ndarray
    learned_mass: np.ndarray
    l1_distance: float

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("bin_left,bin_right,true_mass,learned_mass\n")
            for a, b, t, l in zip(self.bin_edges[:-1], self.bin_edges[1:],
                                  self.true_mass, self.learned_mass):
                fh.write(f"{float(a)!r},{float(b)!r},{float(t)!r},{float(l)!r}\n")


def pdf_compare(true_z, learned_z, bins: int = 50,
                support: tuple = (-4.0, 4.0)) -> PdfComparison:
    """Histogram comparison of two standardized samples.

    Both inputs are standardized internally; the learned sample is
    sign-aligned by the sign of its correlation with the true one (VAE
    latents carry an arbitrary sign).  Out-of-range mass goes to the edge
    bins so each mass vector sums to exactly 1.
    """
    if bins < 2:
        raise SpecError("bins must be >= 2")
    true_z = np.asarray(true_z, dtype=np.float64).ravel()
    learned_z = np.asarray(learned_z, dtype=np.float64).ravel()
    for name, v in (("true_z", true_z), ("learned_z", learned_z)):
        if v.std() == 0:
            raise NumericError(f"degenerate (constant) input: {name}")
    true_s = (true_z - true_z.mean()) / true_z.std()
    learned_s = (learned_z - learned_z.mean()) / learned_z.std()
    if len(true_s) == len(learned_s):
        corr = float(np.dot(true_s, learned_s))
        if corr < 0:
            learned_s = -learned_s

    edges = np.linspace(support[0], support[1], bins + 1)

    def mass(v):
        counts, _ = np.histogram(np.clip(v, support[0], support[1]), bins=edges)
        return counts / len(v)

    tm, lm = mass(true_s), mass(learned_s)
    return PdfComparison(bin_edges=edges, true_mass=tm, learned_mass=lm,
                         l1_distance=float(np.abs(tm - lm).sum()))


@dataclass
class ReplicationSummary:
    scenario: ScenarioSpec
    estimator: str
    reps: int
    base_seed: int
    records: list  # one EstimationReport dict per replication
    mean_beta: float = field(init=False)
    mean_bias: float = field(init=False)
    std_bias: float = field(init=False)

    def __post_init__(self):
        betas = [r["beta_hat"] for r in self.records]
        biases = [r["bias_percent"] for r in self.records]
        self.mean_beta = float(np.mean(betas))
        if all(b is not None for b in biases):
            self.mean_bias = float(np.mean(biases))
            self.std_bias = float(np.std(biases, ddof=1)) if len(biases) > 1 else 0.0
        else:
            self.mean_bias = None
            self.std_bias = None

    def to_json(self) -> str:
        d = asdict(self)
        d["scenario"] = asdict(self.scenario)
        return json.dumps(d, indent=2)

    def csv_row(self) -> dict:
        return {
            "generator": self.scenario.generator,
            "n": self.scenario.n,
            "estimator": self.estimator,
            "mean_bias": self.mean_bias,
            "std_bias": self.std_bias,
            "reps": self.reps,
            "base_seed": self.base_seed,
        }


def _one_replication(args):
    scenario, cfg, estimator, conditioning, index = args
    spec = ScenarioSpec(generator=scenario.generator, n=scenario.n,
                        outcome=scenario.outcome, siv_count=scenario.siv_count,
                        dim=scenario.dim, seed=scenario.seed + index)
    dataset = generate(spec)
    rep_cfg = VaeConfig(**{**_cfg_dict(cfg), "seed": cfg.seed + index})
    try:
        report = estimate_effect(dataset, rep_cfg, estimator=estimator,
                                 conditioning=conditioning)
    except LatentIVError as exc:
        raise type(exc)(f"replication {index}: {exc}") from exc
    d = report.to_dict()
    d["replication"] = index
    return index, d


def _cfg_dict(cfg: VaeConfig) -> dict:
    d = asdict(cfg)
    d["hidden"] = tuple(d["hidden"])
    return d


def replicate(scenario: ScenarioSpec, cfg: VaeConfig, estimator: str,
              reps: int, conditioning: str = "c",
              jobs: int = 1) -> ReplicationSummary:
    """Generate -> estimate over `reps` derived seeds and aggregate.

    Replication i uses scenario seed base+i and model seed cfg.seed+i.  The
    summary is independent of completion order (records are sorted by
    replication index), so `jobs` > 1 is safe.
    """
    if reps < 1:
        raise SpecError("reps must be >= 1")
    tasks = [(scenario, cfg, estimator, conditioning, i) for i in range(reps)]
    if jobs > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_replication, tasks))
    else:
        results = [_one_replication(t) for t in tasks]
    records = [rec for _, rec in sorted(results)]
    return ReplicationSummary(scenario=scenario, estimator=estimator,
                              reps=reps, base_seed=scenario.seed,
                              records=records)
