"""Disentangled instrument-learning VAE.

Two Gaussian encoders map the covariates X to a latent instrument block Z
and a latent confounder block C.  A shared decoder reconstructs X from
(Z, C); an auxiliary head predicts the treatment from (Z, C); the outcome
head sees only (W, C), which encodes the exclusion restriction that makes
Z usable as an instrument.  Training minimizes

    -ELBO - alpha_w * E[log q(W|Z,C)] - alpha_y * E[log q(Y|W,C)] + OPR,

where OPR is an orthogonality-promoting penalty that pushes the Z and C
blocks apart.  The penalty has two terms: the batch-mean per-row cosine
between the (zero-padded) Z and C rows (`opr`), plus a weighted mean
squared *batch* correlation over every (Z_j, C_k) column pair
(`latent_decorrelation`), which directly targets the Pearson correlations
the disentanglement diagnostics measure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import (AdamState, MlpParams, Tensor, adam_step, concat,
                       mlp_apply, mlp_init)
from .errors import NumericError, ShapeMismatchError, SpecError, TrainingError
from .scm import Dataset

__all__ = ["VaeConfig", "ModelParams", "ForwardOutputs", "model_forward",
           "kl_diag_gauss", "opr", "latent_decorrelation", "total_loss",
           "train", "extract_iv"]

_SIGMA_FLOOR = 1e-3
_LOG_2PI = np.log(2.0 * np.pi)
# weight of the Z/C decorrelation penalty in the training loss
_DECORRELATION_WEIGHT = 10.0


@dataclass(frozen=True)
class VaeConfig:
    dim_z: int = 1
    dim_c: int = 10
    hidden: tuple = (64, 64)
    alpha_w: float = 100.0
    alpha_y: float = 100.0
    opr_enabled: bool = True
    batch_size: int = 256
    epochs: int = 100
    lr: float = 1e-3
    outcome: str = "continuous"  # continuous | binary
    seed: int = 0

    def __post_init__(self):
        if self.dim_z < 1 or self.dim_c < 1:
            raise SpecError("dim_z and dim_c must be >= 1")
        if self.batch_size < 2:
            raise SpecError("batch_size must be >= 2")
        if self.epochs < 1:
            raise SpecError("epochs must be >= 1")
        if self.outcome not in ("continuous", "binary"):
            raise SpecError(f"unknown outcome kind {self.outcome!r}")
        if self.alpha_w < 0 or self.alpha_y < 0:
            raise SpecError("alpha_w and alpha_y must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "VaeConfig":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


@dataclass
class ModelParams:
    """All network weights plus the input/output standardization stats."""

    config: VaeConfig
    encoder_z: MlpParams  # x -> (mu_z raw, sigma_z raw)
    encoder_c: MlpParams  # x -> (mu_c raw, sigma_c raw)
    decoder_x: MlpParams  # (z, c) -> (x means, x sigmas raw)
    predictor_w: MlpParams  # (z, c) -> treatment logit
    outcome_nets: dict  # continuous: mu1/mu0/sigma1/sigma0 over c; binary: logit over (w, c)
    x_mean: np.ndarray = None
    x_std: np.ndarray = None
    y_mean: float = 0.0
    y_std: float = 1.0
    loss_trace: list = field(default_factory=list)  # per-epoch mean loss

    def networks(self) -> list:
        nets = [self.encoder_z, self.encoder_c, self.decoder_x, self.predictor_w]
        nets.extend(self.outcome_nets[k] for k in sorted(self.outcome_nets))
        return nets

    def tensors(self) -> list:
        out = []
        for net in self.networks():
            out.extend(net.tensors())
        return out

    def save(self, path) -> None:
        blob = {
            "format": "latentiv-model",
            "version": 1,
            "config": {**asdict(self.config), "hidden": list(self.config.hidden)},
            "x_mean": self.x_mean.tolist() if self.x_mean is not None else None,
            "x_std": self.x_std.tolist() if self.x_std is not None else None,
            "y_mean": self.y_mean,
            "y_std": self.y_std,
            "loss_trace": self.loss_trace,
            "nets": {},
        }
        names = ["encoder_z", "encoder_c", "decoder_x", "predictor_w"]
        nets = {n: getattr(self, n) for n in names}
        nets.update(self.outcome_nets)
        for name, net in nets.items():
            blob["nets"][name] = [
                {"weight": l.weight.data.tolist(), "bias": l.bias.data.tolist(),
                 "activation": l.activation}
                for l in net.layers
            ]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path) -> "ModelParams":
        from .autodiff import MlpLayer
        with open(path, encoding="utf-8") as fh:
            blob = json.load(fh)
        if blob.get("format") != "latentiv-model" or blob.get("version") != 1:
            raise SpecError("unrecognized model blob")
        cfg = VaeConfig.from_dict(blob["config"])

        def build(spec):
            return MlpParams([
                MlpLayer(Tensor(l["weight"], requires_grad=True),
                         Tensor(l["bias"], requires_grad=True), l["activation"])
                for l in spec
            ])

        nets = {name: build(spec) for name, spec in blob["nets"].items()}
        core = {n: nets.pop(n)
                for n in ["encoder_z", "encoder_c", "decoder_x", "predictor_w"]}
        return cls(config=cfg, outcome_nets=nets,
                   x_mean=np.asarray(blob["x_mean"]) if blob["x_mean"] is not None else None,
                   x_std=np.asarray(blob["x_std"]) if blob["x_std"] is not None else None,
                   y_mean=blob["y_mean"], y_std=blob["y_std"],
                   loss_trace=list(blob["loss_trace"]), **core)


@dataclass
class ForwardOutputs:
    mu_z: Tensor
    sigma_z: Tensor
    mu_c: Tensor
    sigma_c: Tensor
    z: Tensor
    c: Tensor
    x_mean: Tensor
    x_sigma: Tensor
    w_logit: Tensor
    w_prob: Tensor
    y_mean: Tensor = None  # continuous outcome
    y_sigma: Tensor = None
    y_logit: Tensor = None  # binary outcome


def init_params(cfg: VaeConfig, x_dim: int) -> ModelParams:
    rng = np.random.default_rng(cfg.seed)
    h = list(cfg.hidden)
    enc_z = mlp_init([x_dim] + h + [2 * cfg.dim_z], rng)
    enc_c = mlp_init([x_dim] + h + [2 * cfg.dim_c], rng)
    dec = mlp_init([cfg.dim_z + cfg.dim_c] + h + [2 * x_dim], rng)
    g_w = mlp_init([cfg.dim_z + cfg.dim_c] + h + [1], rng)
    if cfg.outcome == "continuous":
        outcome = {name: mlp_init([cfg.dim_c] + h + [1], rng)
                   for name in ("mu1", "mu0", "sigma1", "sigma0")}
    else:
        outcome = {"logit": mlp_init([1 + cfg.dim_c] + h + [1], rng)}
    return ModelParams(config=cfg, encoder_z=enc_z, encoder_c=enc_c,
                       decoder_x=dec, predictor_w=g_w, outcome_nets=outcome)


def _gaussian_heads(raw: Tensor, dim: int):
    mu = raw.cols(0, dim)
    sigma = raw.cols(dim, 2 * dim).softplus() + _SIGMA_FLOOR
    return mu, sigma


def model_forward(params: ModelParams, x, w, y, noise_z, noise_c) -> ForwardOutputs:
    """One differentiable pass over a batch.

    `x` is (n, d) standardized covariates, `w`/`y` are (n, 1) columns and
    `noise_z`/`noise_c` are standard-normal arrays of shape (n, dim_z) and
    (n, dim_c).  The outcome head never sees z.
    """
    cfg = params.config
    x = x if isinstance(x, Tensor) else Tensor(x)
    w = np.asarray(w, dtype=np.float64).reshape(-1, 1)
    n = x.data.shape[0]
    if np.shape(noise_z) != (n, cfg.dim_z) or np.shape(noise_c) != (n, cfg.dim_c):
        raise ShapeMismatchError("noise shapes must be (n, dim_z) and (n, dim_c)")

    mu_z, sigma_z = _gaussian_heads(mlp_apply(params.encoder_z, x), cfg.dim_z)
    mu_c, sigma_c = _gaussian_heads(mlp_apply(params.encoder_c, x), cfg.dim_c)
    z = mu_z + sigma_z * Tensor(noise_z)
    c = mu_c + sigma_c * Tensor(noise_c)

    latent = concat([z, c], axis=1)
    x_mean, x_sigma = _gaussian_heads(mlp_apply(params.decoder_x, latent),
                                      x.data.shape[1])
    w_logit = mlp_apply(params.predictor_w, latent)
    out = ForwardOutputs(mu_z=mu_z, sigma_z=sigma_z, mu_c=mu_c, sigma_c=sigma_c,
                         z=z, c=c, x_mean=x_mean, x_sigma=x_sigma,
                         w_logit=w_logit, w_prob=w_logit.sigmoid())

    w_col = Tensor(w)
    if cfg.outcome == "continuous":
        mu1 = mlp_apply(params.outcome_nets["mu1"], c)
        mu0 = mlp_apply(params.outcome_nets["mu0"], c)
        s1 = mlp_apply(params.outcome_nets["sigma1"], c).softplus() + _SIGMA_FLOOR
        s0 = mlp_apply(params.outcome_nets["sigma0"], c).softplus() + _SIGMA_FLOOR
        out.y_mean = w_col * mu1 + (1.0 - w_col) * mu0
        out.y_sigma = w_col * s1 + (1.0 - w_col) * s0
    else:
        out.y_logit = mlp_apply(params.outcome_nets["logit"], concat([w_col, c]))
    return out


def kl_diag_gauss(mu, sigma):
    """KL(N(mu, diag sigma^2) || N(0, I)) = 0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1).

    Accepts 1-D vectors (returns a float) or Tensors (differentiable, summed
    over the last axis and averaged over rows).
    """
    if isinstance(mu, Tensor) or isinstance(sigma, Tensor):
        mu = mu if isinstance(mu, Tensor) else Tensor(mu)
        sigma = sigma if isinstance(sigma, Tensor) else Tensor(sigma)
        if np.any(sigma.data <= 0):
            raise NumericError("sigma must be strictly positive")
        var = sigma * sigma
        per_row = (mu * mu + var - var.log() - 1.0).sum(axis=-1) * 0.5
        return per_row.mean() if per_row.data.ndim else per_row
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise NumericError("sigma must be strictly positive")
    var = sigma ** 2
    return float(0.5 * np.sum(mu ** 2 + var - np.log(var) - 1.0))


def _pad_cols(t: Tensor, width: int) -> Tensor:
    if t.data.shape[1] == width:
        return t
    pad = Tensor(np.zeros((t.data.shape[0], width - t.data.shape[1])))
    return concat([t, pad], axis=1)


def opr(z_batch, c_batch):
    """Batch-mean cosine similarity between paired rows of z and c.

    When the blocks have different widths the shorter row is zero-padded,
    which leaves the inner product over the shared coordinates.  Returns a
    float for arrays, a differentiable scalar Tensor for Tensors.
    """
    is_tensor = isinstance(z_batch, Tensor) or isinstance(c_batch, Tensor)
    z = z_batch if isinstance(z_batch, Tensor) else Tensor(np.atleast_2d(z_batch))
    c = c_batch if isinstance(c_batch, Tensor) else Tensor(np.atleast_2d(c_batch))
    for name, t in (("z", z), ("c", c)):
        norms = np.linalg.norm(t.data, axis=1)
        bad = np.flatnonzero(norms == 0)
        if bad.size:
            raise NumericError(f"zero-norm {name} row at index {int(bad[0])}")
    width = max(z.data.shape[1], c.data.shape[1])
    z, c = _pad_cols(z, width), _pad_cols(c, width)
    num = (z * c).sum(axis=1)
    den = (z * z).sum(axis=1).sqrt() * (c * c).sum(axis=1).sqrt()
    mean_cs = (num / den).mean()
    return mean_cs if is_tensor else float(mean_cs.data)


def latent_decorrelation(z_batch, c_batch):
    """Mean squared batch correlation over all (Z_j, C_k) column pairs.

    The training-time disentanglement penalty: unlike the per-row cosine
    (`opr`) it measures statistical dependence across the batch, the same
    quantity the PCC diagnostics report.  Returns a float for arrays, a
    differentiable scalar Tensor for Tensors.
    """
    is_tensor = isinstance(z_batch, Tensor) or isinstance(c_batch, Tensor)
    z = z_batch if isinstance(z_batch, Tensor) else Tensor(np.atleast_2d(z_batch))
    c = c_batch if isinstance(c_batch, Tensor) else Tensor(np.atleast_2d(c_batch))
    if z.data.shape[0] < 2:
        raise NumericError("decorrelation needs at least 2 rows")
    for name, t in (("z", z), ("c", c)):
        bad = np.flatnonzero(t.data.std(axis=0) == 0)
        if bad.size:
            raise NumericError(f"zero-variance {name} column {int(bad[0])}")
    zc = z - z.mean(axis=0, keepdims=True)
    cc = c - c.mean(axis=0, keepdims=True)
    terms = []
    for j in range(z.data.shape[1]):
        zj = zc.cols(j, j + 1)
        nj = (zj * zj).sum().sqrt()
        for k in range(c.data.shape[1]):
            ck = cc.cols(k, k + 1)
            nk = (ck * ck).sum().sqrt()
            corr = (zj * ck).sum() / (nj * nk)
            terms.append(corr * corr)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    mean_sq = total * (1.0 / len(terms))
    return mean_sq if is_tensor else float(mean_sq.data)


def _gauss_loglik(value: np.ndarray, mean: Tensor, sigma: Tensor) -> Tensor:
    target = Tensor(np.asarray(value, dtype=np.float64))
    resid = (target - mean) / sigma
    return (sigma.log() + resid * resid * 0.5 + 0.5 * _LOG_2PI) * -1.0


def _bernoulli_loglik(value: np.ndarray, logit: Tensor) -> Tensor:
    # value*logit - softplus(logit), the stable form of v*log p + (1-v)*log(1-p)
    return Tensor(np.asarray(value, dtype=np.float64)) * logit - logit.softplus()


def total_loss(params: ModelParams, x, w, y, noise_z, noise_c,
               forward: ForwardOutputs = None) -> Tensor:
    """The minimized objective (negative ELBO + auxiliary terms + OPR)."""
    cfg = params.config
    out = forward if forward is not None else model_forward(
        params, x, w, y, noise_z, noise_c)

    x_arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    recon = _gauss_loglik(x_arr, out.x_mean, out.x_sigma).sum(axis=1).mean()
    kl_z = kl_diag_gauss(out.mu_z, out.sigma_z)
    kl_c = kl_diag_gauss(out.mu_c, out.sigma_c)
    elbo = recon - kl_z - kl_c

    w_col = np.asarray(w, dtype=np.float64).reshape(-1, 1)
    log_q_w = _bernoulli_loglik(w_col, out.w_logit).mean()
    y_col = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    if cfg.outcome == "continuous":
        log_q_y = _gauss_loglik(y_col, out.y_mean, out.y_sigma).mean()
    else:
        log_q_y = _bernoulli_loglik(y_col, out.y_logit).mean()

    loss = (elbo * -1.0) - cfg.alpha_w * log_q_w - cfg.alpha_y * log_q_y
    if cfg.opr_enabled:
        loss = (loss + opr(out.z, out.c)
                + _DECORRELATION_WEIGHT * latent_decorrelation(out.z, out.c))
    for name, term in (("reconstruction", recon), ("kl_z", kl_z),
                       ("kl_c", kl_c), ("log_q_w", log_q_w),
                       ("log_q_y", log_q_y)):
        if not np.all(np.isfinite(term.data)):
            raise NumericError(f"non-finite loss term: {name}")
    return loss


def train(dataset: Dataset, cfg: VaeConfig) -> ModelParams:
    """Minibatch Adam training; deterministic for a fixed config seed."""
    x_raw = dataset.x
    y_raw = dataset.y
    if cfg.outcome == "binary" and not np.isin(y_raw, (0.0, 1.0)).all():
        raise SpecError("binary outcome configured but y is not 0/1")

    params = init_params(cfg, x_raw.shape[1])
    params.x_mean = x_raw.mean(axis=0)
    params.x_std = x_raw.std(axis=0)
    if np.any(params.x_std == 0):
        raise SpecError("constant covariate column cannot be standardized")
    x = (x_raw - params.x_mean) / params.x_std
    if cfg.outcome == "continuous":
        params.y_mean = float(y_raw.mean())
        params.y_std = float(y_raw.std()) or 1.0
        y = (y_raw - params.y_mean) / params.y_std
    else:
        y = y_raw

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7261]))
    tensors = params.tensors()
    state = AdamState.for_arrays([t.data for t in tensors], lr=cfg.lr)
    n = dataset.n
    batch = min(cfg.batch_size, n)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n - batch + 1, batch):
            idx = order[start:start + batch]
            noise_z = rng.standard_normal((len(idx), cfg.dim_z))
            noise_c = rng.standard_normal((len(idx), cfg.dim_c))
            loss = total_loss(params, x[idx], dataset.w[idx], y[idx],
                              noise_z, noise_c)
            if not np.isfinite(loss.data):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            grads = [np.zeros_like(t.data) if t.grad is None else t.grad
                     for t in tensors]
            state, new_arrays = adam_step(state, [t.data for t in tensors], grads)
            for t, a in zip(tensors, new_arrays):
                t.data = a
            losses.append(float(loss.data))
        params.loss_trace.append(float(np.mean(losses)))
    return params


def encode(params: ModelParams, x_raw: np.ndarray):
    """Posterior means (mu_z, mu_c) for raw (unstandardized) covariates."""
    if params.x_mean is None:
        raise ShapeMismatchError("params are untrained (no standardization stats)")
    if x_raw.shape[1] != params.x_mean.shape[0]:
        raise ShapeMismatchError(
            f"covariate width {x_raw.shape[1]} != trained width {params.x_mean.shape[0]}")
    x = Tensor((x_raw - params.x_mean) / params.x_std)
    cfg = params.config
    mu_z, _ = _gaussian_heads(mlp_apply(params.encoder_z, x), cfg.dim_z)
    mu_c, _ = _gaussian_heads(mlp_apply(params.encoder_c, x), cfg.dim_c)
    return mu_z.data, mu_c.data


def extract_iv(params: ModelParams, dataset: Dataset) -> np.ndarray:
    """Standardized posterior-mean instrument, one column per latent dim."""
    mu_z, _ = encode(params, dataset.x)
    std = mu_z.std(axis=0)
    if np.any(std == 0):
        raise NumericError("degenerate encoder: zero-variance latent dimension")
    return (mu_z - mu_z.mean(axis=0)) / std
