"""WGAN-GP oversampling of the minority class in feature space."""

from __future__ import annotations

import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn

log = logging.getLogger(__name__)

PUBLISHED_LEARNING_RATE = 1e-10
REAL, SYNTHETIC = "real", "synthetic"


class GanError(RuntimeError):
    pass


@dataclass
class GanConfig:
    latent_dim: int = 64
    generator_hidden: tuple = (128, 256)
    critic_hidden: tuple = (256, 128)
    gp_lambda: float = 10.0
    n_critic: int = 5
    generator_steps: int = 2000
    batch_size: int = 64
    # The published rate is 1e-10 (PUBLISHED_LEARNING_RATE); at that rate the
    # networks do not move measurably within any practical step budget.
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.0
    beta2: float = 0.9
    slope: float = 0.2
    seed: int = 0

    def __post_init__(self):
        self.generator_hidden = tuple(self.generator_hidden)
        self.critic_hidden = tuple(self.critic_hidden)
        for name in ("latent_dim", "n_critic", "batch_size"):
            if getattr(self, name) < 1:
                raise GanError(f"{name} must be >= 1")
        if self.generator_steps < 0:
            raise GanError("generator_steps must be >= 0")
        if self.gp_lambda < 0:
            raise GanError("gp_lambda must be >= 0")


@dataclass
class FeatureScaler:
    """Per-column min-max map onto [0, 1]; constant columns map to 0."""
    lo: np.ndarray
    hi: np.ndarray

    @property
    def span(self):
        span = self.hi - self.lo
        return np.where(span > 0, span, 1.0)

    def apply(self, X):
        return (np.asarray(X, dtype=float) - self.lo) / self.span

    def invert(self, Z):
        out = np.asarray(Z, dtype=float) * self.span + self.lo
        # guard against rounding past the observed range
        return np.clip(out, self.lo, self.hi)


def fit_scaler(X) -> FeatureScaler:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise GanError("cannot fit a scaler on an empty matrix")
    return FeatureScaler(X.min(axis=0), X.max(axis=0))


@dataclass
class TrainingLog:
    critic_loss: list = field(default_factory=list)
    generator_loss: list = field(default_factory=list)
    penalty: list = field(default_factory=list)
    skipped_rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.generator_loss)


@dataclass
class GanModel:
    generator: nn.DenseNet
    critic: nn.DenseNet
    scaler: FeatureScaler
    config: GanConfig
    log: TrainingLog = field(default_factory=TrainingLog)

    @property
    def feature_dim(self) -> int:
        return self.generator.out_dim


def build_nets(feature_dim: int, cfg: GanConfig, seed_seq: np.random.SeedSequence):
    gseed, cseed = seed_seq.spawn(2)
    generator = nn.init_net([cfg.latent_dim, *cfg.generator_hidden, feature_dim],
                            ["leaky_relu"] * len(cfg.generator_hidden) + ["relu"],
                            seed=gseed, slope=cfg.slope)
    critic = nn.init_net([feature_dim, *cfg.critic_hidden, 1],
                         ["leaky_relu"] * len(cfg.critic_hidden) + ["identity"],
                         seed=cseed, slope=cfg.slope)
    return generator, critic


def critic_objective(critic: nn.DenseNet, real, fake, interp, gp_lambda: float, with_grad: bool = False):
    """Critic loss ``mean D(fake) - mean D(real) + gp_lambda * penalty``.

    Returns a dict with the loss and its terms; with ``with_grad`` it also
    carries ``grad``, the critic parameter gradient.
    """
    real, fake, interp = (np.asarray(a, dtype=float) for a in (real, fake, interp))
    if not (real.shape[1] == fake.shape[1] == interp.shape[1] == critic.in_dim):
        raise GanError("real, fake and interpolated batches must share the critic's input width")
    cache_r, d_real = nn.forward(critic, real)
    cache_f, d_fake = nn.forward(critic, fake)
    pen = nn.penalty_parameter_gradient(critic, interp)
    gap = float(d_fake.mean() - d_real.mean())
    result = {"loss": gap + gp_lambda * pen.value, "wasserstein_gap": gap,
              "penalty": pen.value, "skipped_rows": pen.skipped_rows}
    if with_grad:
        g_real = nn.backward(critic, cache_r, np.full_like(d_real, -1.0 / len(real)))
        g_fake = nn.backward(critic, cache_f, np.full_like(d_fake, 1.0 / len(fake)))
        result["grad"] = g_real + g_fake + pen.scaled(gp_lambda)
    return result


def _batch_indices(rng, n, size):
    return rng.choice(n, size=size, replace=size > n)


def train_wgan_gp(minority, cfg: GanConfig) -> GanModel:
    """Fit a WGAN-GP to ``minority`` rows (in min-max scaled space)."""
    X = np.asarray(minority, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise GanError("WGAN-GP training needs at least 2 minority rows")
    scaler = fit_scaler(X)
    data = scaler.apply(X)
    root = np.random.SeedSequence(cfg.seed)
    net_seq, stream_seq = root.spawn(2)
    generator, critic = build_nets(X.shape[1], cfg, net_seq)
    rng = np.random.default_rng(stream_seq)

    hyper = dict(lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2, weight_decay=cfg.weight_decay)
    g_state = nn.AdamState.for_net(generator, **hyper)
    c_state = nn.AdamState.for_net(critic, **hyper)
    trace = TrainingLog()
    bs = cfg.batch_size

    for step in range(cfg.generator_steps):
        for _ in range(cfg.n_critic):
            real = data[_batch_indices(rng, len(data), bs)]
            fake = generator(rng.standard_normal((bs, cfg.latent_dim)))
            eps = rng.uniform(size=(bs, 1))
            interp = eps * real + (1.0 - eps) * fake
            res = critic_objective(critic, real, fake, interp, cfg.gp_lambda, with_grad=True)
            if not np.isfinite(res["loss"]):
                raise GanError(f"non-finite critic loss at generator step {step}; "
                               f"recent critic losses: {trace.critic_loss[-10:]}")
            nn.adam_step(critic, res["grad"], c_state)

        z = rng.standard_normal((bs, cfg.latent_dim))
        g_cache, fake = nn.forward(generator, z)
        c_cache, d_fake = nn.forward(critic, fake)
        g_loss = -float(d_fake.mean())
        if not np.isfinite(g_loss):
            raise GanError(f"non-finite generator loss at step {step}; "
                           f"recent generator losses: {trace.generator_loss[-10:]}")
        upstream = nn.backward(critic, c_cache, np.full_like(d_fake, -1.0 / bs)).inputs
        nn.adam_step(generator, nn.backward(generator, g_cache, upstream), g_state)

        trace.critic_loss.append(res["loss"])
        trace.generator_loss.append(g_loss)
        trace.penalty.append(res["penalty"])
        trace.skipped_rows.append(res["skipped_rows"])
        if step % 500 == 0:
            log.debug("step %d critic %.4f generator %.4f penalty %.4f",
                      step, res["loss"], g_loss, res["penalty"])

    return GanModel(generator, critic, scaler, cfg, trace)


def generate_scaled(gan: GanModel, n: int, seed) -> np.ndarray:
    """Generator samples clipped to [0, 1], still in scaled space."""
    if n < 0:
        raise GanError("n must be >= 0")
    rng = np.random.default_rng(seed)
    if n == 0:
        return np.zeros((0, gan.feature_dim))
    z = rng.standard_normal((n, gan.config.latent_dim))
    return np.clip(gan.generator(z), 0.0, 1.0)


def generate(gan: GanModel, n: int, seed) -> np.ndarray:
    return gan.scaler.invert(generate_scaled(gan, n, seed))


@dataclass
class BalancedSet:
    features: np.ndarray
    labels: np.ndarray
    provenance: list
    gan: GanModel | None = None

    @property
    def n_synthetic(self) -> int:
        return sum(p == SYNTHETIC for p in self.provenance)


def balance_dataset(X, y, cfg: GanConfig) -> BalancedSet:
    """Append GAN-generated minority rows until both classes are equal.

    Real rows are returned first, unchanged and in their original order.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if set(np.unique(y)) - {0, 1}:
        raise GanError("labels must be binary")
    counts = np.bincount(y, minlength=2)
    if counts[0] == counts[1]:
        return BalancedSet(X.copy(), y.copy(), [REAL] * len(y))
    minority = int(np.argmin(counts))
    deficit = int(counts.max() - counts.min())
    if counts[minority] < 2:
        raise GanError(f"minority class {minority} has {counts[minority]} row(s); at least 2 are needed")
    gan = train_wgan_gp(X[y == minority], cfg)
    synth = generate(gan, deficit, np.random.SeedSequence(cfg.seed).spawn(3)[2])
    return BalancedSet(np.vstack([X, synth]),
                       np.concatenate([y, np.full(deficit, minority)]),
                       [REAL] * len(y) + [SYNTHETIC] * deficit, gan)


def save_gan(gan: GanModel, path) -> None:
    arrays = {**nn.net_to_arrays(gan.generator, "generator_"), **nn.net_to_arrays(gan.critic, "critic_")}
    arrays["scaler_lo"] = gan.scaler.lo
    arrays["scaler_hi"] = gan.scaler.hi
    arrays["config"] = np.array(json.dumps(asdict(gan.config)))
    arrays["log"] = np.array([gan.log.critic_loss, gan.log.generator_loss,
                              gan.log.penalty, gan.log.skipped_rows], dtype=float).reshape(4, -1)
    np.savez(path, **arrays)


def load_gan(path) -> GanModel:
    with np.load(path) as data:
        logs = data["log"]
        trace = TrainingLog(logs[0].tolist(), logs[1].tolist(), logs[2].tolist(),
                            [int(v) for v in logs[3]])
        return GanModel(nn.net_from_arrays(data, "generator_"), nn.net_from_arrays(data, "critic_"),
                        FeatureScaler(np.array(data["scaler_lo"]), np.array(data["scaler_hi"])),
                        GanConfig(**json.loads(str(data["config"]))), trace)


def gan_to_bytes(gan: GanModel) -> bytes:
    buf = io.BytesIO()
    save_gan(gan, buf)
    return buf.getvalue()
