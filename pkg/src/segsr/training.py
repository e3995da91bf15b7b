"""Noise-prediction training: loss, optimizer, loop, and checkpoints.

The objective is the plain epsilon-prediction MSE: sample one timestep per
batch item uniformly, noise the clean image with the forward process, and
regress the injected noise. All randomness flows through one torch.Generator
so fixed seeds give bit-identical losses.
"""

import csv
import os
from dataclasses import asdict

import torch

from .conditioning import ConditioningBatch
from .errors import ConfigError, ShapeError, ValidationError
from .schedule import NoiseSchedule, make_schedule, q_sample
from .seeding import derive_seed
from .unet import ConditionalUNet, UNetConfig

CHECKPOINT_VERSION = 1


def training_loss(
    model,
    x0: torch.Tensor,
    cond: ConditioningBatch,
    schedule: NoiseSchedule,
    generator: torch.Generator,
) -> torch.Tensor:
    """Mean squared error between injected and predicted noise.

    Each batch item gets its own uniform timestep. Deterministic for a fixed
    generator state.
    """
    if x0.ndim != 4:
        raise ShapeError(f"x0 must be (B, C, H, W), got {tuple(x0.shape)}")
    b = x0.shape[0]
    t = torch.randint(0, schedule.t_train, (b,), generator=generator)
    noise = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    x_t = q_sample(x0, t, noise, schedule)
    eps_hat = model(x_t, t, cond)
    return torch.mean((noise - eps_hat) ** 2)


def create_optimizer(model, lr: float = 5e-5, weight_decay: float = 1e-2):
    """Decoupled-weight-decay Adam over all trainable parameters."""
    return torch.optim.AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)


class LossLog:
    """Append-only step,loss CSV."""

    def __init__(self, path):
        self.path = str(path)
        if not os.path.exists(self.path):
            os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh).writerow(["step", "loss"])

    def append(self, step: int, loss: float) -> None:
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow([step, f"{loss:.6f}"])

    def read(self) -> list[tuple[int, float]]:
        with open(self.path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            return [(int(s), float(l)) for s, l in reader]


def save_checkpoint(
    path,
    model: ConditionalUNet,
    optimizer,
    step: int,
    schedule: NoiseSchedule,
    table_hash: str | None = None,
    run_config: dict | None = None,
) -> None:
    """Versioned container: model (incl. control/fusion/compressor), optimizer,
    schedule parameters, and the embedding-table header hash."""
    os.makedirs(os.path.dirname(os.path.abspath(str(path))), exist_ok=True)
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "step": step,
            "unet_config": asdict(model.config),
            "model_state": model.state_dict(),
            "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
            "schedule": {
                "t_train": schedule.t_train,
                "sample_steps": schedule.sample_steps,
                "beta_min": float(schedule.betas[0]),
                "beta_max": float(schedule.betas[-1]),
            },
            "table_hash": table_hash,
            "run_config": run_config,
        },
        str(path),
    )


def load_checkpoint(path, expected_table_hash: str | None = None):
    """Load a checkpoint; returns (model, schedule, payload dict).

    A stored table hash that disagrees with ``expected_table_hash`` means the
    checkpoint was trained against a different embedding backend; loading
    such a model would silently mis-condition it, so this raises.
    """
    payload = torch.load(str(path), map_location="cpu", weights_only=False)
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {version}")
    stored_hash = payload.get("table_hash")
    if (
        expected_table_hash is not None
        and stored_hash is not None
        and stored_hash != expected_table_hash
    ):
        raise ConfigError(
            f"{path}: embedding-table mismatch (checkpoint {stored_hash[:12]}..., "
            f"current {expected_table_hash[:12]}...)"
        )
    cfg = payload["unet_config"]
    cfg["channel_mults"] = tuple(cfg["channel_mults"])
    cfg["attention_levels"] = tuple(cfg["attention_levels"])
    cfg["gfm_levels"] = tuple(cfg["gfm_levels"])
    model = ConditionalUNet(UNetConfig(**cfg))
    model.load_state_dict(payload["model_state"])
    sched = payload["schedule"]
    schedule = make_schedule(
        sched["t_train"], sched["sample_steps"], sched["beta_min"], sched["beta_max"]
    )
    return model, schedule, payload


def train_model(
    model: ConditionalUNet,
    x0_all: torch.Tensor,
    cond_all: ConditioningBatch,
    schedule: NoiseSchedule,
    *,
    steps: int,
    batch_size: int,
    lr: float = 5e-5,
    weight_decay: float = 1e-2,
    seed: int = 0,
    workdir=None,
    checkpoint_every: int = 0,
    log_every: int = 10,
    start_step: int = 0,
    optimizer=None,
    table_hash: str | None = None,
    run_config: dict | None = None,
    progress=None,
):
    """Minibatch training over an in-memory dataset.

    ``x0_all``/``cond_all`` hold every training image (desk-scale datasets fit
    comfortably); each step draws ``batch_size`` indices with replacement from
    the run generator. Returns (optimizer, final mean-loss list).
    """
    n = x0_all.shape[0]
    if n == 0:
        raise ValidationError("empty training set")
    if optimizer is None:
        optimizer = create_optimizer(model, lr=lr, weight_decay=weight_decay)

    log = LossLog(os.path.join(workdir, "loss.csv")) if workdir else None
    losses = []
    model.train()
    for step in range(start_step, steps):
        # per-step generator keyed by (seed, step): resumed runs replay the
        # exact stream an uninterrupted run would have used
        generator = torch.Generator().manual_seed(derive_seed(seed, f"train:step{step}"))
        idx = torch.randint(0, n, (batch_size,), generator=generator)
        x0 = x0_all[idx]
        cond = cond_all.select(idx)
        optimizer.zero_grad()
        loss = training_loss(model, x0, cond, schedule, generator)
        loss.backward()
        optimizer.step()
        losses.append(float(loss.detach()))
        if log is not None and (step % max(log_every, 1) == 0 or step == steps - 1):
            log.append(step, float(loss.detach()))
        if progress is not None:
            progress(step, float(loss.detach()))
        if (
            workdir
            and checkpoint_every
            and (step + 1) % checkpoint_every == 0
            and step + 1 < steps
        ):
            save_checkpoint(
                os.path.join(workdir, f"checkpoint_{step + 1:07d}.pt"),
                model, optimizer, step + 1, schedule, table_hash, run_config,
            )
    if workdir:
        save_checkpoint(
            os.path.join(workdir, "checkpoint_final.pt"),
            model, optimizer, steps, schedule, table_hash, run_config,
        )
    return optimizer, losses
