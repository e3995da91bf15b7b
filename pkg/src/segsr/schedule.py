"""Linear-beta diffusion schedule, forward noising, and stride posteriors.

Training uses the full T-step schedule; sampling walks a uniform-stride
subsequence (50 steps by default) with the matching subsequence posterior
coefficients. All schedule arrays are float64 so cumulative products stay
exact enough for the strict-monotonicity invariant.
"""

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ShapeError, ValidationError


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray        # (T,) float64, linear beta_min..beta_max
    alphas_bar: np.ndarray   # (T,) float64 cumulative products of (1 - beta)
    sample_indices: np.ndarray  # strictly increasing, ends at T - 1

    def __post_init__(self):
        for arr in (self.betas, self.alphas_bar, self.sample_indices):
            arr.setflags(write=False)

    @property
    def t_train(self) -> int:
        return len(self.betas)

    @property
    def sample_steps(self) -> int:
        return len(self.sample_indices)


def make_schedule(
    t_train: int = 1000,
    sample_steps: int = 50,
    beta_min: float = 1e-4,
    beta_max: float = 0.02,
) -> NoiseSchedule:
    """Build the schedule, validating every typed invariant."""
    if t_train < 1:
        raise ValidationError(f"t_train must be >= 1, got {t_train}")
    if not 1 <= sample_steps <= t_train:
        raise ValidationError(f"sample_steps must be in [1, t_train], got {sample_steps}")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ValidationError(f"need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]")
    if t_train == 1:
        betas = np.array([beta_min], dtype=np.float64)
    else:
        betas = np.linspace(beta_min, beta_max, t_train, dtype=np.float64)
    alphas_bar = np.cumprod(1.0 - betas)
    indices = np.unique(np.round(np.linspace(0, t_train - 1, sample_steps)).astype(np.int64))
    if len(indices) != sample_steps:
        raise ValidationError(
            f"cannot place {sample_steps} distinct strided steps in {t_train} training steps"
        )
    sched = NoiseSchedule(betas=betas, alphas_bar=alphas_bar, sample_indices=indices)
    if not (sched.alphas_bar > 0).all() or sched.alphas_bar[0] >= 1.0:
        raise ValidationError("alphas_bar must lie strictly inside (0, 1)")
    if t_train > 1 and not (np.diff(sched.alphas_bar) < 0).all():
        raise ValidationError("alphas_bar must be strictly decreasing")
    if indices[-1] != t_train - 1:
        raise ValidationError("sample subsequence must end at t_train - 1")
    return sched


def _gather(coeffs: np.ndarray, t: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    picked = coeffs[t.detach().cpu().numpy()]  # fancy indexing copies
    vals = torch.from_numpy(picked).to(dtype=like.dtype, device=like.device)
    return vals.reshape(-1, *([1] * (like.ndim - 1)))


def q_sample(
    x0: torch.Tensor, t: torch.Tensor, noise: torch.Tensor, schedule: NoiseSchedule
) -> torch.Tensor:
    """Forward-noise x0 to step t: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * noise."""
    if x0.shape != noise.shape:
        raise ShapeError(f"x0 and noise shapes differ: {tuple(x0.shape)} vs {tuple(noise.shape)}")
    if t.ndim != 1 or len(t) != x0.shape[0]:
        raise ShapeError(f"t must be (batch,), got {tuple(t.shape)} for batch {x0.shape[0]}")
    if (t < 0).any() or (t >= schedule.t_train).any():
        raise ValidationError(f"timestep out of range [0, {schedule.t_train})")
    abar = _gather(schedule.alphas_bar, t, x0)
    return abar.sqrt() * x0 + (1.0 - abar).sqrt() * noise


@dataclass(frozen=True)
class SamplingStep:
    """Posterior coefficients for one strided reverse step."""

    t: int
    alpha_bar: float
    alpha_bar_prev: float  # 1.0 at the terminal step

    @property
    def beta_eff(self) -> float:
        return 1.0 - self.alpha_bar / self.alpha_bar_prev

    @property
    def posterior_variance(self) -> float:
        return self.beta_eff * (1.0 - self.alpha_bar_prev) / (1.0 - self.alpha_bar)

    def mean_coeffs(self) -> tuple[float, float]:
        """(coefficient of predicted x0, coefficient of x_t) in the posterior mean."""
        alpha_eff = self.alpha_bar / self.alpha_bar_prev
        denom = 1.0 - self.alpha_bar
        c_x0 = np.sqrt(self.alpha_bar_prev) * self.beta_eff / denom
        c_xt = np.sqrt(alpha_eff) * (1.0 - self.alpha_bar_prev) / denom
        return float(c_x0), float(c_xt)


def sampling_steps(schedule: NoiseSchedule) -> list[SamplingStep]:
    """Reverse-ordered strided steps with their posterior coefficients."""
    idx = schedule.sample_indices
    steps = []
    for k in range(len(idx) - 1, -1, -1):
        t = int(idx[k])
        abar = float(schedule.alphas_bar[t])
        abar_prev = float(schedule.alphas_bar[int(idx[k - 1])]) if k > 0 else 1.0
        steps.append(SamplingStep(t=t, alpha_bar=abar, alpha_bar_prev=abar_prev))
    return steps
