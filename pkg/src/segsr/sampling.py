"""Ancestral DDPM sampling over the strided timestep subsequence.

Starting from pure noise at the denoiser's resolution, each reverse step
predicts the noise, forms the predicted clean image, and draws from the
subsequence posterior; the terminal step has zero posterior variance and
returns the mean. Output is clipped to the valid pixel range as a float
array in [0, 1]. Fixed generator seed -> bit-identical samples.
"""

import torch

from .conditioning import ConditioningBatch, null_text_batch
from .errors import ConfigError
from .schedule import NoiseSchedule, sampling_steps


def ddpm_sample(
    model,
    cond: ConditioningBatch,
    schedule: NoiseSchedule,
    shape: tuple,
    generator: torch.Generator,
    *,
    clip_denoised: bool = False,
    guidance_weight: float = 1.0,
    text_encoder=None,
    enable_control: bool = True,
    enable_fusion: bool = True,
    guidance_mode: str | None = None,
) -> torch.Tensor:
    """Sample (B, C, H, W) images conditioned on one collated batch.

    ``guidance_weight`` != 1 runs text-side classifier-free guidance:
    eps = eps_null + w * (eps_cond - eps_null), with the null side using
    empty-text context tokens (requires ``text_encoder``).
    """
    if guidance_weight != 1.0 and text_encoder is None:
        raise ConfigError("guidance_weight != 1 requires a text encoder for the null context")
    null_cond = None if guidance_weight == 1.0 else null_text_batch(cond, text_encoder)

    x = torch.randn(shape, generator=generator)
    flags = dict(
        enable_control=enable_control,
        enable_fusion=enable_fusion,
        guidance_mode=guidance_mode,
    )
    with torch.no_grad():
        for step in sampling_steps(schedule):
            t = torch.full((shape[0],), step.t, dtype=torch.long)
            eps = model(x, t, cond, **flags)
            if null_cond is not None:
                eps_null = model(x, t, null_cond, **flags)
                eps = eps_null + guidance_weight * (eps - eps_null)
            abar = step.alpha_bar
            x0_pred = (x - (1.0 - abar) ** 0.5 * eps) / abar**0.5
            if clip_denoised:
                x0_pred = x0_pred.clamp(-1.0, 1.0)
            c_x0, c_xt = step.mean_coeffs()
            mean = c_x0 * x0_pred + c_xt * x
            var = step.posterior_variance
            if var > 0.0:
                noise = torch.randn(shape, generator=generator)
                x = mean + var**0.5 * noise
            else:
                x = mean
    return (x.clamp(-1.0, 1.0) + 1.0) / 2.0
