"""AdamW with global-norm clipping, and an EMA of parameters."""

from __future__ import annotations

import math
from typing import Iterable

import torch


class NonFiniteGradient(FloatingPointError):
    pass


class AdamW:
    """Adam with decoupled weight decay.

    Each step: check the global gradient norm is finite, clip it to
    ``clip_norm``, decay parameters by ``lr * weight_decay``, then apply the
    bias-corrected Adam update.
    """

    def __init__(
        self,
        params: Iterable[torch.nn.Parameter],
        lr: float = 5e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
        clip_norm: float | None = 4.0,
    ):
        self.params = [p for p in params if p.requires_grad]
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.step_count = 0
        self.m = [torch.zeros_like(p) for p in self.params]
        self.v = [torch.zeros_like(p) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def grad_norm(self) -> float:
        total = 0.0
        for p in self.params:
            if p.grad is not None:
                total += float(p.grad.detach().pow(2).sum())
        return math.sqrt(total)

    @torch.no_grad()
    def step(self) -> float:
        norm = self.grad_norm()
        if not math.isfinite(norm):
            raise NonFiniteGradient(f"gradient norm is {norm}")
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / (norm + 1e-12)
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1 - b1**self.step_count
        c2 = 1 - b2**self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad * scale
            if self.weight_decay:
                p.mul_(1 - self.lr * self.weight_decay)
            m.mul_(b1).add_(g, alpha=1 - b1)
            v.mul_(b2).addcmul_(g, g, value=1 - b2)
            p.addcdiv_(m / c1, (v / c2).sqrt_().add_(self.eps), value=-self.lr)
        return norm

    def state_arrays(self) -> dict[str, torch.Tensor]:
        out = {"step": torch.tensor([float(self.step_count)])}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m.{i}"] = m
            out[f"v.{i}"] = v
        return out

    def load_state_arrays(self, arrays: dict[str, torch.Tensor]) -> None:
        self.step_count = int(arrays["step"].item())
        for i in range(len(self.params)):
            self.m[i].copy_(arrays[f"m.{i}"])
            self.v[i].copy_(arrays[f"v.{i}"])


class EMA:
    """Shadow copy updated as shadow = decay * shadow + (1 - decay) * param."""

    def __init__(self, module: torch.nn.Module, decay: float = 0.999):
        self.decay = decay
        self.shadow = {k: v.detach().clone() for k, v in module.state_dict().items()}

    @torch.no_grad()
    def update(self, module: torch.nn.Module) -> None:
        for k, v in module.state_dict().items():
            if v.is_floating_point():
                self.shadow[k].mul_(self.decay).add_(v, alpha=1 - self.decay)
            else:
                self.shadow[k].copy_(v)

    def copy_to(self, module: torch.nn.Module) -> None:
        module.load_state_dict(self.shadow)
