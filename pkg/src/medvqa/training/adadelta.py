"""AdaDelta optimizer.

Update recurrence, applied elementwise with accumulators E[g²] and E[Δ²]:

    E[g²]  ← ρ·E[g²] + (1−ρ)·g²
    Δ      ← −(√(E[Δ²]+ε) / √(E[g²]+ε)) · g
    E[Δ²]  ← ρ·E[Δ²] + (1−ρ)·Δ²
    θ      ← θ + lr·Δ

``lr`` defaults to 1 (the method needs no global rate); it is exposed as an
optional multiplier and is applied to the parameter update only, not to the
accumulated Δ².
"""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np
import torch

from ..errors import ConfigError, NumericError


def _check_hparams(rho: float, eps: float) -> None:
    if not 0 <= rho < 1:
        raise ConfigError(f"rho must be in [0, 1), got {rho}")
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")


def adadelta_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: Mapping[str, dict[str, np.ndarray]] | None,
    rho: float = 0.95,
    eps: float = 1e-6,
    lr: float = 1.0,
) -> tuple[dict[str, np.ndarray], dict[str, dict[str, np.ndarray]]]:
    """One functional update; returns new params and new state.

    ``state`` maps each name to {"sq_grad": E[g²], "sq_delta": E[Δ²]}; pass
    None (or omit a name) for a fresh all-zeros state. Arrays keep their
    dtype, so a float64 call reproduces the recurrence at full precision.
    """
    _check_hparams(rho, eps)
    state = dict(state or {})
    new_params: dict[str, np.ndarray] = {}
    new_state: dict[str, dict[str, np.ndarray]] = {}
    for name, p in params.items():
        p = np.asarray(p)
        if name not in grads:
            raise ConfigError(f"missing gradient for parameter {name!r}")
        g = np.asarray(grads[name])
        if g.shape != p.shape:
            raise ConfigError(
                f"gradient shape {g.shape} does not match parameter {name!r} shape {p.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        prev = state.get(name)
        sq_grad = np.asarray(prev["sq_grad"]) if prev else np.zeros_like(p)
        sq_delta = np.asarray(prev["sq_delta"]) if prev else np.zeros_like(p)
        sq_grad = rho * sq_grad + (1.0 - rho) * g * g
        delta = -(np.sqrt(sq_delta + eps) / np.sqrt(sq_grad + eps)) * g
        sq_delta = rho * sq_delta + (1.0 - rho) * delta * delta
        new_params[name] = p + lr * delta
        new_state[name] = {"sq_grad": sq_grad, "sq_delta": sq_delta}
    return new_params, new_state


class AdaDelta:
    """In-place AdaDelta over named torch parameters."""

    def __init__(
        self,
        params: Mapping[str, torch.Tensor] | Iterable[tuple[str, torch.Tensor]],
        rho: float = 0.95,
        eps: float = 1e-6,
        lr: float = 1.0,
    ):
        _check_hparams(rho, eps)
        self.rho = rho
        self.eps = eps
        self.lr = lr
        self.params = dict(params)
        self.state = {
            name: {"sq_grad": torch.zeros_like(p), "sq_delta": torch.zeros_like(p)}
            for name, p in self.params.items()
        }

    def zero_grad(self) -> None:
        for p in self.params.values():
            if p.grad is not None:
                p.grad = None

    @torch.no_grad()
    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            if not torch.isfinite(g).all():
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            st = self.state[name]
            st["sq_grad"].mul_(self.rho).add_(g * g, alpha=1.0 - self.rho)
            delta = -(torch.sqrt(st["sq_delta"] + self.eps) / torch.sqrt(st["sq_grad"] + self.eps)) * g
            st["sq_delta"].mul_(self.rho).add_(delta * delta, alpha=1.0 - self.rho)
            p.add_(delta, alpha=self.lr)
