"""Two-layer masked dense autoregressive networks (MADE-style) over ±1 spins.

Inputs are laid out as [context | generated]. Context slots are visible to
every output; generated slot i is visible only to outputs whose autoregressive
position is later than its own.
"""

import math
from typing import Dict, Iterable, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..interface.base_sampler import GroupSample
from ..interface.errors import DivergenceError, PlanError

EPS = 1e-7
DTYPE = torch.float64


class MaskedLinear(nn.Linear):
    def __init__(self, in_features: int, out_features: int, mask: torch.Tensor):
        super().__init__(in_features, out_features, bias=True, dtype=DTYPE)
        self.register_buffer("mask", mask.to(DTYPE))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(x, self.mask * self.weight, self.bias)


class MaskedNet(nn.Module):
    """q(s^t = +1 | context, s^1..s^{t-1}) for every generated spin t.

    Args:
        n_ctx: number of always-visible conditioning inputs
        n_out: number of generated spins
        hidden_width: size of the PReLU layer (defaults to 4 * n_out)
        order: order[i] is the autoregressive position of generated spin i
    """

    def __init__(self, n_ctx: int, n_out: int, hidden_width: Optional[int] = None, order: Optional[torch.Tensor] = None):
        super().__init__()
        if n_out < 1:
            raise ValueError("a masked net must generate at least one spin")
        hidden_width = hidden_width or 4 * n_out
        if hidden_width < n_out:
            raise ValueError(f"hidden_width={hidden_width} must be at least n_out={n_out}")
        if order is None:
            order = torch.arange(n_out)
        order = torch.as_tensor(order, dtype=torch.long)
        if sorted(order.tolist()) != list(range(n_out)):
            raise ValueError(f"order must be a permutation of 0..{n_out - 1}")

        self.n_ctx = n_ctx
        self.n_out = n_out
        self.hidden_width = hidden_width
        self.register_buffer("order", order)

        in_degree = torch.cat([torch.zeros(n_ctx, dtype=torch.long), order + 1])
        hidden_degree = torch.arange(hidden_width) % n_out
        out_degree = order + 1
        mask1 = (in_degree[None, :] <= hidden_degree[:, None]).to(DTYPE)
        mask2 = (hidden_degree[None, :] < out_degree[:, None]).to(DTYPE)
        if (mask2.sum(dim=1) == 0).any():
            raise PlanError("infeasible mask: an output has no admissible hidden unit")

        self.layer1 = MaskedLinear(n_ctx + n_out, hidden_width, mask1)
        self.activation = nn.PReLU(num_parameters=hidden_width, init=0.25, dtype=DTYPE)
        self.layer2 = MaskedLinear(hidden_width, n_out, mask2)

    @property
    def n_in(self) -> int:
        return self.n_ctx + self.n_out

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        logits = self.layer2(self.activation(self.layer1(x)))
        return torch.sigmoid(logits).clamp(EPS, 1.0 - EPS)

    def sampling_positions(self) -> torch.Tensor:
        return torch.argsort(self.order)


def init_net(n_in: int, n_out: int, hidden_width: Optional[int] = None, seed: int = 0) -> MaskedNet:
    """Fresh net with U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases and PReLU slopes 0.25."""
    net = MaskedNet(n_ctx=n_in - n_out, n_out=n_out, hidden_width=hidden_width)
    reset_parameters(net, seed)
    return net


def reset_parameters(net: MaskedNet, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for layer in (net.layer1, net.layer2):
            bound = 1.0 / math.sqrt(layer.in_features)
            layer.weight.copy_((torch.rand(layer.weight.shape, generator=gen, dtype=DTYPE) * 2 - 1) * bound)
            layer.bias.zero_()
        net.activation.weight.fill_(0.25)


def conditionals(net: MaskedNet, inputs: torch.Tensor) -> torch.Tensor:
    """Entry t is q(s^t = +1 | context, earlier spins); placeholders for later spins are ignored."""
    return net(inputs)


def _chosen_log(probs: torch.Tensor, spins: torch.Tensor) -> torch.Tensor:
    return torch.log(torch.where(spins > 0, probs, 1.0 - probs))


def sample_group(net: MaskedNet, context: torch.Tensor, generator: torch.Generator) -> GroupSample:
    """Ancestral sampling of a batch; context has shape (batch, n_ctx)."""
    batch = context.shape[0]
    x = torch.cat([context.to(DTYPE), torch.zeros(batch, net.n_out, dtype=DTYPE)], dim=1)
    step_log = torch.zeros(batch, net.n_out, dtype=DTYPE)
    with torch.no_grad():
        for i in net.sampling_positions().tolist():
            p = net(x)[:, i]
            u = torch.rand(batch, generator=generator, dtype=DTYPE)
            s = torch.where(u < p, 1.0, -1.0).to(DTYPE)
            x[:, net.n_ctx + i] = s
            step_log[:, i] = _chosen_log(p, s)
    return GroupSample(spins=x[:, net.n_ctx:], log_q=step_log.sum(dim=1))


def log_prob(net: MaskedNet, context: torch.Tensor, spins: torch.Tensor) -> torch.Tensor:
    """Exact log q of the given spins, differentiable in the net parameters."""
    x = torch.cat([context.to(DTYPE), spins.to(DTYPE)], dim=1)
    return _chosen_log(net(x), spins).sum(dim=1)


def grad_loss(net: MaskedNet, context: torch.Tensor, spins: torch.Tensor, weights: torch.Tensor) -> Dict[str, torch.Tensor]:
    """Gradient of Σ_batch weight·log q(spins | context) with respect to every trainable parameter."""
    if context.shape[0] == 0:
        raise ValueError("grad_loss needs a non-empty batch")
    objective = (weights.to(DTYPE) * log_prob(net, context, spins)).sum()
    if not torch.isfinite(objective):
        raise DivergenceError("non-finite log-probabilities in grad_loss")
    names, params = zip(*[(n, p) for n, p in net.named_parameters() if p.requires_grad])
    grads = torch.autograd.grad(objective, params)
    return dict(zip(names, grads))


class HierarchyNets(nn.ModuleDict):
    """All nets of one hierarchy, keyed by net id, trained jointly."""

    @classmethod
    def from_specs(cls, specs: Iterable, hidden_factor: int = 4, seed: int = 0) -> "HierarchyNets":
        nets = cls()
        for position, spec in enumerate(specs):
            net = MaskedNet(spec.n_ctx, spec.n_out, hidden_width=hidden_factor * spec.n_out)
            reset_parameters(net, seed + 7919 * position)
            nets[spec.net_id] = net
        return nets
