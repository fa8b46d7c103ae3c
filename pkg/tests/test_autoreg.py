import numpy as np
import pytest
import torch

from src.impl import autoreg
from src.impl.autoreg import DTYPE, EPS, MaskedNet
from src.impl.lattice import index_bits
from src.interface import NetSpec


def _random_inputs(net: MaskedNet, batch: int, generator: torch.Generator) -> torch.Tensor:
    return (torch.randint(0, 2, (batch, net.n_in), generator=generator) * 2 - 1).to(DTYPE)


def test_outputs_depend_only_on_earlier_spins(generator):
    order = torch.tensor([2, 0, 3, 1])
    net = MaskedNet(n_ctx=3, n_out=4, order=order)
    autoreg.reset_parameters(net, seed=5)
    x = _random_inputs(net, 8, generator)
    base = net(x)
    for j in range(4):
        perturbed = x.clone()
        perturbed[:, net.n_ctx + j] *= -1
        changed = net(perturbed)
        for i in range(4):
            if order[i] <= order[j]:
                torch.testing.assert_close(changed[:, i], base[:, i], rtol=0, atol=0)


def test_outputs_are_clamped_probabilities(generator):
    net = autoreg.init_net(10, 6, seed=1)
    with torch.no_grad():
        net.layer2.bias.fill_(200.0)
    p = net(_random_inputs(net, 4, generator))
    assert float(p.max()) <= 1 - EPS
    assert float(p.min()) >= EPS


def test_exhaustive_normalization(generator):
    net = autoreg.init_net(2 + 7, 7, seed=11)
    with torch.no_grad():
        net.layer2.bias.copy_(torch.randn(7, generator=generator, dtype=DTYPE))
    every = torch.from_numpy(index_bits(np.arange(2**7), 7).astype(np.float64))
    context = torch.tensor([[1.0, -1.0]], dtype=DTYPE).expand(every.shape[0], -1)
    with torch.no_grad():
        total = torch.logsumexp(autoreg.log_prob(net, context, every), dim=0).exp()
    assert float(total) == pytest.approx(1.0, abs=1e-10)


def test_sampled_log_q_matches_log_prob(generator):
    net = autoreg.init_net(3 + 5, 5, seed=2)
    context = (torch.randint(0, 2, (32, 3), generator=generator) * 2 - 1).to(DTYPE)
    sample = autoreg.sample_group(net, context, generator)
    assert set(sample.spins.unique().tolist()) <= {-1.0, 1.0}
    with torch.no_grad():
        recomputed = autoreg.log_prob(net, context, sample.spins)
    torch.testing.assert_close(sample.log_q, recomputed, rtol=1e-12, atol=1e-12)


def test_grad_loss_matches_finite_differences(generator):
    net = autoreg.init_net(2 + 4, 4, seed=9)
    context = (torch.randint(0, 2, (10, 2), generator=generator) * 2 - 1).to(DTYPE)
    spins = (torch.randint(0, 2, (10, 4), generator=generator) * 2 - 1).to(DTYPE)
    weights = torch.randn(10, generator=generator, dtype=DTYPE)
    grads = autoreg.grad_loss(net, context, spins, weights)

    bias = net.layer2.bias
    step = 1e-4
    for i in range(bias.numel()):
        with torch.no_grad():
            bias[i] += step
            plus = float((weights * autoreg.log_prob(net, context, spins)).sum())
            bias[i] -= 2 * step
            minus = float((weights * autoreg.log_prob(net, context, spins)).sum())
            bias[i] += step
        assert float(grads["layer2.bias"][i]) == pytest.approx((plus - minus) / (2 * step), rel=1e-4, abs=1e-8)


def test_grad_loss_rejects_empty_batch():
    net = autoreg.init_net(3, 2)
    with pytest.raises(ValueError):
        autoreg.grad_loss(net, torch.zeros(0, 1, dtype=DTYPE), torch.zeros(0, 2, dtype=DTYPE), torch.zeros(0, dtype=DTYPE))


def test_invalid_shapes():
    with pytest.raises(ValueError):
        MaskedNet(n_ctx=2, n_out=0)
    with pytest.raises(ValueError):
        MaskedNet(n_ctx=2, n_out=4, hidden_width=3)
    with pytest.raises(ValueError):
        MaskedNet(n_ctx=2, n_out=3, order=torch.tensor([0, 0, 1]))


def test_hierarchy_nets_are_seeded_per_position():
    specs = [NetSpec("a", "cut-line", 4, 2), NetSpec("b", "cut-line", 4, 2)]
    first = autoreg.HierarchyNets.from_specs(specs, hidden_factor=2, seed=4)
    second = autoreg.HierarchyNets.from_specs(specs, hidden_factor=2, seed=4)
    torch.testing.assert_close(first["a"].layer1.weight, second["a"].layer1.weight)
    assert not torch.equal(first["a"].layer1.weight, first["b"].layer1.weight)
    assert first["a"].hidden_width == 4


def test_zero_weight_net_is_uniform(generator):
    net = autoreg.init_net(3 + 6, 6, seed=1)
    with torch.no_grad():
        for param in net.parameters():
            param.zero_()
    context = (torch.randint(0, 2, (20, 3), generator=generator) * 2 - 1).to(DTYPE)
    sample = autoreg.sample_group(net, context, generator)
    expected = torch.full((20,), -6 * np.log(2.0), dtype=DTYPE)
    torch.testing.assert_close(sample.log_q, expected, rtol=0, atol=1e-12)
    with torch.no_grad():
        torch.testing.assert_close(autoreg.log_prob(net, context, sample.spins), expected, rtol=0, atol=1e-12)


def test_first_spin_frequency_matches_its_conditional(generator):
    net = autoreg.init_net(2 + 4, 4, seed=6)
    with torch.no_grad():
        net.layer2.bias.copy_(torch.tensor([0.7, -0.3, 0.2, 1.1], dtype=DTYPE))
    draws = 100_000
    context = torch.tensor([[1.0, -1.0]], dtype=DTYPE)
    first = int(net.sampling_positions()[0])
    with torch.no_grad():
        x = torch.cat([context, torch.zeros(1, 4, dtype=DTYPE)], dim=1)
        p = float(autoreg.conditionals(net, x)[0, first])
    sample = autoreg.sample_group(net, context.expand(draws, -1), generator)
    frequency = float((sample.spins[:, first] > 0).double().mean())
    assert abs(frequency - p) <= 4 * np.sqrt(p * (1 - p) / draws)
