import math

import numpy as np
import pytest
import torch

from src.impl import han
from src.impl.autoreg import DTYPE
from src.impl.lattice import couplings, energy
from src.interface import ModelParams, PlanError, SiteRole, SpinConfig


@pytest.mark.parametrize("L,k,l", [(2, 1, 1), (3, 1, 1), (4, 2, 1), (4, 3, 2), (6, 2, 3), (8, 2, 1)])
def test_plan_covers_every_site_once(L, k, l):
    plan = han.build_hierarchy(ModelParams(L=L, k=k, l=l, dtau=0.3))
    roles = han.site_roles(plan)
    assert roles.shape == (k * L + 1, L)
    assert all(role is not None for role in roles.ravel())
    generated = [s for g in plan.groups for s in g.sites + g.mirror_sites]
    assert len(generated) == len(set(generated)) == (k * L + 1) * L - 2 * l


def test_boundary_roles(small_params):
    roles = han.site_roles(han.build_hierarchy(small_params))
    assert roles[0, 0] == SiteRole.BOUNDARY_A_TOP
    assert roles[small_params.m, 0] == SiteRole.BOUNDARY_A_BOTTOM
    assert roles[0, 1] == SiteRole.BOUNDARY_B_SHARED
    assert roles[small_params.m, 1] == SiteRole.BOUNDARY_B_SHARED
    assert roles[small_params.L, 0] == SiteRole.CUT_LINE


def test_heatbath_sites_are_enclosed(small_params):
    plan = han.build_hierarchy(small_params)
    heatbath = [g for g in plan.groups if g.net_id == han.HEATBATH]
    assert heatbath
    for site in heatbath[0].sites:
        assert 0 < site[0] < small_params.m


def test_stages_preserve_group_order(small_params):
    plan = han.build_hierarchy(small_params)
    flattened = [g for stage in han.stages(plan) for g in stage]
    assert [id(g) for g in flattened] == [id(g) for g in plan.groups]
    # the two squares of k=2 share the first cross net and are sampled together
    assert any(len(stage) == 2 and stage[0].net_id == "cross_1" for stage in han.stages(plan))


def test_dump_lists_every_group(small_params):
    plan = han.build_hierarchy(small_params)
    lines = plan.dump().splitlines()
    assert len(lines) == len(plan.groups)
    assert lines[0].startswith("boundary-B")


def test_samples_respect_boundaries(untrained_sampler, tiny_params, generator):
    boundaries = torch.tensor([[1.0, -1.0]] * 16, dtype=DTYPE)
    sample = untrained_sampler.sample_configuration(boundaries, generator)
    spins, m, l = sample.spins, tiny_params.m, tiny_params.l
    assert spins.shape == (16, m + 1, tiny_params.L)
    assert torch.all(spins.abs() == 1)
    assert torch.all(spins[:, 0, :l] == 1) and torch.all(spins[:, m, :l] == -1)
    assert torch.equal(spins[:, 0, l:], spins[:, m, l:])


def test_sampling_log_q_matches_recomputation(untrained_sampler, generator):
    boundaries = (torch.randint(0, 2, (64, 2), generator=generator) * 2 - 1).to(DTYPE)
    sample = untrained_sampler.sample_configuration(boundaries, generator)
    with torch.no_grad():
        recomputed = untrained_sampler.log_prob(sample.spins)
    torch.testing.assert_close(sample.log_q, recomputed, rtol=1e-12, atol=1e-12)
    parts = untrained_sampler.group_log_probs(sample.spins)
    torch.testing.assert_close(sum(parts), recomputed, rtol=1e-12, atol=1e-12)


def test_sampler_is_normalized_for_a_fixed_boundary(untrained_sampler, all_completions):
    for boundary in ([1, 1], [1, -1], [-1, -1]):
        spins = all_completions(untrained_sampler, boundary)
        with torch.no_grad():
            total = torch.logsumexp(untrained_sampler.log_prob(spins), dim=0).exp()
        assert float(total) == pytest.approx(1.0, abs=1e-10)


def test_heatbath_conditional_is_boltzmann(small_params, rng):
    c = couplings(small_params)
    for _ in range(20):
        spins = rng.choice([-1, 1], size=(small_params.rows, small_params.L)).astype(np.int8)
        site = (int(rng.integers(1, small_params.m)), int(rng.integers(0, small_params.L)))
        up, down = spins.copy(), spins.copy()
        up[site], down[site] = 1, -1
        p_up = math.exp(han.heatbath_logprob(SpinConfig(up), site, c))
        delta = energy(SpinConfig(up), c) - energy(SpinConfig(down), c)
        assert p_up == pytest.approx(1.0 / (1.0 + math.exp(delta)), abs=1e-12)


def test_wrong_boundary_width(untrained_sampler, generator):
    with pytest.raises(PlanError):
        untrained_sampler.sample_configuration(torch.ones(4, 3, dtype=DTYPE), generator)


def test_missing_net_is_a_plan_error(untrained_sampler):
    nets = untrained_sampler.nets
    del nets["boundary_b"]
    with pytest.raises(PlanError):
        han.HierarchicalSampler(untrained_sampler.plan, nets, untrained_sampler.c)


def test_plan_for_eight_sites_and_three_spin_subsystem():
    params = ModelParams(L=8, k=2, l=3, dtau=0.3)
    plan = han.build_hierarchy(params)
    by_kind = {}
    for group in plan.groups:
        by_kind.setdefault(group.kind, []).append(group)

    (boundary,) = by_kind["boundary-B"]
    assert boundary.sites == [(0, j) for j in range(3, 8)]
    assert boundary.mirror_sites == [(16, j) for j in range(3, 8)]
    (cut,) = by_kind["cut-line"]
    assert cut.sites == [(8, j) for j in range(8)]

    crosses = by_kind["square-cross"]
    first = [g for g in crosses if g.level == 1]
    inner = [g for g in crosses if g.level == 2]
    assert len(first) == 2 and all(len(g.sites) == 20 for g in first)
    assert len(inner) == 8 and all(len(g.sites) == 5 for g in inner)
    assert len(crosses) == 10
    assert len(by_kind[han.HEATBATH][0].sites) == 32
    assert sorted(s.net_id for s in plan.net_specs) == ["boundary_b", "cross_1", "cross_2_4x4", "cut_2"]

    roles = han.site_roles(plan)
    counts = {role: int((roles == role).sum()) for role in SiteRole}
    assert counts == {
        SiteRole.BOUNDARY_A_TOP: 3,
        SiteRole.BOUNDARY_A_BOTTOM: 3,
        SiteRole.BOUNDARY_B_SHARED: 10,
        SiteRole.CUT_LINE: 8,
        SiteRole.SQUARE_CROSS: 80,
        SiteRole.HEATBATH: 32,
    }
    # first-level cross: central row plus columns 0 and 4 of each square
    assert all(roles[4, j] == SiteRole.SQUARE_CROSS for j in range(8))
    assert roles[2, 0] == roles[2, 4] == SiteRole.SQUARE_CROSS
    assert roles[1, 1] == SiteRole.HEATBATH


def test_odd_square_count_cuts_one_square_first():
    plan = han.build_hierarchy(ModelParams(L=8, k=3, l=1, dtau=0.3))
    cuts = [g for g in plan.groups if g.kind == "cut-line"]
    assert [g.sites[0][0] for g in cuts] == [8, 16]
    assert [g.net_id for g in cuts] == ["cut_3", "cut_2"]
    assert cuts[1].context_sites == [(8, j) for j in range(8)] + [(24, j) for j in range(8)]


def _enclosed(group, L: int, rows: int) -> set:
    """Sites reachable from a group without crossing its context."""
    fence = set(group.context_sites)
    seen = set(group.sites)
    frontier = list(group.sites)
    while frontier:
        r, c = frontier.pop()
        for n in ((r - 1, c), (r + 1, c), (r, (c - 1) % L), (r, (c + 1) % L)):
            if 0 <= n[0] < rows and n not in fence and n not in seen:
                seen.add(n)
                frontier.append(n)
    return seen


@pytest.mark.parametrize("L,k,l", [(4, 2, 1), (8, 2, 3), (8, 3, 1), (6, 2, 2)])
def test_context_separates_each_region_from_earlier_spins(L, k, l):
    plan = han.build_hierarchy(ModelParams(L=L, k=k, l=l, dtau=0.3))
    available = set(plan.fixed_sites())
    for group in plan.groups:
        produced = group.sites + group.mirror_sites
        if group.kind != "boundary-B":
            region = _enclosed(group, L, plan.m + 1)
            # everything already fixed that touches the region is part of the context
            assert not region & available, (group.kind, group.net_id)
        available.update(produced)
