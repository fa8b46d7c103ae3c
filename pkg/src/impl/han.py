"""Hierarchical autoregressive sampling of the (m+1) × L lattice.

Order of generation: the 2l fixed subsystem-A spins, the shared part-B
boundary (mirrored to rows 0 and m), horizontal cut lines splitting the
lattice into L × L squares, recursive crosses inside every square, and
finally single enclosed sites drawn from their exact heatbath conditional.
"""

import logging
import math
from collections import deque
from typing import Dict, List, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from ..interface.base_lattice import CouplingSet, ModelParams, SiteRole, SpinConfig
from ..interface.base_sampler import BaseSampler, FullSample, HierarchyPlan, NetSpec, Site, SpinGroup
from ..interface.errors import PlanError
from . import autoreg
from .autoreg import DTYPE, HierarchyNets
from .lattice import local_field

logger = logging.getLogger(__name__)

HEATBATH = "heatbath"


def build_hierarchy(params: ModelParams) -> HierarchyPlan:
    L, m, l = params.L, params.m, params.l
    groups: List[SpinGroup] = []
    specs: Dict[str, NetSpec] = {}

    def register(net_id: str, kind: str, n_ctx: int, n_out: int) -> None:
        known = specs.get(net_id)
        if known is not None and (known.n_ctx, known.n_out) != (n_ctx, n_out):
            raise PlanError(f"net {net_id} reused with a different shape")
        specs[net_id] = NetSpec(net_id, kind, n_ctx, n_out)

    fixed = [(0, j) for j in range(l)] + [(m, j) for j in range(l)]
    boundary = [(0, j) for j in range(l, L)]
    register("boundary_b", "boundary-B", len(fixed), len(boundary))
    groups.append(
        SpinGroup("boundary-B", boundary, list(fixed), "boundary_b", mirror_sites=[(m, j) for j in range(l, L)])
    )

    # cut lines, breadth first so that equal slabs are adjacent in the plan
    square_tops: List[int] = []
    slabs = deque([(0, params.k, 1)])
    while slabs:
        top, squares, depth = slabs.popleft()
        if squares == 1:
            square_tops.append(top)
            continue
        upper = squares // 2 if squares % 2 == 0 else 1
        row = top + upper * L
        bottom = top + squares * L
        net_id = f"cut_{squares}"
        context = [(top, j) for j in range(L)] + [(bottom, j) for j in range(L)]
        register(net_id, "cut-line", 2 * L, L)
        groups.append(SpinGroup("cut-line", [(row, j) for j in range(L)], context, net_id, level=depth))
        slabs.append((top, upper, depth + 1))
        slabs.append((row, squares - upper, depth + 1))
    square_tops.sort()

    heatbath_sites: List[Site] = []
    rects: List[Tuple[int, int, int, int]] = []
    half = L // 2
    for top in square_tops:
        bottom = top + L
        mid = top + L // 2
        row_sites = [(mid, j) for j in range(L)]
        column_sites = sorted((r, c) for r in range(top + 1, bottom) if r != mid for c in sorted({0, half}))
        sites = row_sites + column_sites
        context = [(top, j) for j in range(L)] + [(bottom, j) for j in range(L)]
        register("cross_1", "square-cross", len(context), len(sites))
        groups.append(SpinGroup("square-cross", sites, context, "cross_1", level=1))
        rects += [(top, mid, 0, half), (top, mid, half, L), (mid, bottom, 0, half), (mid, bottom, half, L)]

    level = 2
    while rects:
        next_rects = []
        for r0, r1, c0, c1 in rects:
            rows = list(range(r0 + 1, r1))
            cols = list(range(c0 + 1, c1))
            if not rows or not cols:
                continue
            if len(rows) == 1 and len(cols) == 1:
                heatbath_sites.append((rows[0], cols[0] % L))
                continue
            rm = r0 + (r1 - r0) // 2
            cm = c0 + (c1 - c0) // 2
            sites = [(rm, c % L) for c in cols] + [(r, cm % L) for r in rows if r != rm]
            context = _loop_sites(r0, r1, c0, c1, L)
            net_id = f"cross_{level}_{r1 - r0}x{c1 - c0}"
            register(net_id, "square-cross", len(context), len(sites))
            groups.append(SpinGroup("square-cross", sites, context, net_id, level=level))
            next_rects += [(r0, rm, c0, cm), (r0, rm, cm, c1), (rm, r1, c0, cm), (rm, r1, cm, c1)]
        rects = next_rects
        level += 1

    if heatbath_sites:
        heatbath_sites.sort()
        neighbours = sorted({n for site in heatbath_sites for n in _neighbours(site, L)})
        groups.append(SpinGroup(HEATBATH, heatbath_sites, neighbours, HEATBATH, level=level))

    plan = HierarchyPlan(L=L, m=m, l=l, groups=groups, net_specs=list(specs.values()))
    validate_plan(plan)
    return plan


def _loop_sites(r0: int, r1: int, c0: int, c1: int, L: int) -> List[Site]:
    top = [(r0, c % L) for c in range(c0, c1 + 1)]
    bottom = [(r1, c % L) for c in range(c0, c1 + 1)]
    left = [(r, c0 % L) for r in range(r0 + 1, r1)]
    right = [(r, c1 % L) for r in range(r0 + 1, r1)]
    return top + bottom + left + right


def _neighbours(site: Site, L: int) -> List[Site]:
    r, c = site
    return [(r - 1, c), (r + 1, c), (r, (c - 1) % L), (r, (c + 1) % L)]


def validate_plan(plan: HierarchyPlan) -> None:
    """Every site generated once, every context available before use."""
    available = set(plan.fixed_sites())
    for group in plan.groups:
        missing = [s for s in group.context_sites if s not in available]
        if missing:
            raise PlanError(f"{group.kind} group {group.net_id} conditions on unset sites {missing[:4]}")
        produced = group.sites + group.mirror_sites
        clash = [s for s in produced if s in available]
        if clash:
            raise PlanError(f"{group.kind} group {group.net_id} regenerates sites {clash[:4]}")
        available.update(produced)
    expected = plan.L * (plan.m + 1)
    if len(available) != expected:
        raise PlanError(f"plan covers {len(available)} of {expected} sites")


def stages(plan: HierarchyPlan) -> List[List[SpinGroup]]:
    """Consecutive groups sharing one net, which can be sampled as a single batch."""
    out: List[List[SpinGroup]] = []
    for group in plan.groups:
        if out and out[-1][0].net_id == group.net_id and group.net_id != HEATBATH:
            produced = {s for g in out[-1] for s in g.sites}
            if not produced.intersection(group.context_sites):
                out[-1].append(group)
                continue
        out.append([group])
    return out


def site_roles(plan: HierarchyPlan) -> np.ndarray:
    roles = np.empty((plan.m + 1, plan.L), dtype=object)
    for j in range(plan.l):
        roles[0, j] = SiteRole.BOUNDARY_A_TOP
        roles[plan.m, j] = SiteRole.BOUNDARY_A_BOTTOM
    by_kind = {
        "boundary-B": SiteRole.BOUNDARY_B_SHARED,
        "cut-line": SiteRole.CUT_LINE,
        "square-cross": SiteRole.SQUARE_CROSS,
        HEATBATH: SiteRole.HEATBATH,
    }
    for group in plan.groups:
        for r, c in group.sites + group.mirror_sites:
            roles[r, c] = by_kind[group.kind]
    return roles


def heatbath_logprob(config: SpinConfig, site: Site, c: CouplingSet) -> float:
    """log of the exact Boltzmann conditional of the realized spin given its four neighbours."""
    h = local_field(config, site, c)
    s = int(config.spins[site])
    return -float(np.logaddexp(0.0, -2.0 * s * h))


def _index(sites: Sequence[Site]) -> Tuple[torch.Tensor, torch.Tensor]:
    rows = torch.tensor([r for r, _ in sites], dtype=torch.long)
    cols = torch.tensor([c for _, c in sites], dtype=torch.long)
    return rows, cols


class HierarchicalSampler(BaseSampler):
    """Samples configurations from a plan and its nets for a batch of (μ_A, ν_A) boundaries."""

    def __init__(self, plan: HierarchyPlan, nets: HierarchyNets, c: CouplingSet):
        for spec in plan.net_specs:
            if spec.net_id not in nets:
                raise PlanError(f"no network for {spec.net_id}")
            net = nets[spec.net_id]
            if (net.n_ctx, net.n_out) != (spec.n_ctx, spec.n_out):
                raise PlanError(
                    f"net {spec.net_id} has shape {(net.n_ctx, net.n_out)}, plan needs {(spec.n_ctx, spec.n_out)}"
                )
        self.plan = plan
        self.nets = nets
        self.c = c
        self._stages = stages(plan)
        self._index = {id(g): (_index(g.sites), _index(g.context_sites)) for g in plan.groups}
        self._mirror = {id(g): _index(g.mirror_sites) for g in plan.groups if g.mirror_sites}
        self._heatbath = [g for g in plan.groups if g.net_id == HEATBATH]

    def empty_batch(self, boundaries: torch.Tensor) -> torch.Tensor:
        plan = self.plan
        batch = boundaries.shape[0]
        if boundaries.shape[1] != 2 * plan.l:
            raise PlanError(f"boundaries need {2 * plan.l} spins, got {boundaries.shape[1]}")
        spins = torch.zeros(batch, plan.m + 1, plan.L, dtype=DTYPE)
        spins[:, 0, : plan.l] = boundaries[:, : plan.l].to(DTYPE)
        spins[:, plan.m, : plan.l] = boundaries[:, plan.l :].to(DTYPE)
        return spins

    def sample_configuration(self, boundaries: torch.Tensor, generator: torch.Generator) -> FullSample:
        spins = self.empty_batch(boundaries)
        batch = spins.shape[0]
        log_q = torch.zeros(batch, dtype=DTYPE)
        for stage in self._stages:
            if stage[0].net_id == HEATBATH:
                log_q = log_q + self._sample_heatbath(spins, stage[0], generator)
                continue
            contexts = []
            for group in stage:
                _, (crow, ccol) = self._index[id(group)]
                context = spins[:, crow, ccol]
                if (context == 0).any():
                    raise PlanError(f"{group.kind} group {group.net_id} sampled before its context")
                contexts.append(context)
            drawn = autoreg.sample_group(self.nets[stage[0].net_id], torch.cat(contexts, dim=0), generator)
            for g, group in enumerate(stage):
                (rows, cols), _ = self._index[id(group)]
                chunk = slice(g * batch, (g + 1) * batch)
                spins[:, rows, cols] = drawn.spins[chunk]
                if id(group) in self._mirror:
                    mrows, mcols = self._mirror[id(group)]
                    spins[:, mrows, mcols] = drawn.spins[chunk]
                log_q = log_q + drawn.log_q[chunk]
        return FullSample(spins=spins, log_q=log_q, boundaries=boundaries.to(DTYPE))

    def _heatbath_field(self, spins: torch.Tensor, group: SpinGroup) -> torch.Tensor:
        (rows, cols), _ = self._index[id(group)]
        L = self.plan.L
        vertical = spins[:, rows - 1, cols] + spins[:, rows + 1, cols]
        horizontal = spins[:, rows, (cols - 1) % L] + spins[:, rows, (cols + 1) % L]
        return self.c.j_tau * vertical + self.c.j_s * horizontal

    def _sample_heatbath(self, spins: torch.Tensor, group: SpinGroup, generator: torch.Generator) -> torch.Tensor:
        (rows, cols), (crow, ccol) = self._index[id(group)]
        if (spins[:, crow, ccol] == 0).any():
            raise PlanError("heatbath site has an unset neighbour")
        h = self._heatbath_field(spins, group)
        u = torch.rand(h.shape, generator=generator, dtype=DTYPE)
        s = torch.where(u < torch.sigmoid(2.0 * h), 1.0, -1.0).to(DTYPE)
        spins[:, rows, cols] = s
        return F.logsigmoid(2.0 * s * h).sum(dim=1)

    def log_prob(self, spins: torch.Tensor) -> torch.Tensor:
        """log q(s \\ {μ_A, ν_A}) of complete configurations; differentiable in the net parameters."""
        total = torch.zeros(spins.shape[0], dtype=DTYPE)
        for group in self.plan.groups:
            (rows, cols), (crow, ccol) = self._index[id(group)]
            if group.net_id == HEATBATH:
                s = spins[:, rows, cols]
                total = total + F.logsigmoid(2.0 * s * self._heatbath_field(spins, group)).sum(dim=1)
            else:
                net = self.nets[group.net_id]
                total = total + autoreg.log_prob(net, spins[:, crow, ccol], spins[:, rows, cols])
        return total

    def group_log_probs(self, spins: torch.Tensor) -> List[torch.Tensor]:
        with torch.no_grad():
            parts = []
            for group in self.plan.groups:
                (rows, cols), (crow, ccol) = self._index[id(group)]
                if group.net_id == HEATBATH:
                    s = spins[:, rows, cols]
                    parts.append(F.logsigmoid(2.0 * s * self._heatbath_field(spins, group)).sum(dim=1))
                else:
                    parts.append(autoreg.log_prob(self.nets[group.net_id], spins[:, crow, ccol], spins[:, rows, cols]))
            return parts


def to_configs(sample: FullSample) -> List[SpinConfig]:
    return [SpinConfig(spins=s.round().to(torch.int8).numpy()) for s in sample.spins]


def count_net_spins(plan: HierarchyPlan) -> int:
    return sum(len(g.sites) for g in plan.groups if g.net_id != HEATBATH)


def zero_weight_log_q(plan: HierarchyPlan) -> float:
    return -count_net_spins(plan) * math.log(2.0)
