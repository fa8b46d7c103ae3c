"""Backward (self-sampled) KL training of a network hierarchy with a staged Adam schedule."""

import copy
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from scipy.special import logsumexp
from tqdm import tqdm

from ..interface.base_lattice import BasisState, CouplingSet, ModelParams
from ..interface.base_sampler import FullSample
from ..interface.base_trainer import BaseTrainer, EpochRecord, TrainConfig, TrainReport
from ..interface.errors import DivergenceError
from ..util import checkpoint as ckpt
from .autoreg import DTYPE, HierarchyNets
from .han import HierarchicalSampler, build_hierarchy
from .lattice import batch_energy, couplings

logger = logging.getLogger(__name__)


def draw_boundary_batch(generator: torch.Generator, l: int, batch: int) -> torch.Tensor:
    """(batch, 2l) independent ±1 spins with probability 1/2: μ_A in the first l columns, ν_A in the last l."""
    bits = torch.randint(0, 2, (batch, 2 * l), generator=generator)
    return (2 * bits - 1).to(DTYPE)


def draw_boundary_states(generator: torch.Generator, l: int) -> Tuple[BasisState, BasisState]:
    row = draw_boundary_batch(generator, l, 1)[0].to(torch.int64).tolist()
    return BasisState(tuple(row[:l])), BasisState(tuple(row[l:]))


def ess(log_weights: Sequence[float]) -> float:
    """(Σw)² / (N·Σw²) from log-weights; invariant under a common shift of all log-weights."""
    lw = np.asarray(log_weights, dtype=np.float64).ravel()
    if lw.size == 0:
        raise ValueError("ESS needs at least one weight")
    lw = lw - lw.max()
    return float(math.exp(2.0 * logsumexp(lw) - math.log(lw.size) - logsumexp(2.0 * lw)))


def log_weights(sample: FullSample, c: CouplingSet) -> torch.Tensor:
    return -batch_energy(sample.spins, c) - sample.log_q


@dataclass
class LossResult:
    f_q: float
    f_q_std: float
    gradients: Dict[str, torch.Tensor]


def loss_batch(sampler: HierarchicalSampler, sample: FullSample) -> LossResult:
    """F_q = mean(Ẽ + log q) and its score-function gradient with a batch-mean baseline."""
    nets = sampler.nets
    with torch.no_grad():
        signal = batch_energy(sample.spins, sampler.c) + sample.log_q
    f_q = float(signal.mean())
    f_q_std = float(signal.std()) if signal.numel() > 1 else 0.0
    if not math.isfinite(f_q):
        raise DivergenceError(f"non-finite F_q ({f_q})")
    log_q = sampler.log_prob(sample.spins)
    surrogate = ((signal - signal.mean()) * log_q).mean()
    names, params = zip(*[(n, p) for n, p in nets.named_parameters() if p.requires_grad])
    grads = torch.autograd.grad(surrogate, params)
    if not all(torch.isfinite(g).all() for g in grads):
        raise DivergenceError("non-finite gradient")
    return LossResult(f_q=f_q, f_q_std=f_q_std, gradients=dict(zip(names, grads)))


def probe_ess(sampler: HierarchicalSampler, samples: int, seed: int, chunk: int = 4096) -> float:
    """ESS over random boundaries, drawn from a stream independent of the training stream."""
    generator = torch.Generator().manual_seed(seed)
    parts = []
    with torch.no_grad():
        for start in range(0, samples, chunk):
            n = min(chunk, samples - start)
            sample = sampler.sample_configuration(draw_boundary_batch(generator, sampler.plan.l, n), generator)
            parts.append(log_weights(sample, sampler.c))
    return ess(torch.cat(parts).numpy())


def _stage_at(stages: List[Tuple[float, int]], epoch: int) -> Tuple[int, float]:
    start = 0
    for index, (lr, epochs) in enumerate(stages):
        if epoch < start + epochs:
            return index, lr
        start += epochs
    return len(stages) - 1, stages[-1][0]


@dataclass
class Trainer(BaseTrainer):
    """Trains one hierarchy for one (L, k, l, Δτ) point; optionally checkpoints and resumes."""

    checkpoint_path: Optional[Path] = None
    resume: bool = False
    progress: bool = True

    def setup(self, params: ModelParams, tc: TrainConfig) -> HierarchicalSampler:
        plan = build_hierarchy(params)
        nets = HierarchyNets.from_specs(plan.net_specs, hidden_factor=tc.hidden_factor, seed=tc.seed)
        return HierarchicalSampler(plan, nets, couplings(params))

    def train(self, params: ModelParams, tc: TrainConfig) -> TrainReport:
        started = time.perf_counter()
        sampler = self.setup(params, tc)
        nets = sampler.nets
        beta1, beta2, eps = tc.adam
        optimizer = torch.optim.Adam(nets.parameters(), lr=tc.stages[0][0], betas=(beta1, beta2), eps=eps)
        generator = torch.Generator().manual_seed(tc.seed)
        report = TrainReport(params=params)
        epoch, lr_scale = 0, 1.0

        if self.resume and self.checkpoint_path is not None and ckpt.state_path(self.checkpoint_path).exists():
            _, loaded = ckpt.load_checkpoint(self.checkpoint_path, sampler.plan, params)
            nets.load_state_dict(loaded.state_dict())
            state = ckpt.load_training_state(self.checkpoint_path)
            optimizer.load_state_dict(state["optimizer"])
            generator.set_state(state["generator"])
            epoch, lr_scale = state["epoch"], state["lr_scale"]
            report.records = [EpochRecord(**r) for r in state.get("records", [])]
            report.ess_probes = [(int(e), float(v)) for e, v in state.get("ess_probes", [])]
            report.rollbacks = state.get("rollbacks", 0)
            logger.info("resuming %s at epoch %d", params.tag(), epoch)

        total = sum(epochs for _, epochs in tc.stages)
        probe_every, probe_samples = tc.ess_probe
        snapshot = self._snapshot(nets, optimizer, generator, epoch)
        bar = tqdm(total=total, initial=epoch, disable=not self.progress, desc=params.tag(), leave=False)

        while epoch < total:
            stage, lr = _stage_at(tc.stages, epoch)
            for group in optimizer.param_groups:
                group["lr"] = lr * lr_scale
            try:
                boundaries = draw_boundary_batch(generator, params.l, tc.batch_size)
                sample = sampler.sample_configuration(boundaries, generator)
                result = loss_batch(sampler, sample)
            except DivergenceError as exc:
                report.rollbacks += 1
                if report.rollbacks > tc.max_rollbacks:
                    bar.close()
                    raise DivergenceError(f"training diverged at epoch {epoch} after {tc.max_rollbacks} rollbacks: {exc}") from exc
                lr_scale *= 0.5
                epoch = self._restore(snapshot, nets, optimizer, generator)
                report.records = report.records[:epoch]
                report.ess_probes = [p for p in report.ess_probes if p[0] < epoch]
                bar.n = epoch
                logger.warning("divergence at stage %d (%s); rolled back to epoch %d, lr scale %.3g", stage, exc, epoch, lr_scale)
                continue

            record = EpochRecord(epoch=epoch, f_q_mean=result.f_q, f_q_std=result.f_q_std, lr=lr * lr_scale)
            if epoch % probe_every == 0:
                # measured on the nets that produced this epoch's batch
                record.ess = self._probe(sampler, report, epoch, probe_samples, tc.seed)
                bar.set_postfix(F_q=f"{result.f_q:.4f}", ess=f"{record.ess:.3f}")

            optimizer.zero_grad(set_to_none=True)
            for name, param in nets.named_parameters():
                param.grad = result.gradients[name]
            optimizer.step()

            report.records = report.records[:epoch] + [record]
            epoch += 1
            bar.update(1)

            if epoch == total:
                self._probe(sampler, report, epoch, probe_samples, tc.seed)
            if epoch % tc.checkpoint_every == 0 or epoch == total:
                snapshot = self._snapshot(nets, optimizer, generator, epoch)
                if self.checkpoint_path is not None:
                    report.checkpoint_id = self._save(params, sampler, optimizer, generator, epoch, lr_scale, report)

        bar.close()
        if not report.ess_probes or report.ess_probes[-1][0] != total:
            self._probe(sampler, report, total, probe_samples, tc.seed)
        if self.checkpoint_path is not None and report.checkpoint_id is None:
            report.checkpoint_id = self._save(params, sampler, optimizer, generator, epoch, lr_scale, report)
        report.wall_clock = time.perf_counter() - started
        logger.info("trained %s in %.1fs (%d rollbacks)", params.tag(), report.wall_clock, report.rollbacks)
        return report

    @staticmethod
    def _probe(sampler: HierarchicalSampler, report: TrainReport, epoch: int, samples: int, seed: int) -> float:
        value = probe_ess(sampler, samples, seed=seed + 1_000_003 + epoch)
        report.ess_probes = [p for p in report.ess_probes if p[0] < epoch] + [(epoch, value)]
        return value

    def _snapshot(self, nets: HierarchyNets, optimizer: torch.optim.Optimizer, generator: torch.Generator, epoch: int) -> Dict:
        return {
            "nets": copy.deepcopy(nets.state_dict()),
            "optimizer": copy.deepcopy(optimizer.state_dict()),
            "generator": generator.get_state(),
            "epoch": epoch,
        }

    def _restore(self, snapshot: Dict, nets: HierarchyNets, optimizer: torch.optim.Optimizer, generator: torch.Generator) -> int:
        nets.load_state_dict(snapshot["nets"])
        optimizer.load_state_dict(copy.deepcopy(snapshot["optimizer"]))
        generator.set_state(snapshot["generator"])
        return snapshot["epoch"]

    def _save(self, params, sampler, optimizer, generator, epoch, lr_scale, report) -> str:
        checkpoint_id = ckpt.save_checkpoint(self.checkpoint_path, params, sampler.plan, sampler.nets)
        ckpt.save_training_state(
            self.checkpoint_path,
            {
                "optimizer": optimizer.state_dict(),
                "generator": generator.get_state(),
                "epoch": epoch,
                "lr_scale": lr_scale,
                "records": [r.model_dump() for r in report.records],
                "ess_probes": list(report.ess_probes),
                "rollbacks": report.rollbacks,
                "params": params.model_dump(),
            },
        )
        return checkpoint_id


def fixed_boundary_fq(sampler: HierarchicalSampler, mu: BasisState, nu: BasisState, samples: int, seed: int) -> Tuple[float, float]:
    """Mean and standard error of Ẽ + log q at one fixed (μ_A, ν_A)."""
    generator = torch.Generator().manual_seed(seed)
    boundary = torch.tensor(list(mu.bits) + list(nu.bits), dtype=DTYPE).expand(samples, -1)
    with torch.no_grad():
        sample = sampler.sample_configuration(boundary, generator)
        signal = batch_energy(sample.spins, sampler.c) + sample.log_q
    return float(signal.mean()), float(signal.std() / math.sqrt(samples))
