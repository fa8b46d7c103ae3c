"""Acceptance suite: exact-oracle equivalences, property checks and small physics reproductions."""

import logging
import math
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import torch

from ..interface.base_evaluator import BaseEvaluator, CheckResult
from ..interface.base_extrapolator import EntropySeries, SeriesPoint
from ..interface.base_lattice import ModelParams, SpinConfig
from ..interface.base_spectral import Spectrum
from ..interface.base_trainer import TrainConfig
from ..util import checkpoint as ckpt
from . import autoreg, extrapolate, oracle, spectral
from .estimator import NISEstimator
from .han import heatbath_logprob
from .lattice import couplings_from, energy, index_bits, index_to_state
from .training import Trainer, fixed_boundary_fq, probe_ess

logger = logging.getLogger(__name__)

Check = Callable[[], Tuple[bool, str]]

SMALL_PARAMS = ModelParams(J=1.0, h=1.0, dtau=0.4, L=4, k=2, l=1)
SMALL_TRAINING = TrainConfig(
    batch_size=1024,
    stages=[(0.003, 400), (0.001, 400), (0.0001, 200), (0.00001, 200)],
    checkpoint_every=200,
    ess_probe=(200, 4096),
)


@dataclass
class AcceptanceEvaluator(BaseEvaluator):
    seed: int = 0
    jobs: int = 1
    nis_samples: int = 1_000_000
    nis_replicas: int = 200
    pull_replicas: int = 500
    train_config: TrainConfig = field(default_factory=lambda: SMALL_TRAINING.model_copy())
    # runs the estimate command twice into fresh directories and returns both matrix CSVs
    estimate_twice: Optional[Callable[[], Tuple[bytes, bytes]]] = None
    # runs the scaled-down L=8 pipeline and returns (extrapolated S, its total error, exact S)
    headline: Optional[Callable[[], Tuple[float, float, float]]] = None
    _trained: Dict[str, object] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def checks(self, full: bool = False) -> Dict[str, Check]:
        fast = {
            "oracle-cross-validation": self.check_oracle_cross,
            "heatbath-exactness": self.check_heatbath,
            "gradient-correctness": self.check_gradient,
            "normalization": self.check_normalization,
            "entropy-identities": self.check_entropy_identities,
            "extrapolation-recovery": self.check_extrapolation,
            "noise-free-closure": self.check_closure,
            "cft-formula": self.check_cft,
        }
        if not full:
            return fast
        return {
            **fast,
            "variational-bound": self.check_variational_bound,
            "nis-correctness": self.check_nis,
            "reproducibility": self.check_reproducibility,
            "scaled-down-headline": self.check_headline,
        }

    def run(self, full: bool = False) -> List[CheckResult]:
        checks = self.checks(full)
        with ThreadPoolExecutor(max_workers=max(1, self.jobs)) as executor:
            return list(executor.map(self._timed, checks.keys(), checks.values()))

    def _timed(self, name: str, check: Check) -> CheckResult:
        started = time.perf_counter()
        try:
            passed, detail = check()
        except Exception as exc:  # a crashing check is a failed check
            logger.exception("check %s raised", name)
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        return CheckResult(name=name, passed=bool(passed), detail=detail, seconds=time.perf_counter() - started)

    def check_oracle_cross(self) -> Tuple[bool, str]:
        worst = 0.0
        for L, k in [(3, 1), (3, 2), (4, 1)]:
            for l in range(1, L):
                params = ModelParams(J=1.0, h=1.0, dtau=0.4, L=L, k=k, l=l)
                enum = oracle.enumerate_rdm(params)
                tm = oracle.transfer_matrix_rdm(params)
                rel = np.abs(enum.rho - tm.rho) / np.abs(tm.rho)
                worst = max(worst, float(rel.max()), float(np.abs(enum.log_z - tm.log_z).max()))
        return worst <= 1e-10, f"max relative deviation {worst:.2e}"

    def check_heatbath(self) -> Tuple[bool, str]:
        rng = np.random.default_rng(self.seed)
        worst = 0.0
        for _ in range(1000):
            c = couplings_from(rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0), rng.uniform(0.05, 0.6))
            spins = rng.choice([-1, 1], size=(3, 3)).astype(np.int8)
            up, down = spins.copy(), spins.copy()
            up[1, 1], down[1, 1] = 1, -1
            p_sampler = math.exp(heatbath_logprob(SpinConfig(up), (1, 1), c))
            delta = energy(SpinConfig(up), c) - energy(SpinConfig(down), c)
            p_boltzmann = 1.0 / (1.0 + math.exp(delta))
            worst = max(worst, abs(p_sampler - p_boltzmann))
        return worst <= 1e-12, f"max |p - p_Boltzmann| {worst:.2e} over 1000 neighbourhoods"

    def check_gradient(self) -> Tuple[bool, str]:
        gen = torch.Generator().manual_seed(self.seed)
        net = autoreg.MaskedNet(n_ctx=2, n_out=6)
        autoreg.reset_parameters(net, self.seed)
        with torch.no_grad():
            for layer in (net.layer1, net.layer2):
                layer.bias.copy_(0.1 * torch.randn(layer.bias.shape, generator=gen, dtype=autoreg.DTYPE))
        context = torch.randint(0, 2, (16, 2), generator=gen).to(autoreg.DTYPE) * 2 - 1
        spins = torch.randint(0, 2, (16, 6), generator=gen).to(autoreg.DTYPE) * 2 - 1
        weights = torch.randn(16, generator=gen, dtype=autoreg.DTYPE)
        grads = autoreg.grad_loss(net, context, spins, weights)

        def objective() -> float:
            with torch.no_grad():
                return float((weights * autoreg.log_prob(net, context, spins)).sum())

        worst = 0.0
        step = 1e-4
        for name, param in net.named_parameters():
            numeric = torch.zeros_like(param)
            flat, out = param.data.view(-1), numeric.view(-1)
            for i in range(flat.numel()):
                keep = float(flat[i])
                flat[i] = keep + step
                plus = objective()
                flat[i] = keep - step
                minus = objective()
                flat[i] = keep
                out[i] = (plus - minus) / (2 * step)
            scale = max(float(numeric.norm()), 1e-12)
            worst = max(worst, float((grads[name] - numeric).norm()) / scale)
        return worst <= 1e-4, f"max relative gradient error {worst:.2e}"

    def check_normalization(self) -> Tuple[bool, str]:
        worst = 0.0
        for n_ctx, n_out in [(0, 1), (3, 5), (4, 12)]:
            net = autoreg.init_net(n_ctx + n_out, n_out, seed=self.seed + n_out)
            gen = torch.Generator().manual_seed(self.seed + n_out)
            with torch.no_grad():
                net.layer2.bias.copy_(torch.randn(n_out, generator=gen, dtype=autoreg.DTYPE))
            every = torch.from_numpy(index_bits(np.arange(2**n_out), n_out).astype(np.float64))
            context = (torch.randint(0, 2, (1, n_ctx), generator=gen) * 2 - 1).to(autoreg.DTYPE).expand(every.shape[0], -1)
            with torch.no_grad():
                total = float(torch.logsumexp(autoreg.log_prob(net, context, every), dim=0).exp())
            worst = max(worst, abs(total - 1.0))
        return worst <= 1e-8, f"max |Σq - 1| {worst:.2e}"

    def check_entropy_identities(self) -> Tuple[bool, str]:
        problems = []
        pure = Spectrum(np.array([1.0, 0.0, 0.0, 0.0]))
        if any(abs(v.value) > 1e-12 for v in spectral.entropy_table(pure)):
            problems.append("pure state")
        for l in range(1, 6):
            uniform = Spectrum(np.full(2**l, 2.0**-l))
            if any(abs(v.value - l * math.log(2)) > 1e-12 for v in spectral.entropy_table(uniform)):
                problems.append(f"uniform l={l}")
        rng = np.random.default_rng(self.seed)
        limit_gap, monotone = 0.0, True
        for _ in range(100):
            sp = Spectrum(np.sort(rng.dirichlet(np.ones(8)))[::-1])
            vn = spectral.von_neumann(sp).value
            limit_gap = max(limit_gap, abs(spectral.renyi(sp, 1.001).value - vn))
            chain = [spectral.renyi(sp, 0.5).value, vn] + [spectral.renyi(sp, n).value for n in range(2, 10)]
            monotone &= all(a >= b - 1e-12 for a, b in zip(chain, chain[1:]))
        if limit_gap > 5e-3:
            problems.append(f"n→1 limit gap {limit_gap:.2e}")
        if not monotone:
            problems.append("S_n not monotone")
        return not problems, ", ".join(problems) or f"all identities hold (n→1 gap {limit_gap:.1e})"

    def check_extrapolation(self) -> Tuple[bool, str]:
        grid = [(d, -0.25 - 0.2 * d, 0.8 + d) for d in (0.4, 0.35, 0.3, 0.25, 0.2)]
        exact = extrapolate.fit_combined(extrapolate.synthetic_series(0.55, -0.3, grid, range(2, 9), 1e-4))
        recovered = abs(exact.S - 0.55)
        pulls = extrapolate.pull_study(0.55, -0.3, grid[::2], range(2, 9), 1e-3, self.pull_replicas, seed=self.seed)
        mean, std = float(pulls.mean()), float(pulls.std(ddof=1))
        passed = recovered <= 1e-8 and abs(mean) <= 0.1 and 0.85 <= std <= 1.15
        return passed, f"|ΔS|={recovered:.1e}, pull mean {mean:+.3f}, std {std:.3f}"

    def check_closure(self) -> Tuple[bool, str]:
        details, passed = [], True
        for l in (1, 2):
            points = []
            for dtau in (0.4, 0.3, 0.2):
                for k in range(2, 9):
                    params = ModelParams(J=1.0, h=1.0, dtau=dtau, L=8, k=k, l=l)
                    vn = oracle.oracle_entropies(params, orders=())[0].value
                    points.append(SeriesPoint(dtau=dtau, k=k, value=vn, error=1e-6))
            fit = extrapolate.fit_combined(EntropySeries(points=points, l=l))
            target = oracle.exact_ground_state_rdm(8, l).entropies[0].value
            rel = abs(fit.S - target) / target
            passed &= rel <= 0.01
            details.append(f"l={l}: S={fit.S:.5f} exact={target:.5f} ({100 * rel:.2f}%)")
        return passed, "; ".join(details)

    def check_cft(self) -> Tuple[bool, str]:
        value = oracle.cft_entropy(32, 5)
        return abs(value - 0.7401) <= 1e-4, f"S_CFT(32, 5) = {value:.6f}"

    def _trained_sampler(self):
        with self._lock:
            return self._train_once()

    def _train_once(self):
        if "sampler" not in self._trained:
            workdir = Path(tempfile.mkdtemp(prefix="han-accept-"))
            path = workdir / f"{SMALL_PARAMS.tag()}.ckpt"
            tc = self.train_config.model_copy(update={"seed": self.seed})
            trainer = Trainer(checkpoint_path=path, progress=False)
            reports = []
            for end in range(1, len(tc.stages) + 1):
                # resume stage by stage so the bound can be checked after each one
                staged = tc.model_copy(update={"stages": tc.stages[:end]})
                trainer.resume = end > 1
                reports.append(trainer.train(SMALL_PARAMS, staged))
                self._trained.setdefault("stage_samplers", []).append(self._load(trainer, path, staged))
            self._trained["sampler"] = self._trained["stage_samplers"][-1]
            self._trained["reports"] = reports
        return self._trained["sampler"]

    def _load(self, trainer: Trainer, path: Path, tc: TrainConfig):
        sampler = trainer.setup(SMALL_PARAMS, tc)
        _, nets = ckpt.load_checkpoint(path, sampler.plan, SMALL_PARAMS)
        sampler.nets.load_state_dict(nets.state_dict())
        return sampler

    def check_variational_bound(self) -> Tuple[bool, str]:
        self._trained_sampler()
        exact = oracle.transfer_matrix_rdm(SMALL_PARAMS)
        l = SMALL_PARAMS.l
        worst, passed = math.inf, True
        for stage, sampler in enumerate(self._trained["stage_samplers"]):
            for mu in range(2**l):
                for nu in range(2**l):
                    mean, se = fixed_boundary_fq(sampler, index_to_state(mu, l), index_to_state(nu, l), 20000, self.seed + stage)
                    margin = mean - (-exact.log_z[mu, nu]) + 3 * se
                    worst = min(worst, margin / max(se, 1e-12))
                    passed &= margin >= 0
        return passed, f"smallest margin {worst:.2f} standard errors"

    def check_nis(self) -> Tuple[bool, str]:
        sampler = self._trained_sampler()
        estimator = NISEstimator(sampler=sampler, params=SMALL_PARAMS, replicas=self.nis_replicas)
        est = estimator.estimate_rdm(self.nis_samples, seed=self.seed)
        exact = oracle.transfer_matrix_rdm(SMALL_PARAMS).rho
        sigmas = np.abs(est.rho - exact) / np.maximum(est.err, 1e-300)
        rel = np.abs(est.rho - exact) / exact
        final_ess = probe_ess(sampler, 65536, seed=self.seed + 17)
        passed = bool((sigmas <= 3).all() and (rel <= 0.01).all() and final_ess >= 0.05)
        return passed, f"max {sigmas.max():.2f}σ, max rel {100 * rel.max():.3f}%, ESS {final_ess:.3f}"

    def check_reproducibility(self) -> Tuple[bool, str]:
        if self.estimate_twice is None:
            return False, "no estimate runner configured"
        first, second = self.estimate_twice()
        return first == second, f"{len(first)} bytes, identical={first == second}"

    def check_headline(self) -> Tuple[bool, str]:
        if self.headline is None:
            return False, "no pipeline runner configured"
        value, total_err, exact = self.headline()
        pull = abs(value - exact) / total_err if total_err > 0 else math.inf
        return pull <= 3.0, f"S={value:.5f} ± {total_err:.5f}, exact {exact:.5f} ({pull:.2f}σ)"
