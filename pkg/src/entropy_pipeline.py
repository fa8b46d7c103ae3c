import logging
import shutil
import tempfile
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .impl import estimator as nis
from .impl import oracle
from .impl.estimator import NISEstimator
from .impl.extrapolate import fit_dtau2, fit_k_single
from .impl.han import HierarchicalSampler
from .impl.lattice import basis_label, couplings
from .impl.spectral import eigh, entropy_table
from .impl.training import Trainer
from .interface import (
    AcceptanceError,
    BaseEvaluator,
    BaseExtrapolator,
    BaseOracle,
    CheckResult,
    EntropySeries,
    FitError,
    FitResult,
    MissingInputError,
    ModelParams,
    SeriesPoint,
    TrainReport,
)
from .interface.base_extrapolator import FIT_COLUMNS
from .util import plots, report
from .util.checkpoint import checkpoint_id, load_checkpoint, saved_epoch, state_path
from .util.run_config import RunConfig

logger = logging.getLogger(__name__)

ENTROPY_COLUMNS = ["L", "l", "k", "dtau", "beta", "quantity", "value", "error"]
SPECTRUM_COLUMNS = ["rank", "eigenvalue", "error"]
TRAIN_COLUMNS = ["epoch", "F_q_mean", "F_q_std", "ess", "lr"]
SINGLE_FIT_COLUMNS = ["quantity", "l", "dtau", "a", "a_err", "b", "b_err", "c", "c_err", "chi2_dof", "converged"]
ORACLE_COLUMNS = ["L", "l", "k", "dtau", "beta", "quantity", "value"]
GROUND_COLUMNS = ["L", "l", "J", "h", "quantity", "value", "cft", "energy", "degenerate"]
SUMMARY_COLUMNS = ["quantity", "l", "S", "total_err", "exact", "cft", "pull"]

HEADLINE_GRID = {
    "model": {"L": 8, "l_values": [1], "dtaus": [0.4, 0.3, 0.2], "ks": [2, 3, 4, 5, 6]},
    "train": {"batch_size": 1024, "stages": [[0.003, 3000], [0.001, 3000], [0.0001, 1000], [0.00001, 1000]]},
    "estimator": {"n_samples": 1_000_000, "bootstrap": 200, "orders": [2.0]},
}


@dataclass
class EntropyPipeline:
    """Train → estimate → entropy → extrapolate → report over the (l, Δτ, k) grid of a RunConfig."""

    config: RunConfig
    extrapolator: BaseExtrapolator
    oracle: BaseOracle
    evaluator: Optional[BaseEvaluator] = None
    force: bool = False
    progress: bool = True

    @property
    def reports(self) -> Path:
        return self.config.paths.reports

    def meta(self, **extra) -> Dict[str, object]:
        return {"config_hash": self.config.config_hash(), **extra}

    def _map(self, fn, items: List) -> List:
        with ThreadPoolExecutor(max_workers=self.config.run.jobs) as executor:
            return list(executor.map(fn, items))

    # train

    def cmd_train(self) -> List[Optional[TrainReport]]:
        self.config.prepare()
        return self._map(self._train_point, self.config.grid())

    def _train_point(self, params: ModelParams) -> Optional[TrainReport]:
        path = self.config.checkpoint_path(params)
        tc = self.config.train_config(params)
        total = sum(epochs for _, epochs in tc.stages)
        done = saved_epoch(path) if path.exists() else None
        resume = False
        if path.exists() and not self.force:
            if done is not None and done >= total:
                print(f"⏭️  {params.tag()}: checkpoint complete, skipping")
                return None
            if done is None:
                logger.warning("%s: checkpoint without training state, retraining from scratch", params.tag())
            else:
                resume = True
                print(f"🔁 Resuming {params.tag()} at epoch {done}/{total}...")
        if not resume:
            print(f"🧠 Training {params.tag()}...")
        trainer = Trainer(checkpoint_path=path, resume=resume, progress=self.progress and self.config.run.jobs == 1)
        result = trainer.train(params, tc)
        rows = [[r.epoch, r.f_q_mean, r.f_q_std, r.ess, r.lr] for r in result.records]
        report.write_csv(self.reports / "train" / f"{params.tag()}.csv", TRAIN_COLUMNS, rows, self.meta(checkpoint_id=result.checkpoint_id))
        last_ess = result.ess_probes[-1][1] if result.ess_probes else float("nan")
        print(f"✅ {params.tag()}: F_q={result.records[-1].f_q_mean:.5f}, ESS={last_ess:.4f}, {result.wall_clock:.1f}s")
        return result

    # estimate

    def load_sampler(self, params: ModelParams) -> Tuple[HierarchicalSampler, str]:
        path = self.config.checkpoint_path(params)
        if not path.exists():
            raise MissingInputError(f"no checkpoint for {params.tag()} at {path}; run `train` first")
        sampler = Trainer(progress=False).setup(params, self.config.train_config(params))
        _, nets = load_checkpoint(path, sampler.plan, params)
        return HierarchicalSampler(sampler.plan, nets, couplings(params)), checkpoint_id(path)

    def _estimator(self, params: ModelParams, sampler=None, ckpt_id: Optional[str] = None) -> NISEstimator:
        est = self.config.estimator
        return NISEstimator(
            sampler=sampler,
            params=params,
            chunk=est.chunk,
            ess_floor=est.ess_floor,
            jobs=self.config.run.jobs,
            replicas=est.bootstrap,
            stream_dir=self.config.stream_dir(params),
            checkpoint_id=ckpt_id,
        )

    def matrix_path(self, params: ModelParams) -> Path:
        return self.reports / "matrices" / f"{params.tag()}.csv"

    def cmd_estimate(self) -> List[Path]:
        self.config.prepare()
        return self._map(self._estimate_point, self.config.grid())

    def _estimate_point(self, params: ModelParams) -> Path:
        sampler, ckpt_id = self.load_sampler(params)
        print(f"🎲 Sampling {4 ** params.l} elements of ρ_A for {params.tag()}...")
        estimate = self._estimator(params, sampler, ckpt_id).estimate_rdm(self.config.estimator.n_samples, seed=self.config.point_seed(params))
        path = nis.write_matrix_csv(self.matrix_path(params), estimate, self.meta())
        low = int(sum(s.low_ess for row in estimate.stats for s in row))
        print(f"✅ {params.tag()}: min ESS {estimate.ess.min():.4f}{f', {low} low-ESS elements' if low else ''}")
        return path

    # entropy

    def cmd_entropy(self) -> Path:
        points = self._map(self._entropy_point, self.config.grid())
        rows = [row for chunk in points for row in chunk]
        path = report.write_csv(self.reports / "entropies.csv", ENTROPY_COLUMNS, rows, self.meta())
        print(f"📊 Wrote {len(rows)} entropy values to {path}")
        return path

    def _entropy_point(self, params: ModelParams) -> List[List]:
        ckpt = self.config.checkpoint_path(params)
        ckpt_id = checkpoint_id(ckpt) if ckpt.exists() else None
        estimate = self._estimator(params, ckpt_id=ckpt_id).load_streams(seed=self.config.point_seed(params))
        sp = eigh(estimate.rho)
        boot = estimate.bootstrap
        errors = boot.eigenvalue_err if boot is not None else np.zeros(estimate.dim)
        report.write_csv(
            self.reports / "spectra" / f"{params.tag()}.csv",
            SPECTRUM_COLUMNS,
            [[i + 1, float(lam), float(err)] for i, (lam, err) in enumerate(zip(sp.eigenvalues, errors))],
            self.meta(checkpoint_id=ckpt_id),
        )
        rows = []
        for value in entropy_table(sp, self.config.estimator.orders):
            error = boot.entropy_err.get(value.key, 0.0) if boot is not None else 0.0
            rows.append([params.L, params.l, params.k, params.dtau, params.beta, value.key, value.value, error])
        return rows

    # extrapolate

    def load_series(self) -> List[EntropySeries]:
        path = self.reports / "entropies.csv"
        if not path.exists():
            raise MissingInputError(f"{path} not found; run `entropy` first")
        _, rows = report.read_csv(path)
        grouped: Dict[Tuple[str, int], List[SeriesPoint]] = defaultdict(list)
        for r in rows:
            error = float(r["error"])
            grouped[(r["quantity"], int(r["l"]))].append(
                SeriesPoint(dtau=float(r["dtau"]), k=int(r["k"]), value=float(r["value"]), error=error if error > 0 else 1e-12)
            )
        return [EntropySeries(points=pts, quantity=q, l=l) for (q, l), pts in sorted(grouped.items(), key=lambda kv: (kv[0][1], _order_key(kv[0][0])))]

    def cmd_extrapolate(self) -> List[FitResult]:
        fits, singles = [], []
        for series in self.load_series():
            for dtau in series.dtaus():
                pts = series.at(dtau)
                if len(pts) >= 4:
                    try:
                        s = fit_k_single(pts)
                        singles.append([series.quantity, series.l, dtau, s.a, s.errors[0], s.b, s.errors[1], s.c, s.errors[2], s.chi2_dof, s.converged])
                    except FitError as exc:
                        logger.warning("single fit %s l=%d Δτ=%g failed: %s", series.quantity, series.l, dtau, exc)
            if len(series.dtaus()) < 2 or any(len(series.at(d)) < 3 for d in series.dtaus()):
                logger.warning("%s l=%d: grid too small for the combined fit", series.quantity, series.l)
                continue
            try:
                fit = self.extrapolator.fit_combined(series)
            except FitError as exc:
                logger.warning("combined fit %s l=%d failed: %s", series.quantity, series.l, exc)
                continue
            fits.append(fit)
            if series.quantity == "vn":
                plots.entropy_vs_k(self.reports / "plots" / f"entropy_vs_k_l{series.l}.svg", series, fit)
            print(f"📈 {series.quantity} l={series.l}: S = {fit.S:.5f} ± {fit.total_err:.5f} (χ²/dof {fit.chi2_dof:.2f})")

        report.write_csv(self.reports / "fits.csv", FIT_COLUMNS, [f.to_row() for f in fits], self.meta())
        report.write_csv(self.reports / "fits_single.csv", SINGLE_FIT_COLUMNS, singles, self.meta())
        self._extrapolation_plots(fits, singles)
        return fits

    def _extrapolation_plots(self, fits: List[FitResult], singles: List[List]) -> None:
        L = self.config.model.L
        for l in sorted({row[1] for row in singles if row[0] == "vn"}):
            avals = [(row[2], row[3], max(row[4], 1e-12)) for row in singles if row[0] == "vn" and row[1] == l]
            if len(avals) >= 2:
                plots.a_vs_dtau2(self.reports / "plots" / f"a_vs_dtau2_l{l}.svg", avals, fit_dtau2(avals))
        vn = {f.l: (f.S, f.total_err) for f in fits if f.quantity == "vn"}
        if vn:
            cft = {l: oracle.cft_entropy(L, l) for l in range(1, L)}
            plots.entropy_vs_l(self.reports / "plots" / "entropy_vs_l.svg", L, vn, cft, self._exact_vn())
        for l in sorted({f.l for f in fits}):
            values = {(1.0 if f.quantity == "vn" else float(f.quantity)): (f.S, f.total_err) for f in fits if f.l == l}
            plots.renyi_vs_n(self.reports / "plots" / f"renyi_vs_n_l{l}.svg", values, title=f"l={l}")

    def _exact_vn(self) -> Optional[Dict[int, float]]:
        m = self.config.model
        if m.L > oracle.MAX_SPARSE_L:
            return None
        return {l: oracle.exact_ground_state_rdm(m.L, l, m.J, m.h, orders=()).entropies[0].value for l in m.l_values}

    # oracle

    def cmd_oracle(self) -> Path:
        m = self.config.model
        rows = []
        for params in self.config.grid():
            if params.L > oracle.MAX_TRANSFER_L:
                logger.warning("%s: L too large for the transfer matrix, skipped", params.tag())
                continue
            exact = self.oracle.classical_rdm(params)
            self._write_oracle_matrix(params, exact.rho)
            for value in entropy_table(eigh(0.5 * (exact.rho + exact.rho.T)), self.config.estimator.orders):
                rows.append([params.L, params.l, params.k, params.dtau, params.beta, value.key, value.value])
        report.write_csv(self.reports / "oracle_entropies.csv", ORACLE_COLUMNS, rows, self.meta(oracle=True))

        ground = []
        if m.L <= oracle.MAX_SPARSE_L:
            for l in m.l_values:
                q = oracle.exact_ground_state_rdm(m.L, l, m.J, m.h, orders=self.config.estimator.orders)
                for value in q.entropies:
                    cft = oracle.cft_entropy(m.L, l) if value.key == "vn" and l < m.L else None
                    ground.append([m.L, l, m.J, m.h, value.key, value.value, cft, q.system.energy, q.system.degenerate])
        path = report.write_csv(self.reports / "ground_state.csv", GROUND_COLUMNS, ground, self.meta(oracle=True))
        print(f"🔬 Oracle values for {len(rows)} thermal and {len(ground)} ground-state entropies written")
        return path

    def _write_oracle_matrix(self, params: ModelParams, rho: np.ndarray) -> Path:
        rows = [
            [basis_label(mu, params.l), basis_label(nu, params.l), float(rho[mu, nu]), 0.0, "", "", ""]
            for mu in range(rho.shape[0])
            for nu in range(rho.shape[1])
        ]
        return report.write_csv(self.reports / "oracle" / f"{params.tag()}.csv", nis.MATRIX_COLUMNS, rows, self.meta(oracle=True))

    # verify

    def cmd_verify(self, full: bool = False) -> List[CheckResult]:
        if self.evaluator is None:
            raise MissingInputError("no evaluator configured")
        if full and getattr(self.evaluator, "estimate_twice", True) is None:
            self.evaluator.estimate_twice = self.estimate_twice
        if full and getattr(self.evaluator, "headline", True) is None:
            self.evaluator.headline = self.headline_run
        results = self.evaluator.run(full=full)
        for result in results:
            emoji = "✅" if result.passed else "❌"
            print(f"{emoji} {result.name} ({result.seconds:.1f}s): {result.detail}")
        passed = sum(r.passed for r in results)
        print(f"✨ Total Score: {passed}/{len(results)}")
        if passed != len(results):
            raise AcceptanceError(f"{len(results) - passed} acceptance check(s) failed")
        return results

    def estimate_twice(self) -> Tuple[bytes, bytes]:
        """Two single-worker estimate runs from one checkpoint into separate directories."""
        params = self.config.grid()[0]
        outputs = []
        with tempfile.TemporaryDirectory(prefix="han-repro-") as tmp:
            base = self.config.model_copy(deep=True)
            base.run.jobs = 1
            base.paths.checkpoints = Path(tmp) / "checkpoints"
            if not self.config.checkpoint_path(params).exists():
                EntropyPipeline(base, self.extrapolator, self.oracle, progress=False)._train_point(params)
            else:
                base.paths.checkpoints.mkdir(parents=True)
                shutil.copy(self.config.checkpoint_path(params), base.checkpoint_path(params))
                state = state_path(self.config.checkpoint_path(params))
                if state.exists():
                    shutil.copy(state, state_path(base.checkpoint_path(params)))
            for run in ("a", "b"):
                cfg = base.model_copy(deep=True)
                cfg.paths.streams = Path(tmp) / run / "streams"
                cfg.paths.reports = Path(tmp) / run / "reports"
                cfg.prepare()
                path = EntropyPipeline(cfg, self.extrapolator, self.oracle, progress=False)._estimate_point(params)
                outputs.append(path.read_bytes())
        return outputs[0], outputs[1]

    def headline_run(self, workdir: Optional[Path] = None) -> Tuple[float, float, float]:
        """Scaled-down physics reproduction: extrapolated von Neumann S at L=8, l=1, its total error, and the exact value."""
        with tempfile.TemporaryDirectory(prefix="han-headline-") as tmp:
            root = Path(workdir) if workdir is not None else Path(tmp)
            config = RunConfig.model_validate(
                {
                    **HEADLINE_GRID,
                    "paths": {"checkpoints": root / "checkpoints", "streams": root / "streams", "reports": root / "reports"},
                    "run": {"seed": self.config.run.seed, "jobs": self.config.run.jobs},
                }
            )
            pipeline = EntropyPipeline(config, self.extrapolator, self.oracle, progress=False)
            pipeline.cmd_train()
            pipeline.cmd_estimate()
            pipeline.cmd_entropy()
            fits = [f for f in pipeline.cmd_extrapolate() if f.quantity == "vn" and f.l == 1]
        if not fits:
            raise FitError(0, "no combined fit for the scaled-down grid")
        exact = oracle.exact_ground_state_rdm(8, 1, orders=()).entropies[0].value
        return fits[0].S, fits[0].total_err, exact

    # report

    def cmd_report(self) -> Path:
        fits = self.load_fits()
        exact = self._exact_table()
        L = self.config.model.L
        rows = []
        for f in fits:
            ex = exact.get((f["quantity"], int(f["l"])))
            S, err = float(f["S"]), float(f["total_err"])
            cft = oracle.cft_entropy(L, int(f["l"])) if f["quantity"] == "vn" else None
            pull = (S - ex) / err if ex is not None and err > 0 else None
            rows.append([f["quantity"], int(f["l"]), S, err, ex, cft, pull])
        path = report.write_csv(self.reports / "summary.csv", SUMMARY_COLUMNS, rows, self.meta())

        for params in self.config.grid():
            matrix = self.matrix_path(params)
            if not matrix.exists():
                continue
            data = nis.read_matrix_csv(matrix)
            labels = [basis_label(i, params.l) for i in range(data["rho"].shape[0])]
            plots.rho_heatmap(self.reports / "plots" / f"rho_{params.tag()}.svg", data["rho"], labels, title=params.tag())
            spectrum = self.reports / "spectra" / f"{params.tag()}.csv"
            if spectrum.exists():
                _, spec_rows = report.read_csv(spectrum)
                plots.eigenvalue_plot(
                    self.reports / "plots" / f"spectrum_{params.tag()}.svg",
                    np.array([float(r["eigenvalue"]) for r in spec_rows]),
                    np.array([float(r["error"]) for r in spec_rows]),
                    title=params.tag(),
                )
        print(f"📊 Summary written to {path}")
        return path

    def load_fits(self) -> List[Dict[str, str]]:
        path = self.reports / "fits.csv"
        if not path.exists():
            raise MissingInputError(f"{path} not found; run `extrapolate` first")
        return report.read_csv(path)[1]

    def _exact_table(self) -> Dict[Tuple[str, int], float]:
        path = self.reports / "ground_state.csv"
        if not path.exists():
            return {}
        return {(r["quantity"], int(r["l"])): float(r["value"]) for r in report.read_csv(path)[1]}


def _order_key(quantity: str) -> float:
    return 1.0 if quantity == "vn" else float(quantity)


def run_all(pipeline: EntropyPipeline) -> None:
    pipeline.cmd_train()
    pipeline.cmd_estimate()
    pipeline.cmd_entropy()
    pipeline.cmd_oracle()
    pipeline.cmd_extrapolate()
    pipeline.cmd_report()


__all__ = ["EntropyPipeline", "run_all"]
