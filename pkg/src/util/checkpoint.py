"""Versioned little-endian checkpoint codec for a hierarchy of masked nets.

Layout: header {magic "HANCKPT1", L, k, l (int32), Δτ (float64), net count
(int32)}, then per net {n_ctx, n_out, hidden (int32), order table (n_out ×
int32), mask dims (4 × int32), W1, b1, alpha, W2, b2 as row-major float64}.
Nets are stored in the order of the plan's net specs.
"""

import hashlib
import math
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import torch

from ..interface.base_lattice import ModelParams
from ..interface.base_sampler import HierarchyPlan
from ..interface.errors import MissingInputError, PlanError
from ..impl.autoreg import DTYPE, HierarchyNets, MaskedNet

MAGIC = b"HANCKPT1"
HEADER = struct.Struct("<8siiidi")
NET_HEADER = struct.Struct("<iii")
MASK_DIMS = struct.Struct("<iiii")


def _f64(t: torch.Tensor) -> bytes:
    return t.detach().cpu().numpy().astype("<f8").tobytes()


def save_checkpoint(path: Path, params: ModelParams, plan: HierarchyPlan, nets: HierarchyNets) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [HEADER.pack(MAGIC, params.L, params.k, params.l, params.dtau, len(plan.net_specs))]
    for spec in plan.net_specs:
        net: MaskedNet = nets[spec.net_id]
        chunks.append(NET_HEADER.pack(net.n_ctx, net.n_out, net.hidden_width))
        chunks.append(net.order.numpy().astype("<i4").tobytes())
        chunks.append(MASK_DIMS.pack(*net.layer1.mask.shape, *net.layer2.mask.shape))
        for tensor in (net.layer1.weight, net.layer1.bias, net.activation.weight, net.layer2.weight, net.layer2.bias):
            chunks.append(_f64(tensor))
    blob = b"".join(chunks)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    return checkpoint_id(path)


def checkpoint_id(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:12]


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, fmt: struct.Struct) -> Tuple[Any, ...]:
        out = fmt.unpack_from(self.blob, self.pos)
        self.pos += fmt.size
        return out

    def array(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        out = np.frombuffer(self.blob, dtype=dtype, count=count, offset=self.pos)
        self.pos += size
        return out


def _check_params(path: Path, k: int, dtau: float, params: ModelParams) -> None:
    if k != params.k or not math.isclose(dtau, params.dtau, rel_tol=0.0, abs_tol=1e-12):
        raise PlanError(f"checkpoint {path} was trained at k={k}, Δτ={dtau:g}; requested k={params.k}, Δτ={params.dtau:g}")
    target = state_path(path)
    if not target.exists():
        return
    trained = torch.load(target, weights_only=False).get("params")
    if trained is None:
        return
    for name in ("J", "h"):
        if not math.isclose(trained[name], getattr(params, name), rel_tol=0.0, abs_tol=1e-12):
            raise PlanError(f"checkpoint {path} was trained at {name}={trained[name]:g}, requested {name}={getattr(params, name):g}")


def load_checkpoint(path: Path, plan: HierarchyPlan, params: Optional[ModelParams] = None) -> Tuple[Dict[str, Any], HierarchyNets]:
    """Nets of a stored hierarchy; with params, also rejects a file trained at other couplings."""
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"checkpoint not found: {path}")
    reader = _Reader(path.read_bytes())
    magic, L, k, l, dtau, count = reader.take(HEADER)
    if magic != MAGIC:
        raise PlanError(f"{path} is not a hierarchy checkpoint (magic {magic!r})")
    if (L, l) != (plan.L, plan.l) or k * L != plan.m or count != len(plan.net_specs):
        raise PlanError(f"checkpoint {path} (L={L}, k={k}, l={l}, nets={count}) does not match the plan")
    if params is not None:
        _check_params(path, k, dtau, params)

    nets = HierarchyNets()
    for spec in plan.net_specs:
        n_ctx, n_out, hidden = reader.take(NET_HEADER)
        if (n_ctx, n_out) != (spec.n_ctx, spec.n_out):
            raise PlanError(f"checkpoint net shape {(n_ctx, n_out)} differs from plan net {spec.net_id}")
        order = torch.from_numpy(reader.array("<i4", n_out).astype(np.int64))
        h1, in1, out2, h2 = reader.take(MASK_DIMS)
        net = MaskedNet(n_ctx, n_out, hidden_width=hidden, order=order)
        with torch.no_grad():
            for tensor, shape in (
                (net.layer1.weight, (h1, in1)),
                (net.layer1.bias, (h1,)),
                (net.activation.weight, (hidden,)),
                (net.layer2.weight, (out2, h2)),
                (net.layer2.bias, (out2,)),
            ):
                values = reader.array("<f8", int(np.prod(shape))).reshape(shape)
                tensor.copy_(torch.from_numpy(values.copy()).to(DTYPE))
        nets[spec.net_id] = net
    header = {"L": L, "k": k, "l": l, "dtau": dtau, "net_count": count, "checkpoint_id": checkpoint_id(path)}
    return header, nets


def state_path(path: Path) -> Path:
    path = Path(path)
    return path.with_suffix(path.suffix + ".state")


def save_training_state(path: Path, state: Dict[str, Any]) -> None:
    torch.save(state, state_path(path))


def load_training_state(path: Path) -> Dict[str, Any]:
    target = state_path(path)
    if not target.exists():
        raise MissingInputError(f"training state not found: {target}")
    return torch.load(target, weights_only=False)


def saved_epoch(path: Path) -> Optional[int]:
    """Epochs completed when the checkpoint was written, or None without a training-state file."""
    target = state_path(path)
    if not target.exists():
        return None
    return int(torch.load(target, weights_only=False)["epoch"])
