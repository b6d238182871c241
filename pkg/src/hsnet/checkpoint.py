"""Checkpoint archive: a zip of ``.npy`` members plus JSON metadata.

Layout::

    format_version          text, e.g. "1"
    config.json             model config (and anything else the caller adds)
    meta.json               iteration, RNG states, config hash
    params/<name>.npy       one array per parameter
    optim/<name>/<key>.npy  optimizer slots keyed by parameter name

``.npy`` members carry name (path), dtype, shape and little-endian data, so
the archive is readable without this package.
"""
from __future__ import annotations

import hashlib
import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

FORMAT_VERSION = "1"


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_array(zf: zipfile.ZipFile, name: str, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    zf.writestr(name, buf.getvalue())


def _read_array(zf: zipfile.ZipFile, name: str) -> np.ndarray:
    with zf.open(name) as fh:
        return np.lib.format.read_array(io.BytesIO(fh.read()), allow_pickle=False)


def optimizer_slots(model: torch.nn.Module, optimizer: torch.optim.Optimizer) -> dict:
    """Optimizer state keyed by parameter name instead of position."""
    slots = {}
    for name, p in model.named_parameters():
        state = optimizer.state.get(p, {})
        for key, value in state.items():
            slots[f"{name}/{key}"] = value.detach().cpu().numpy() if torch.is_tensor(value) else np.asarray(value)
    return slots


def save_checkpoint(path, model, optimizer=None, iteration: int = 0, config: dict | None = None, rng_state=None) -> None:
    config = config or {}
    meta = {
        "iteration": int(iteration),
        "config_hash": config_hash(config),
        "torch_rng": torch.get_rng_state().numpy().tolist(),
        "data_rng": rng_state,
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("format_version", FORMAT_VERSION)
        zf.writestr("config.json", json.dumps(config, indent=2, sort_keys=True))
        zf.writestr("meta.json", json.dumps(meta))
        for name, p in model.state_dict().items():
            _write_array(zf, f"params/{name}.npy", p.detach().cpu().numpy())
        if optimizer is not None:
            for name, arr in optimizer_slots(model, optimizer).items():
                _write_array(zf, f"optim/{name}.npy", arr)
    tmp.replace(path)


def read_checkpoint(path) -> dict:
    """Load the raw archive into ``{"config", "meta", "params", "optim"}`` dicts."""
    out = {"params": {}, "optim": {}}
    with zipfile.ZipFile(path) as zf:
        version = zf.read("format_version").decode().strip()
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {version!r} in {path}")
        out["config"] = json.loads(zf.read("config.json"))
        out["meta"] = json.loads(zf.read("meta.json"))
        for member in zf.namelist():
            if member.startswith("params/"):
                out["params"][member[len("params/") : -len(".npy")]] = _read_array(zf, member)
            elif member.startswith("optim/"):
                out["optim"][member[len("optim/") : -len(".npy")]] = _read_array(zf, member)
    return out


def restore(ckpt: dict, model, optimizer=None) -> None:
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in ckpt["params"].items()})
    torch.set_rng_state(torch.tensor(ckpt["meta"]["torch_rng"], dtype=torch.uint8))
    if optimizer is None:
        return
    by_param = {}
    for key, arr in ckpt["optim"].items():
        name, slot = key.rsplit("/", 1)
        by_param.setdefault(name, {})[slot] = torch.from_numpy(arr.copy())
    for name, p in model.named_parameters():
        if name in by_param:
            optimizer.state[p] = by_param[name]
