"""Checkpoint container: named float64 arrays plus optimizer state.

Format: a zip archive (numpy ``.npz``) holding one row-major float64 array per
named parameter, optimizer moment arrays under ``opt/``, scalar counters under
``meta/``, and a ``meta/format_version`` field. Round-trips are bit-exact
because float64 payloads are stored verbatim.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError

FORMAT_VERSION = 1


def save_checkpoint(path, named_params: dict, optimizers: dict | None = None,
                    extra: dict | None = None):
    """Write named parameter arrays (and optional Adam states) to `path`.

    `named_params` maps name -> Tensor; `optimizers` maps name -> AdamState.
    `extra` holds additional scalar/array entries (e.g. log-temperature).
    """
    payload = {"meta/format_version": np.int64(FORMAT_VERSION)}
    for name, p in named_params.items():
        payload[f"param/{name}"] = np.ascontiguousarray(p.data)
    if optimizers:
        for oname, opt in optimizers.items():
            payload[f"meta/opt/{oname}/step"] = np.int64(opt.step_count)
            for i, (m, v) in enumerate(zip(opt.m, opt.v)):
                payload[f"opt/{oname}/m{i}"] = m
                payload[f"opt/{oname}/v{i}"] = v
    if extra:
        for k, v in extra.items():
            payload[f"extra/{k}"] = np.asarray(v)
    np.savez(path, **payload)


def load_checkpoint(path) -> dict:
    """Read a checkpoint into {'params': ..., 'opt': ..., 'extra': ..., 'version': ...}."""
    with np.load(path) as zf:
        data = {k: zf[k] for k in zf.files}
    version = int(data.pop("meta/format_version", -1))
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint format version {version}")
    out = {"version": version, "params": {}, "opt": {}, "extra": {}}
    for k, v in data.items():
        if k.startswith("param/"):
            out["params"][k[len("param/"):]] = v
        elif k.startswith("opt/") or k.startswith("meta/opt/"):
            out["opt"][k] = v
        elif k.startswith("extra/"):
            out["extra"][k[len("extra/"):]] = v
    return out


def restore_params(named_params: dict, loaded: dict):
    """Copy loaded arrays into live parameter tensors, by name, shape-checked."""
    for name, p in named_params.items():
        if name not in loaded["params"]:
            raise ConfigError(f"checkpoint missing parameter {name!r}")
        arr = loaded["params"][name]
        if arr.shape != p.data.shape:
            raise ConfigError(
                f"checkpoint shape {arr.shape} != live shape {p.data.shape} for {name!r}")
        p.data[...] = arr
