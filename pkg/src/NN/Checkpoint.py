from typing import Dict, Tuple
import json

import numpy as np

from src.NN.DenseNet import DenseNet

Params = Dict[str, np.ndarray]


def save_params(path: str, params: Params, meta: dict = None):
    """
    Write <path>.json (manifest: names, shapes, meta) and <path>.bin (little-endian float64, manifest order).
    """
    names = sorted(params)
    manifest = {
        "format": "float64-le",
        "tensors": [{"name": name, "shape": list(params[name].shape)} for name in names],
        "meta": meta or {},
    }
    with open(path + ".json", "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
    with open(path + ".bin", "wb") as f:
        for name in names:
            f.write(np.ascontiguousarray(params[name], dtype="<f8").tobytes())


def load_params(path: str) -> Tuple[Params, dict]:
    """
    Read a checkpoint written by save_params, bit-exact.
    :return: (parameters, meta).
    """
    with open(path + ".json", "r") as f:
        manifest = json.load(f)
    with open(path + ".bin", "rb") as f:
        blob = f.read()
    params, offset = {}, 0
    for tensor in manifest["tensors"]:
        count = int(np.prod(tensor["shape"], dtype=np.int64))
        params[tensor["name"]] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset) \
            .astype(np.float64).reshape(tensor["shape"])
        offset += 8 * count
    if offset != len(blob):
        raise ValueError(f"checkpoint {path} blob has {len(blob) - offset} trailing bytes")
    return params, manifest["meta"]


def save_network(path: str, net: DenseNet, meta: dict = None):
    save_params(path, net.params, {"layer_sizes": net.layer_sizes, "seed": net.seed, **(meta or {})})


def load_network(path: str) -> Tuple[DenseNet, dict]:
    params, meta = load_params(path)
    return DenseNet(meta["layer_sizes"], meta["seed"], params), meta
