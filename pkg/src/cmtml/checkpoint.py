"""Single-file checkpoint container.

Layout: the ASCII magic line ``CMTML-CKPT-1``, a little-endian uint64 with
the JSON header size, the JSON header, then the raw bytes of every array in
manifest order. The header carries the run-config snapshot, estimator
parameters, epoch counter, RNG state and the array manifest (name, dtype,
shape); arrays cover network parameters and buffers (float32), Adam state
and the frozen embedding table.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .data import EmbeddingTable
from .errors import DataFormatError

MAGIC = b"CMTML-CKPT-1\n"
_LEN = struct.Struct("<Q")


@dataclass
class Checkpoint:
    estimator_params: dict
    d_raw: int
    epoch: int
    arrays: dict[str, np.ndarray]
    vocabulary: list[str]
    run_config: dict | None = None
    numpy_rng_state: dict | None = None

    def embedding_table(self) -> EmbeddingTable:
        vocab = {word: i for i, word in enumerate(self.vocabulary)}
        return EmbeddingTable(vocabulary=vocab, vectors=self.arrays["embedding.vectors"])


def _tensor_to_array(value: torch.Tensor) -> np.ndarray:
    return value.detach().cpu().numpy()


def save_checkpoint(path, estimator, *, epoch: int, run_config: dict | None = None) -> None:
    """Serialize a fitted estimator (parameters, optimizer, RNG, embeddings)."""
    arrays: dict[str, np.ndarray] = {}
    for name, value in estimator.network_.state_dict().items():
        arrays[f"network.{name}"] = _tensor_to_array(value)

    optim_state = estimator.optimizer_.state_dict()
    optim_meta = {"param_groups": optim_state["param_groups"], "state_scalars": {}}
    for idx, state in optim_state["state"].items():
        for key, value in state.items():
            if isinstance(value, torch.Tensor):
                arrays[f"optimizer.{idx}.{key}"] = _tensor_to_array(value)
            else:
                optim_meta["state_scalars"].setdefault(str(idx), {})[key] = value

    arrays["rng.torch"] = torch.get_rng_state().numpy()
    table = estimator.embedding_table_
    arrays["embedding.vectors"] = np.asarray(table.vectors, dtype=np.float32)
    vocabulary = [word for word, _ in sorted(table.vocabulary.items(), key=lambda kv: kv[1])]

    numpy_rng_state = None
    shuffle_rng = getattr(estimator, "shuffle_rng_", None)
    if shuffle_rng is not None:
        numpy_rng_state = shuffle_rng.bit_generator.state

    manifest = []
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        manifest.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())

    header = {
        "estimator_params": _jsonable(estimator.get_params()),
        "d_raw": int(estimator.d_raw_),
        "epoch": int(epoch),
        "run_config": run_config,
        "numpy_rng_state": _jsonable(numpy_rng_state),
        "optimizer_meta": _jsonable(optim_meta),
        "vocabulary": vocabulary,
        "arrays": manifest,
    }
    payload = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_LEN.pack(len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    raw = path.read_bytes()
    if not raw.startswith(MAGIC):
        raise DataFormatError(f"{path}: bad checkpoint magic at byte 0")
    offset = len(MAGIC)
    if len(raw) < offset + _LEN.size:
        raise DataFormatError(f"{path}: truncated header length at byte {offset}")
    (header_len,) = _LEN.unpack_from(raw, offset)
    offset += _LEN.size
    if len(raw) < offset + header_len:
        raise DataFormatError(f"{path}: truncated JSON header at byte {offset}")
    try:
        header = json.loads(raw[offset: offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: invalid JSON header: {exc}") from exc
    offset += header_len

    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dtype.itemsize
        count = int(np.prod(shape, dtype=np.int64))
        if len(raw) < offset + nbytes:
            raise DataFormatError(f"{path}: truncated array {entry['name']!r} at byte {offset}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise DataFormatError(f"{path}: {len(raw) - offset} trailing bytes at byte {offset}")

    ckpt = Checkpoint(
        estimator_params=header["estimator_params"],
        d_raw=int(header["d_raw"]),
        epoch=int(header["epoch"]),
        arrays=arrays,
        vocabulary=header["vocabulary"],
        run_config=header.get("run_config"),
        numpy_rng_state=header.get("numpy_rng_state"),
    )
    ckpt._optimizer_meta = header.get("optimizer_meta")  # reattached on restore
    return ckpt


def restore_estimator(ckpt: Checkpoint, *, restore_rng: bool = False):
    """Rebuild a fitted estimator from a checkpoint; forward outputs in eval
    mode are bit-identical to the saved model."""
    from .estimator import TemporalMomentLocalizer

    params = dict(ckpt.estimator_params)
    estimator = TemporalMomentLocalizer(**params)
    estimator.embedding_table_ = ckpt.embedding_table()
    estimator.d_raw_ = ckpt.d_raw
    estimator.network_ = estimator.build_network(ckpt.d_raw)

    state = {}
    for name, arr in ckpt.arrays.items():
        if name.startswith("network."):
            state[name[len("network."):]] = torch.from_numpy(arr.copy())
    estimator.network_.load_state_dict(state, strict=True)
    estimator.network_.eval()

    estimator.optimizer_ = torch.optim.Adam(
        estimator.network_.parameters(), lr=params.get("learning_rate", 0.001)
    )
    meta = getattr(ckpt, "_optimizer_meta", None)
    if meta is not None:
        opt_state: dict = {}
        for name, arr in ckpt.arrays.items():
            if name.startswith("optimizer."):
                _, idx, key = name.split(".", 2)
                opt_state.setdefault(int(idx), {})[key] = torch.from_numpy(arr.copy())
        for idx_str, scalars in meta.get("state_scalars", {}).items():
            opt_state.setdefault(int(idx_str), {}).update(scalars)
        estimator.optimizer_.load_state_dict(
            {"state": opt_state, "param_groups": meta["param_groups"]}
        )

    if restore_rng:
        torch.set_rng_state(torch.from_numpy(ckpt.arrays["rng.torch"].copy()))
        if ckpt.numpy_rng_state is not None:
            rng = np.random.default_rng()
            rng.bit_generator.state = _denumpyify_rng(ckpt.numpy_rng_state)
            estimator.shuffle_rng_ = rng
    return estimator


def _denumpyify_rng(state: dict) -> dict:
    # JSON round-trips the uint32 key array as a list; numpy accepts it back.
    return state
