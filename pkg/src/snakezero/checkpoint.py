"""Checkpoint persistence: a single JSON envelope, digest-verified.

The envelope holds {format_version, board_n, hyperparameters, tensors}
plus optional training state (momentum, rng state, replay buffer, game
counter). Tensors serialize as little-endian 32-bit IEEE-754 in base64,
features as packed bits, and pi/z targets as little-endian float64, so a
save/load round trip is bit-exact. A SHA-256 digest over the canonical
body detects truncation or editing.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import net
from .errors import CheckpointIntegrityError, CheckpointVersionError

FORMAT_VERSION = 1


@dataclass
class TrainingState:
    """Everything the training loop needs to continue where it stopped."""

    params: net.NetworkParams
    rng: np.random.Generator | None = None
    buffer: "object | None" = None  # ReplayBuffer
    game_count: int = 0
    hyperparameters: dict | None = None


def _encode_array(array, dtype):
    data = np.ascontiguousarray(array, dtype=np.dtype(dtype).newbyteorder("<"))
    return base64.b64encode(data.tobytes()).decode("ascii")


def _decode_array(text, dtype, shape):
    raw = base64.b64decode(text.encode("ascii"), validate=True)
    array = np.frombuffer(raw, dtype=np.dtype(dtype).newbyteorder("<"))
    expected = int(np.prod(shape)) if shape else array.size
    if array.size != expected:
        raise CheckpointIntegrityError(f"tensor payload holds {array.size} values, expected {expected}")
    return array.reshape(shape).astype(dtype)


def _tensor_docs(tensors):
    return [
        {"name": name, "shape": list(tensor.shape), "data": _encode_array(tensor, np.float32)}
        for name, tensor in tensors.items()
    ]


def _tensors_from_docs(docs, expected_names):
    tensors = {}
    for doc in docs:
        tensors[doc["name"]] = _decode_array(doc["data"], np.float32, tuple(doc["shape"]))
    if list(tensors) != list(expected_names):
        raise CheckpointIntegrityError("tensor names or order do not match the architecture")
    return tensors


def _buffer_doc(buffer):
    games = buffer.games_snapshot()
    counts = [len(game) for game in games]
    if sum(counts) == 0:
        return {"capacity": buffer.capacity_games, "games": [], "features": "", "pis": "", "zs": ""}
    features = np.stack([ex.features for game in games for ex in game])
    pis = np.stack([ex.pi for game in games for ex in game])
    zs = np.array([ex.z for game in games for ex in game], dtype=np.float64)
    packed = np.packbits(features.astype(np.uint8), axis=None)
    return {
        "capacity": buffer.capacity_games,
        "games": counts,
        "feature_shape": list(features.shape[1:]),
        "features": base64.b64encode(packed.tobytes()).decode("ascii"),
        "pis": _encode_array(pis, np.float64),
        "zs": _encode_array(zs, np.float64),
    }


def _buffer_from_doc(doc):
    from .selfplay import ReplayBuffer, TrainingExample

    counts = doc["games"]
    buffer = ReplayBuffer(doc["capacity"])
    total = sum(counts)
    if total == 0:
        return buffer
    shape = tuple(doc["feature_shape"])
    per = int(np.prod(shape))
    raw = base64.b64decode(doc["features"].encode("ascii"), validate=True)
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=total * per)
    features = bits.reshape((total,) + shape).astype(np.float32)
    pis = _decode_array(doc["pis"], np.float64, (total, 4))
    zs = _decode_array(doc["zs"], np.float64, (total,))
    index = 0
    for count in counts:
        game = []
        for _ in range(count):
            game.append(
                TrainingExample(features=features[index], pi=pis[index], z=float(zs[index]))
            )
            index += 1
        buffer.add_game(game)
    return buffer


def _digest(body):
    canonical = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_checkpoint(state, path):
    """Write a TrainingState (or bare parameters) to `path`."""
    params = state.params
    body = {
        "format_version": FORMAT_VERSION,
        "board_n": params.n,
        "hyperparameters": state.hyperparameters or {},
        "tensors": _tensor_docs(params.tensors),
        "momentum": _tensor_docs(params.momentum),
        "game_count": state.game_count,
    }
    if state.rng is not None:
        body["rng_state"] = state.rng.bit_generator.state
    if state.buffer is not None:
        body["buffer"] = _buffer_doc(state.buffer)
    document = dict(body)
    document["digest"] = _digest(body)
    Path(path).write_text(json.dumps(document, separators=(",", ":")), encoding="utf-8")
    return path


def load_checkpoint(path):
    """Read a checkpoint back into a TrainingState, verifying its digest."""
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointIntegrityError(f"unreadable checkpoint {path}: {exc}") from None
    if not isinstance(document, dict) or "format_version" not in document:
        raise CheckpointIntegrityError(f"{path} is not a checkpoint envelope")
    version = document["format_version"]
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format {version} is not supported (expected {FORMAT_VERSION})"
        )
    stored = document.pop("digest", None)
    if stored is None or _digest(document) != stored:
        raise CheckpointIntegrityError(f"checkpoint {path} fails digest verification")
    n = document["board_n"]
    expected = net.param_shapes(n)
    tensors = _tensors_from_docs(document["tensors"], expected)
    momentum = _tensors_from_docs(document["momentum"], expected)
    for name, shape in expected.items():
        if tensors[name].shape != shape or momentum[name].shape != shape:
            raise CheckpointIntegrityError(f"tensor {name!r} has the wrong shape")
    params = net.NetworkParams(n=n, tensors=tensors, momentum=momentum)
    rng = None
    if "rng_state" in document:
        rng_doc = document["rng_state"]
        rng = np.random.default_rng()
        if rng.bit_generator.state["bit_generator"] != rng_doc.get("bit_generator"):
            raise CheckpointIntegrityError(
                f"unsupported rng kind {rng_doc.get('bit_generator')!r}"
            )
        rng.bit_generator.state = rng_doc
    buffer = _buffer_from_doc(document["buffer"]) if "buffer" in document else None
    return TrainingState(
        params=params,
        rng=rng,
        buffer=buffer,
        game_count=document.get("game_count", 0),
        hyperparameters=document.get("hyperparameters") or {},
    )


def save_params(params, path, hyperparameters=None):
    """Write parameters only (no rng/buffer): enough for evaluation."""
    return save_checkpoint(
        TrainingState(params=params, hyperparameters=hyperparameters), path
    )


def load_params(path):
    """Read just the network parameters from any checkpoint."""
    return load_checkpoint(path).params
