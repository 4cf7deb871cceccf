"""Recurrent next-camera predictor: embedding + single-layer LSTM + linear
softmax head, trained with Adam on right-shifted sequences. Implemented in
plain numpy (float64) with handwritten backpropagation through time so the
whole training path is deterministic and gradient-checkable."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import CameraGraph, graph_checksum
from .predict import NeighborDistribution
from .trajgen import Trajectory

CHECKPOINT_FORMAT = "reidsim-rnn-v1"

# Parameter tensors in checkpoint order. Gate weights act on [embed, hidden]
# concatenations; the head maps hidden state to vocab logits.
PARAM_NAMES = ("embedding", "w_i", "w_f", "w_g", "w_o", "b_i", "b_f", "b_g", "b_o", "w_out", "b_out")


class TrainingError(RuntimeError):
    """Training diverged or was configured infeasibly."""


class CheckpointError(ValueError):
    """Corrupt checkpoint file or model/graph mismatch."""


@dataclass(frozen=True)
class RnnConfig:
    hidden_size: int = 128
    embed_size: int = 32
    learning_rate: float = 0.001
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.hidden_size, self.embed_size, self.batch_size, self.max_epochs, self.patience) < 1:
            raise ValueError("all sizes must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")


def _param_shapes(num_cameras: int, cfg: RnnConfig) -> dict[str, tuple[int, ...]]:
    vocab = num_cameras + 1
    h, e = cfg.hidden_size, cfg.embed_size
    shapes: dict[str, tuple[int, ...]] = {"embedding": (vocab, e)}
    for gate in ("i", "f", "g", "o"):
        shapes[f"w_{gate}"] = (h, e + h)
        shapes[f"b_{gate}"] = (h,)
    shapes["w_out"] = (vocab, h)
    shapes["b_out"] = (vocab,)
    return shapes


@dataclass
class RnnModel:
    """Parameter container; hidden/cell state exists only inside a forward pass."""

    num_cameras: int
    config: RnnConfig
    params: dict[str, np.ndarray] = field(repr=False)

    @property
    def vocab(self) -> int:
        return self.num_cameras + 1

    @property
    def start_token(self) -> int:
        return self.num_cameras

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}


def init_model(num_cameras: int, cfg: RnnConfig, rng: np.random.Generator) -> RnnModel:
    """Uniform +-1/sqrt(hidden) weights, zero biases, forget-gate bias 1.0."""
    bound = 1.0 / np.sqrt(cfg.hidden_size)
    params: dict[str, np.ndarray] = {}
    for name, shape in _param_shapes(num_cameras, cfg).items():
        if name.startswith("b_"):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.uniform(-bound, bound, size=shape)
    params["b_f"] = np.ones_like(params["b_f"])
    return RnnModel(num_cameras=num_cameras, config=cfg, params=params)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_pass(model: RnnModel, inputs: np.ndarray, keep_cache: bool):
    """Run the recurrence over inputs [B, L]; returns logits [B, L, V] and,
    when requested, the per-step cache needed for backpropagation."""
    p = model.params
    batch, length = inputs.shape
    h_size = model.config.hidden_size
    w_all = np.concatenate([p["w_i"], p["w_f"], p["w_g"], p["w_o"]], axis=0)
    b_all = np.concatenate([p["b_i"], p["b_f"], p["b_g"], p["b_o"]])
    x = p["embedding"][inputs]  # [B, L, E]
    h = np.zeros((batch, h_size))
    c = np.zeros((batch, h_size))
    hs = np.empty((batch, length, h_size))
    cache = [] if keep_cache else None
    for t in range(length):
        a = np.concatenate([x[:, t, :], h], axis=1)
        z = a @ w_all.T + b_all
        i = _sigmoid(z[:, :h_size])
        f = _sigmoid(z[:, h_size : 2 * h_size])
        g = np.tanh(z[:, 2 * h_size : 3 * h_size])
        o = _sigmoid(z[:, 3 * h_size :])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t, :] = h
        if keep_cache is True:
            cache.append((a, i, f, g, o, c_prev, tc))
    logits = hs @ p["w_out"].T + p["b_out"]
    return logits, hs, cache, w_all


def forward(model: RnnModel, sequence: Sequence[int]) -> np.ndarray:
    """Per-step logits for a single sequence, shape [len(sequence), vocab].

    Position t is computed after consuming the start token and the first t
    cameras, so logits[t] scores sequence[t] as the next camera.
    """
    seq = list(sequence)
    if not seq:
        raise ValueError("sequence must be non-empty")
    if any(not (0 <= s < model.vocab) for s in seq):
        raise ValueError("sequence ids must be < vocab")
    inputs = np.array([[model.start_token] + seq[:-1]], dtype=np.int64)
    logits, _, _, _ = _forward_pass(model, inputs, keep_cache=False)
    return logits[0]


def next_step_logits(model: RnnModel, history: Sequence[int]) -> np.ndarray:
    """Logits for the camera following the full history."""
    hist = list(history)
    if not hist:
        raise ValueError("history must be non-empty")
    inputs = np.array([[model.start_token] + hist], dtype=np.int64)
    logits, _, _, _ = _forward_pass(model, inputs, keep_cache=False)
    return logits[0, -1]


def _pad_batch(model: RnnModel, sequences: Sequence[Sequence[int]]):
    lengths = [len(s) for s in sequences]
    if not lengths or min(lengths) < 1:
        raise ValueError("batch must contain non-empty sequences")
    batch, length = len(sequences), max(lengths)
    inputs = np.zeros((batch, length), dtype=np.int64)
    labels = np.zeros((batch, length), dtype=np.int64)
    mask = np.zeros((batch, length), dtype=np.float64)
    for b, seq in enumerate(sequences):
        n = len(seq)
        inputs[b, 0] = model.start_token
        inputs[b, 1:n] = seq[: n - 1]
        labels[b, :n] = seq
        mask[b, :n] = 1.0
    return inputs, labels, mask


def loss_and_gradients(model: RnnModel, sequences: Sequence[Sequence[int]]):
    """Mean token-level cross-entropy and its gradients via BPTT.

    Sequences are right-padded to the batch maximum; padded positions are
    masked out of the loss and therefore carry no gradient.
    """
    p = model.params
    inputs, labels, mask = _pad_batch(model, sequences)
    batch, length = inputs.shape
    h_size = model.config.hidden_size
    e_size = model.config.embed_size
    logits, hs, cache, w_all = _forward_pass(model, inputs, keep_cache=True)

    shifted = logits - logits.max(axis=2, keepdims=True)
    exp = np.exp(shifted)
    softmax = exp / exp.sum(axis=2, keepdims=True)
    n_valid = mask.sum()
    log_probs = shifted - np.log(exp.sum(axis=2, keepdims=True))
    picked = np.take_along_axis(log_probs, labels[:, :, None], axis=2)[:, :, 0]
    loss = -(picked * mask).sum() / n_valid

    dlogits = softmax.copy()
    np.add.at(dlogits, (np.arange(batch)[:, None], np.arange(length)[None, :], labels), -1.0)
    dlogits *= mask[:, :, None] / n_valid

    grads = {name: np.zeros_like(arr) for name, arr in p.items()}
    grads["w_out"] = np.einsum("blv,blh->vh", dlogits, hs)
    grads["b_out"] = dlogits.sum(axis=(0, 1))
    dh_from_head = dlogits @ p["w_out"]  # [B, L, H]

    dw_all = np.zeros_like(w_all)
    db_all = np.zeros(4 * h_size)
    dx = np.empty((batch, length, e_size))
    dh_next = np.zeros((batch, h_size))
    dc_next = np.zeros((batch, h_size))
    for t in range(length - 1, -1, -1):
        a, i, f, g, o, c_prev, tc = cache[t]
        dh = dh_from_head[:, t, :] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc**2)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        dz = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g**2), do * o * (1.0 - o)],
            axis=1,
        )
        dw_all += dz.T @ a
        db_all += dz.sum(axis=0)
        da = dz @ w_all
        dx[:, t, :] = da[:, :e_size]
        dh_next = da[:, e_size:]

    for k, gate in enumerate(("i", "f", "g", "o")):
        grads[f"w_{gate}"] = dw_all[k * h_size : (k + 1) * h_size]
        grads[f"b_{gate}"] = db_all[k * h_size : (k + 1) * h_size]
    np.add.at(grads["embedding"], inputs.reshape(-1), dx.reshape(-1, e_size))
    return float(loss), grads


def clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most clip_norm."""
    total = np.sqrt(sum(float((g**2).sum()) for g in grads.values()))
    if total > clip_norm:
        scale = clip_norm / total
        for g in grads.values():
            g *= scale
    return total


class _AdamState:
    def __init__(self, params: dict[str, np.ndarray]) -> None:
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        self.t += 1
        correct1 = 1.0 - beta1**self.t
        correct2 = 1.0 - beta2**self.t
        for k, g in grads.items():
            self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * g
            self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * g**2
            params[k] -= lr * (self.m[k] / correct1) / (np.sqrt(self.v[k] / correct2) + eps)


@dataclass
class TrainReport:
    train_losses: list[float]
    val_accuracies: list[float]
    epochs_run: int
    best_epoch: int


def _masked_accuracy(model: RnnModel, sequences: Sequence[Sequence[int]], g: CameraGraph) -> float:
    """Neighbor-masked top-1 accuracy over hops with a non-empty history."""
    hits = 0
    hops = 0
    for seq in sequences:
        if len(seq) < 2:
            continue
        logits = forward(model, seq)
        for t in range(1, len(seq)):
            neigh = g.adjacency[seq[t - 1]]
            local = logits[t, list(neigh)]
            hits += int(neigh[int(np.argmax(local))] == seq[t])
            hops += 1
    return hits / hops if hops else 0.0


def train(trajs: Sequence[Trajectory], g: CameraGraph, cfg: RnnConfig) -> tuple[RnnModel, TrainReport]:
    """Adam-trained LSTM with a seeded 90/10 train/validation split.

    Early-stops after cfg.patience epochs without validation-accuracy
    improvement and returns the best-validation checkpoint. Deterministic for
    a fixed (data, config) pair: all shuffles come from seeded generators and
    every reduction is single-threaded.
    """
    sequences = [t.cameras for t in trajs if len(t.visits) >= 2]
    if len(sequences) < 2:
        raise TrainingError("need at least 2 training trajectories with >= 2 visits")
    root = np.random.SeedSequence(cfg.seed)
    init_ss, split_ss, shuffle_ss = root.spawn(3)
    model = init_model(g.num_cameras, cfg, np.random.default_rng(init_ss))

    order = np.random.default_rng(split_ss).permutation(len(sequences))
    n_val = max(1, round(0.1 * len(sequences)))
    if n_val >= len(sequences):
        n_val = len(sequences) - 1
    val_seqs = [sequences[i] for i in order[:n_val]]
    train_seqs = [sequences[i] for i in order[n_val:]]

    shuffle_rng = np.random.default_rng(shuffle_ss)
    adam = _AdamState(model.params)
    losses: list[float] = []
    val_accs: list[float] = []
    best_acc = -1.0
    best_epoch = 0
    best_params = model.copy_params()
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        epoch_order = shuffle_rng.permutation(len(train_seqs))
        token_loss = 0.0
        token_count = 0
        for lo in range(0, len(epoch_order), cfg.batch_size):
            batch = [train_seqs[i] for i in epoch_order[lo : lo + cfg.batch_size]]
            loss, grads = loss_and_gradients(model, batch)
            if not np.isfinite(loss):
                raise TrainingError(f"training diverged at epoch {epoch}: loss={loss}")
            clip_gradients(grads, cfg.clip_norm)
            adam.step(model.params, grads, cfg.learning_rate)
            n_tokens = sum(len(s) for s in batch)
            token_loss += loss * n_tokens
            token_count += n_tokens
        losses.append(token_loss / token_count)
        acc = _masked_accuracy(model, val_seqs, g)
        val_accs.append(acc)
        if acc > best_acc:
            best_acc = acc
            best_epoch = epoch
            best_params = model.copy_params()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.params = best_params
    return model, TrainReport(
        train_losses=losses, val_accuracies=val_accs, epochs_run=len(losses), best_epoch=best_epoch
    )


def predict_rnn(model: RnnModel, g: CameraGraph, history: Sequence[int]) -> NeighborDistribution:
    """Distribution over the current camera's neighbors via masked softmax."""
    hist = list(history)
    if not hist:
        raise ValueError("history must be non-empty")
    logits = next_step_logits(model, hist)
    neigh = g.adjacency[hist[-1]]
    local = logits[list(neigh)]
    local = local - local.max()
    weights = np.exp(local)
    return NeighborDistribution(neigh, weights / weights.sum())


@dataclass
class RnnPredictor:
    g: CameraGraph
    model: RnnModel

    def predict(self, history: Sequence[int]) -> NeighborDistribution:
        return predict_rnn(self.model, self.g, history)


def save_rnn(model: RnnModel, path: str | Path, checksum: str) -> None:
    """Checkpoint: one JSON header line, then raw little-endian float64 arrays
    in PARAM_NAMES order."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "num_cameras": model.num_cameras,
        "graph_checksum": checksum,
        "config": {
            "hidden_size": model.config.hidden_size,
            "embed_size": model.config.embed_size,
            "learning_rate": model.config.learning_rate,
            "batch_size": model.config.batch_size,
            "max_epochs": model.config.max_epochs,
            "patience": model.config.patience,
            "clip_norm": model.config.clip_norm,
            "seed": model.config.seed,
        },
        "params": [[name, list(model.params[name].shape)] for name in PARAM_NAMES],
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, separators=(",", ":"), sort_keys=True) + "\n").encode("utf-8"))
        for name in PARAM_NAMES:
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())


def load_rnn(path: str | Path, g: CameraGraph) -> RnnModel:
    """Load a checkpoint, verifying format, shapes, sizes, and graph checksum."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint header: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    if header.get("graph_checksum") != graph_checksum(g):
        raise CheckpointError(f"{path}: checkpoint was trained on a different graph")
    cfg = RnnConfig(**header["config"])
    num_cameras = int(header["num_cameras"])
    declared = header["params"]
    if [name for name, _ in declared] != list(PARAM_NAMES):
        raise CheckpointError(f"{path}: unexpected parameter list")
    expected = _param_shapes(num_cameras, cfg)
    params: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in declared:
        shape = tuple(int(d) for d in shape)
        if shape != expected[name]:
            raise CheckpointError(f"{path}: parameter {name} has shape {shape}, expected {expected[name]}")
        size = int(np.prod(shape)) * 8
        chunk = blob[offset : offset + size]
        if len(chunk) < size:
            raise CheckpointError(f"{path}: truncated checkpoint while reading {name}")
        params[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += size
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes after parameters")
    return RnnModel(num_cameras=num_cameras, config=cfg, params=params)
