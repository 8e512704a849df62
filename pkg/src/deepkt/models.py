"""DKVMN, Deep-IRT (DKVMN + ability/difficulty heads), and DKT (LSTM) forward
passes over padded batches, plus parameter init and JSON checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .datasets import PaddedBatch, ValidationError

ABILITY_SCALE = 3.0  # ability head output is stretched before the IRT link
PROB_EPS = 1e-7      # clamp for log-loss


@dataclass
class MemoryArch:
    num_kcs: int
    mem_slots: int = 20
    state_dim: int = 50       # d_k = d_v
    feature_dim: int = 50
    deep_irt: bool = False

    def to_dict(self):
        return {"kind": "deep_irt" if self.deep_irt else "dkvmn",
                "num_kcs": self.num_kcs, "mem_slots": self.mem_slots,
                "state_dim": self.state_dim, "feature_dim": self.feature_dim}


@dataclass
class DktArch:
    num_kcs: int
    hidden: int = 50

    def to_dict(self):
        return {"kind": "dkt", "num_kcs": self.num_kcs, "hidden": self.hidden}


class DkvmnParams:
    """Learnable state for DKVMN / Deep-IRT; d_k = d_v = state_dim."""

    def __init__(self, arch: MemoryArch, arrays):
        self.arch = arch
        for name, value in arrays.items():
            setattr(self, name, value)
        self._names = list(arrays.keys())

    def named_parameters(self):
        return [(n, getattr(self, n)) for n in self._names]

    def parameters(self):
        return [getattr(self, n) for n in self._names]


class DktParams:
    """Learnable state for the LSTM model; gate order is input/forget/cell/output."""

    def __init__(self, arch: DktArch, arrays):
        self.arch = arch
        for name, value in arrays.items():
            setattr(self, name, value)
        self._names = list(arrays.keys())

    def named_parameters(self):
        return [(n, getattr(self, n)) for n in self._names]

    def parameters(self):
        return [getattr(self, n) for n in self._names]


def _gaussian(rng, rows, cols, std):
    return Tensor(rng.normal(0.0, std, size=(rows, cols)), requires_grad=True)


def init_memory_params(arch: MemoryArch, std: float = 0.05, seed: int = 0) -> DkvmnParams:
    if std <= 0:
        raise ValidationError(f"init std must be positive, got {std}")
    rng = np.random.default_rng(seed)
    q, n, d, f = arch.num_kcs, arch.mem_slots, arch.state_dim, arch.feature_dim
    arrays = {
        "A": _gaussian(rng, q, d, std),
        "B": _gaussian(rng, 2 * q, d, std),
        "Mk": _gaussian(rng, n, d, std),
        "Mv0": _gaussian(rng, n, d, std),
        "W_f": _gaussian(rng, 2 * d, f, std),
        "b_f": _gaussian(rng, 1, f, std),
        "W_e": _gaussian(rng, d, d, std),
        "b_e": _gaussian(rng, 1, d, std),
        "W_a": _gaussian(rng, d, d, std),
        "b_a": _gaussian(rng, 1, d, std),
    }
    if arch.deep_irt:
        arrays["W_theta"] = _gaussian(rng, f, 1, std)
        arrays["b_theta"] = _gaussian(rng, 1, 1, std)
        arrays["W_beta"] = _gaussian(rng, d, 1, std)
        arrays["b_beta"] = _gaussian(rng, 1, 1, std)
    else:
        arrays["W_p"] = _gaussian(rng, f, 1, std)
        arrays["b_p"] = _gaussian(rng, 1, 1, std)
    return DkvmnParams(arch, arrays)


def init_dkt_params(arch: DktArch, std: float = 0.05, seed: int = 0) -> DktParams:
    if std <= 0:
        raise ValidationError(f"init std must be positive, got {std}")
    rng = np.random.default_rng(seed)
    q, h = arch.num_kcs, arch.hidden
    arrays = {
        "W_x": _gaussian(rng, 2 * q, 4 * h, std),
        "W_h": _gaussian(rng, h, 4 * h, std),
        "b_g": _gaussian(rng, 1, 4 * h, std),
        "W_y": _gaussian(rng, h, q, std),
        "b_y": _gaussian(rng, 1, q, std),
    }
    return DktParams(arch, arrays)


def init_params(arch, std: float = 0.05, seed: int = 0):
    if isinstance(arch, MemoryArch):
        return init_memory_params(arch, std, seed)
    if isinstance(arch, DktArch):
        return init_dkt_params(arch, std, seed)
    raise TypeError(f"unknown architecture {type(arch).__name__}")


@dataclass
class StepOutputs:
    """Per-step model outputs; entries outside the prediction mask are garbage."""
    prob_tensor: Tensor            # B x L, still attached to the graph
    pred_mask: np.ndarray          # B x L, 1 where a prediction is scored
    answers: np.ndarray            # B x L labels aligned with pred_mask
    p: np.ndarray                  # B x L detached probabilities
    theta: np.ndarray | None = None
    beta: np.ndarray | None = None
    attention: np.ndarray | None = None


# ---------------------------------------------------------------------------
# memory-model building blocks (per-step views used by the sequence forward)


def attention(key_memory: Tensor, kc_embed: Tensor) -> Tensor:
    """Softmax over inner products of each key slot with the KC embedding rows."""
    return ad.softmax_rows(kc_embed @ key_memory.T)


def read(value_memory: Tensor, weights: Tensor) -> Tensor:
    """Attention-weighted combination of batched value-memory rows."""
    return ad.attention_read(value_memory, weights)


def feature_vector(read_vec: Tensor, kc_embed: Tensor, params: DkvmnParams) -> Tensor:
    return ad.tanh(ad.concat_cols(read_vec, kc_embed) @ params.W_f + params.b_f)


def predict_dkvmn(read_vec: Tensor, kc_embed: Tensor, params: DkvmnParams) -> Tensor:
    f = feature_vector(read_vec, kc_embed, params)
    return ad.sigmoid(f @ params.W_p + params.b_p)


def predict_deep_irt(read_vec: Tensor, kc_embed: Tensor, params: DkvmnParams):
    """Returns (p, theta, beta); p = sigmoid(3 * theta - beta)."""
    f = feature_vector(read_vec, kc_embed, params)
    theta = ad.tanh(f @ params.W_theta + params.b_theta)
    beta = ad.tanh(kc_embed @ params.W_beta + params.b_beta)
    p = ad.sigmoid(ad.scale(theta, ABILITY_SCALE) - beta)
    return p, theta, beta


def write(value_memory: Tensor, weights: Tensor, response_embed: Tensor,
          params: DkvmnParams) -> Tensor:
    """Erase-then-add value memory update."""
    e = ad.sigmoid(response_embed @ params.W_e + params.b_e)
    a = ad.tanh(response_embed @ params.W_a + params.b_a)
    return ad.memory_write(value_memory, weights, e, a)


def _clamp_pad(ids):
    # padding id 0 would be out of range for the 1-based tables; any dummy row
    # works because every downstream use is masked out of loss and memory writes
    return np.where(ids >= 1, ids, 1)


def forward_sequence(params: DkvmnParams, batch: PaddedBatch) -> StepOutputs:
    """Run DKVMN or Deep-IRT over a padded batch.

    Each step predicts from the memory state before its own write; the value
    memory starts as a per-row copy of Mv0 and padded steps leave it untouched.
    """
    arch = params.arch
    if batch.q_ids.max() > arch.num_kcs:
        raise ad.IndexOutOfRangeError(
            f"question id {int(batch.q_ids.max())} exceeds num_kcs={arch.num_kcs}")
    B, L = batch.q_ids.shape
    n_slots = arch.mem_slots
    value_memory = ad.tile_rows(params.Mv0, B)
    key_t = params.Mk.T

    p_cols = []
    theta_np = np.zeros((B, L)) if arch.deep_irt else None
    beta_np = np.zeros((B, L)) if arch.deep_irt else None
    attn_np = np.zeros((B, L, n_slots))
    for t in range(L):
        k_t = ad.gather_rows(params.A, _clamp_pad(batch.q_ids[:, t]))
        w_raw = ad.softmax_rows(k_t @ key_t)
        r_t = read(value_memory, w_raw)
        if arch.deep_irt:
            p_t, th_t, be_t = predict_deep_irt(r_t, k_t, params)
            theta_np[:, t] = th_t.data[:, 0]
            beta_np[:, t] = be_t.data[:, 0]
        else:
            p_t = predict_dkvmn(r_t, k_t, params)
        attn_np[:, t, :] = w_raw.data
        p_cols.append(p_t)

        v_t = ad.gather_rows(params.B, _clamp_pad(batch.qa_ids[:, t]))
        mask_col = ad.constant(batch.mask[:, t:t + 1].astype(np.float64))
        value_memory = write(value_memory, ad.mul(w_raw, mask_col), v_t, params)

    prob = ad.concat_cols(*p_cols)
    return StepOutputs(prob_tensor=prob,
                       pred_mask=batch.mask.copy(),
                       answers=batch.answers.copy(),
                       p=prob.data.copy(),
                       theta=theta_np, beta=beta_np, attention=attn_np)


def forward_dkt(params: DktParams, batch: PaddedBatch) -> StepOutputs:
    """LSTM over one-hot interaction ids; step t's output scores question t+1.

    Predictions exist for steps 2..T only, so the prediction mask zeroes the
    first column.  h_0 = c_0 = 0.
    """
    arch = params.arch
    if batch.q_ids.max() > arch.num_kcs:
        raise ad.IndexOutOfRangeError(
            f"question id {int(batch.q_ids.max())} exceeds num_kcs={arch.num_kcs}")
    B, L = batch.q_ids.shape
    h_size = arch.hidden
    h = ad.constant(np.zeros((B, h_size)))
    c = ad.constant(np.zeros((B, h_size)))

    p_cols = [ad.constant(np.full((B, 1), 0.5))]  # step 1 has no history
    for t in range(L - 1):
        # one-hot(qa_t) @ W_x is a row lookup
        gates = ad.gather_rows(params.W_x, _clamp_pad(batch.qa_ids[:, t])) \
            + (h @ params.W_h) + params.b_g
        i_g = ad.sigmoid(ad.slice_cols(gates, 0, h_size))
        f_g = ad.sigmoid(ad.slice_cols(gates, h_size, 2 * h_size))
        g_g = ad.tanh(ad.slice_cols(gates, 2 * h_size, 3 * h_size))
        o_g = ad.sigmoid(ad.slice_cols(gates, 3 * h_size, 4 * h_size))
        c = ad.mul(f_g, c) + ad.mul(i_g, g_g)
        h = ad.mul(o_g, ad.tanh(c))
        y = ad.sigmoid(h @ params.W_y + params.b_y)
        next_q = _clamp_pad(batch.q_ids[:, t + 1]) - 1
        p_cols.append(ad.take_per_row(y, next_q))

    prob = ad.concat_cols(*p_cols)
    pred_mask = batch.mask.copy()
    pred_mask[:, 0] = 0
    return StepOutputs(prob_tensor=prob, pred_mask=pred_mask,
                       answers=batch.answers.copy(), p=prob.data.copy())


def forward(params, batch: PaddedBatch) -> StepOutputs:
    if isinstance(params, DkvmnParams):
        return forward_sequence(params, batch)
    if isinstance(params, DktParams):
        return forward_dkt(params, batch)
    raise TypeError(f"unknown params {type(params).__name__}")


def sequence_loss(outputs: StepOutputs, batch: PaddedBatch) -> Tensor:
    """Summed masked cross-entropy over scored steps (1 x 1 tensor)."""
    return ad.binary_cross_entropy(outputs.prob_tensor, outputs.answers,
                                   outputs.pred_mask, eps=PROB_EPS)


def mean_loss_value(loss: Tensor, outputs: StepOutputs) -> float:
    n = int(outputs.pred_mask.sum())
    return loss.item() / n if n else 0.0


def prediction_set(outputs: StepOutputs):
    """Flatten (scores, labels) over the scored steps."""
    sel = outputs.pred_mask == 1
    return outputs.p[sel], outputs.answers[sel]


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params, path, seed: int = 0) -> None:
    doc = {
        "arch": params.arch.to_dict(),
        "seed": seed,
        "arrays": {name: t.data.tolist() for name, t in params.named_parameters()},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_checkpoint(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    spec = doc["arch"]
    kind = spec["kind"]
    if kind in ("dkvmn", "deep_irt"):
        arch = MemoryArch(num_kcs=spec["num_kcs"], mem_slots=spec["mem_slots"],
                          state_dim=spec["state_dim"], feature_dim=spec["feature_dim"],
                          deep_irt=(kind == "deep_irt"))
        params = init_memory_params(arch, std=1.0, seed=0)
    elif kind == "dkt":
        arch = DktArch(num_kcs=spec["num_kcs"], hidden=spec["hidden"])
        params = init_dkt_params(arch, std=1.0, seed=0)
    else:
        raise ValidationError(f"unknown checkpoint kind {kind!r}")
    for name, t in params.named_parameters():
        arr = np.array(doc["arrays"][name], dtype=np.float64)
        if arr.shape != t.data.shape:
            raise ValidationError(
                f"checkpoint array {name} has shape {arr.shape}, expected {t.data.shape}")
        t.data = arr
    return params
