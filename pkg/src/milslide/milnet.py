"""Gated-attention MIL network: forward, analytic backward, Adam updates.

The model scores a bag of N feature rows x_i (one slide) as:

    h_i    = relu(W_proj x_i + b_proj)                  projection, H dims
    s_i    = w . (tanh(V h_i + b_v) * sigmoid(U h_i + b_u)) + b_w
    a      = softmax(s)                                 attention over rows
    z      = sum_i a_i h_i                              bag embedding
    logits = W_cls z + b_cls                            two classes

Training minimizes bag-level cross-entropy plus L2 decay on the weight
matrices (biases excluded); gradients are exact analytic derivatives and
all math is float64 so finite-difference checks are decisive. An optional
instance-level loss applies the bag classifier to the k highest- and k
lowest-attention rows (the selection is treated as locally constant, so
no gradient flows through the attention branch from it).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fbag import FeatureBag

MILM_MAGIC = b"MILM"
MILM_VERSION = 1

# Checkpoint tensor order; biases stored as row vectors.
PARAM_NAMES = ("w_proj", "b_proj", "v_attn", "b_v", "u_attn", "b_u", "w_attn", "b_w", "w_cls", "b_cls")


class MilError(ValueError):
    pass


@dataclass
class MilModel:
    """Parameters of the gated-attention network. dims = (D, H, A)."""

    w_proj: np.ndarray  # (H, D)
    b_proj: np.ndarray  # (H,)
    v_attn: np.ndarray  # (A, H) tanh branch
    b_v: np.ndarray  # (A,)
    u_attn: np.ndarray  # (A, H) sigmoid gate branch
    b_u: np.ndarray  # (A,)
    w_attn: np.ndarray  # (A,) attention score head
    b_w: np.ndarray  # (1,)
    w_cls: np.ndarray  # (2, H)
    b_cls: np.ndarray  # (2,)
    seed: int = 0

    @property
    def dims(self) -> tuple[int, int, int]:
        h, d = self.w_proj.shape
        return d, h, self.v_attn.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def clone(self) -> "MilModel":
        kwargs = {name: getattr(self, name).copy() for name in PARAM_NAMES}
        return MilModel(seed=self.seed, **kwargs)

    def validate(self) -> None:
        d, h, a = self.dims
        expected = _param_shapes(d, h, a)
        for name in PARAM_NAMES:
            arr = getattr(self, name)
            if arr.shape != expected[name]:
                raise MilError(f"{name} has shape {arr.shape}, expected {expected[name]}")
            if not np.isfinite(arr).all():
                raise MilError(f"{name} contains non-finite values")


def _param_shapes(d: int, h: int, a: int) -> dict[str, tuple[int, ...]]:
    return {
        "w_proj": (h, d),
        "b_proj": (h,),
        "v_attn": (a, h),
        "b_v": (a,),
        "u_attn": (a, h),
        "b_u": (a,),
        "w_attn": (a,),
        "b_w": (1,),
        "w_cls": (2, h),
        "b_cls": (2,),
    }


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_model(d: int, h: int, a: int, seed: int) -> MilModel:
    """Xavier-uniform weights from a seeded PRNG, zero biases.

    The draw order is fixed, so identical seeds give bitwise-identical
    models.
    """
    if d < 1 or h < 1 or a < 1:
        raise MilError(f"dims must be >= 1, got D={d} H={h} A={a}")
    rng = np.random.default_rng(seed)

    def draw(rows, cols):
        b = xavier_bound(cols, rows)
        return rng.uniform(-b, b, size=(rows, cols))

    return MilModel(
        w_proj=draw(h, d),
        b_proj=np.zeros(h),
        v_attn=draw(a, h),
        b_v=np.zeros(a),
        u_attn=draw(a, h),
        b_u=np.zeros(a),
        w_attn=draw(1, a)[0],
        b_w=np.zeros(1),
        w_cls=draw(2, h),
        b_cls=np.zeros(2),
        seed=int(seed),
    )


@dataclass
class BagOutput:
    logits: np.ndarray  # (2,)
    probs: np.ndarray  # (2,)
    attention: np.ndarray  # (N,)
    hidden: np.ndarray  # (N, H), retained for backward
    bag_embedding: np.ndarray  # (H,)
    # caches for the backward pass
    scores: np.ndarray = field(repr=False, default=None)
    tanh_branch: np.ndarray = field(repr=False, default=None)
    sig_branch: np.ndarray = field(repr=False, default=None)
    relu_mask: np.ndarray = field(repr=False, default=None)


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def forward(model: MilModel, bag: FeatureBag) -> BagOutput:
    """Score one bag; attention is softmax-normalized (max-subtracted)."""
    x = bag.features
    d, h, a = model.dims
    if x.shape[1] != d:
        raise MilError(f"bag {bag.slide_id!r} has D={x.shape[1]}, model expects D={d}")
    pre = x @ model.w_proj.T + model.b_proj
    hidden = np.maximum(pre, 0.0)
    t = np.tanh(hidden @ model.v_attn.T + model.b_v)
    g = _sigmoid(hidden @ model.u_attn.T + model.b_u)
    scores = (t * g) @ model.w_attn + model.b_w[0]
    attention = _softmax(scores)
    z = attention @ hidden
    logits = model.w_cls @ z + model.b_cls
    probs = _softmax(logits)
    return BagOutput(
        logits=logits,
        probs=probs,
        attention=attention,
        hidden=hidden,
        bag_embedding=z,
        scores=scores,
        tanh_branch=t,
        sig_branch=g,
        relu_mask=pre > 0.0,
    )


def bag_cross_entropy(output: BagOutput, label: int) -> float:
    return float(-np.log(output.probs[label]))


def _zero_grads(model: MilModel) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in model.params().items()}


def _decay_weights(model: MilModel) -> tuple[str, ...]:
    # biases are excluded from L2 decay
    return ("w_proj", "v_attn", "u_attn", "w_attn", "w_cls")


def loss_and_backward(
    model: MilModel,
    bag: FeatureBag,
    label: int,
    *,
    weight_decay: float = 0.0,
    instance_weight: float = 0.0,
    instance_k: int = 8,
) -> tuple[float, dict[str, np.ndarray]]:
    """Objective value and exact analytic gradients for one bag.

    Objective = -log p[label] + weight_decay/2 * ||weights||^2
    (+ instance_weight * instance loss when instance_weight > 0).
    """
    if label not in (0, 1):
        raise MilError(f"label must be 0 or 1, got {label}")
    out = forward(model, bag)
    x = bag.features
    grads = _zero_grads(model)

    # classifier head
    err = out.probs.copy()
    err[label] -= 1.0
    grads["w_cls"] += np.outer(err, out.bag_embedding)
    grads["b_cls"] += err
    dz = model.w_cls.T @ err

    # attention-weighted sum: z = a @ hidden
    d_hidden = np.outer(out.attention, dz)
    row_dots = out.hidden @ dz
    d_scores = out.attention * (row_dots - out.attention @ row_dots)

    # gated score head: s = (t*g) @ w + b_w
    gated = out.tanh_branch * out.sig_branch
    grads["w_attn"] += gated.T @ d_scores
    grads["b_w"] += d_scores.sum()
    d_gated = np.outer(d_scores, model.w_attn)
    d_pre_t = d_gated * out.sig_branch * (1.0 - out.tanh_branch**2)
    d_pre_g = d_gated * out.tanh_branch * out.sig_branch * (1.0 - out.sig_branch)
    grads["v_attn"] += d_pre_t.T @ out.hidden
    grads["b_v"] += d_pre_t.sum(axis=0)
    grads["u_attn"] += d_pre_g.T @ out.hidden
    grads["b_u"] += d_pre_g.sum(axis=0)
    d_hidden += d_pre_t @ model.v_attn
    d_hidden += d_pre_g @ model.u_attn

    loss = bag_cross_entropy(out, label)

    if instance_weight > 0.0:
        inst_loss, inst = _instance_terms(model, out, label, instance_k)
        loss += instance_weight * inst_loss
        grads["w_cls"] += instance_weight * inst["w_cls"]
        grads["b_cls"] += instance_weight * inst["b_cls"]
        d_hidden += instance_weight * inst["hidden"]

    # projection layer closes the chain
    d_pre = d_hidden * out.relu_mask
    grads["w_proj"] += d_pre.T @ x
    grads["b_proj"] += d_pre.sum(axis=0)

    if weight_decay > 0.0:
        for name in _decay_weights(model):
            w = getattr(model, name)
            loss += 0.5 * weight_decay * float(np.sum(w * w))
            grads[name] += weight_decay * w

    return loss, grads


def _instance_terms(
    model: MilModel, output: BagOutput, label: int, k: int
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean instance cross-entropy over the k top / k bottom attention rows.

    Top rows target the bag label; bottom rows target class 0 (which is the
    opposite class for positive bags and the same class for negative ones).
    Returns the loss plus gradient pieces w.r.t. the classifier and the
    hidden rows; k clamps to floor(N/2).
    """
    n = output.hidden.shape[0]
    k_eff = min(int(k), n // 2)
    hidden_grad = np.zeros_like(output.hidden)
    if k_eff < 1:
        return 0.0, {"w_cls": np.zeros_like(model.w_cls), "b_cls": np.zeros_like(model.b_cls), "hidden": hidden_grad}
    order = np.argsort(output.attention, kind="stable")
    bottom = order[:k_eff]
    top = order[-k_eff:]
    selected = np.concatenate([top, bottom])
    targets = np.concatenate(
        [np.full(k_eff, label, dtype=int), np.zeros(k_eff, dtype=int)]
    )
    rows = output.hidden[selected]
    logits = rows @ model.w_cls.T + model.b_cls
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    m = selected.size
    loss = float(-np.log(probs[np.arange(m), targets]).mean())
    err = probs
    err[np.arange(m), targets] -= 1.0
    err /= m
    d_w_cls = err.T @ rows
    d_b_cls = err.sum(axis=0)
    hidden_grad[selected] += err @ model.w_cls
    return loss, {"w_cls": d_w_cls, "b_cls": d_b_cls, "hidden": hidden_grad}


def instance_loss(
    model: MilModel, output: BagOutput, label: int, k: int
) -> tuple[float, dict[str, np.ndarray]]:
    """Public surface of the optional instance-level loss (unweighted)."""
    if label not in (0, 1):
        raise MilError(f"label must be 0 or 1, got {label}")
    return _instance_terms(model, output, label, k)


@dataclass
class AdamState:
    """Per-tensor first/second moment accumulators plus hyperparameters."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_model(cls, model: MilModel, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            step=0,
            m={name: np.zeros_like(arr) for name, arr in model.params().items()},
            v={name: np.zeros_like(arr) for name, arr in model.params().items()},
        )


def adam_step(model: MilModel, grads: dict[str, np.ndarray], state: AdamState) -> tuple[MilModel, AdamState]:
    """Standard bias-corrected Adam update, applied in place."""
    t = state.step + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, param in model.params().items():
        g = grads[name]
        if g.shape != param.shape:
            raise MilError(f"gradient for {name} has shape {g.shape}, expected {param.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        param -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    state.step = t
    return model, state


def save_model(model: MilModel, path: str | Path) -> None:
    """Write a MILM v1 checkpoint (float64 tensors, fixed order)."""
    model.validate()
    d, h, a = model.dims
    parts = [MILM_MAGIC, struct.pack("<IQIII", MILM_VERSION, model.seed, d, h, a)]
    for name in PARAM_NAMES:
        arr = getattr(model, name)
        mat = arr.reshape(1, -1) if arr.ndim == 1 else arr
        parts.append(struct.pack("<II", mat.shape[0], mat.shape[1]))
        parts.append(np.ascontiguousarray(mat, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_model(path: str | Path) -> MilModel:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 4 or blob[:4] != MILM_MAGIC:
        raise MilError(f"{path}: bad magic, expected {MILM_MAGIC!r}")
    if len(blob) < 28:
        raise MilError(f"{path}: truncated header")
    version, seed, d, h, a = struct.unpack_from("<IQIII", blob, 4)
    if version != MILM_VERSION:
        raise MilError(f"{path}: unsupported version {version}")
    if d < 1 or h < 1 or a < 1:
        raise MilError(f"{path}: dims must be >= 1, got D={d} H={h} A={a}")
    expected_shapes = _param_shapes(d, h, a)
    off = 28
    tensors: dict[str, np.ndarray] = {}
    for name in PARAM_NAMES:
        if off + 8 > len(blob):
            raise MilError(f"{path}: truncated before tensor {name}")
        rows, cols = struct.unpack_from("<II", blob, off)
        off += 8
        nbytes = rows * cols * 8
        if off + nbytes > len(blob):
            raise MilError(f"{path}: truncated tensor {name}")
        mat = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=off).reshape(rows, cols)
        off += nbytes
        want = expected_shapes[name]
        flat_want = (1, want[0]) if len(want) == 1 else want
        if (rows, cols) != flat_want:
            raise MilError(f"{path}: tensor {name} has shape ({rows}, {cols}), expected {flat_want}")
        tensors[name] = mat.reshape(want).astype(np.float64)
    if off != len(blob):
        raise MilError(f"{path}: oversized file, {len(blob) - off} trailing bytes")
    model = MilModel(seed=int(seed), **tensors)
    model.validate()
    return model
