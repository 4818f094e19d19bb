"""Small dense residual networks in numpy with hand-written gradients.

Topology: input projection + ReLU, then ``blocks`` bottleneck residual blocks
``a <- a + W2 relu(W1 a + b1) + b2``, then an affine head on ``relu(a)``.
Policy heads apply a masked softmax; variance heads a softplus.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

CHECKPOINT_MAGIC = b"RDMN"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Topology:
    input_dim: int
    width: int = 64
    blocks: int = 4
    bottleneck: int = 4
    output_dim: int = 2
    head: str = "policy"  # "policy" or "variance"

    @property
    def hidden(self) -> int:
        return max(1, self.width // self.bottleneck)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        s = {"in.W": (self.input_dim, self.width), "in.b": (self.width,)}
        for k in range(self.blocks):
            s[f"block{k}.W1"] = (self.width, self.hidden)
            s[f"block{k}.b1"] = (self.hidden,)
            s[f"block{k}.W2"] = (self.hidden, self.width)
            s[f"block{k}.b2"] = (self.width,)
        s["out.W"] = (self.width, self.output_dim)
        s["out.b"] = (self.output_dim,)
        return s


class ResidualNet:
    def __init__(self, topology: Topology, rng: Optional[np.random.Generator] = None):
        self.topology = topology
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: dict[str, np.ndarray] = {}
        for name, shape in topology.shapes().items():
            if name.split(".")[1].startswith("b") or name.startswith("out."):
                self.params[name] = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(shape[0])
                self.params[name] = rng.uniform(-bound, bound, size=shape)

    # -- forward / backward ------------------------------------------------

    def forward(self, x):
        """Head pre-activations and the cache needed by :meth:`backward`."""
        P = self.params
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.topology.input_dim:
            raise ValueError(f"expected {self.topology.input_dim} features, got {x.shape[1]}")
        h0 = x @ P["in.W"] + P["in.b"]
        a = np.maximum(h0, 0.0)
        cache = {"x": x, "h0": h0, "blocks": []}
        for k in range(self.topology.blocks):
            z = a @ P[f"block{k}.W1"] + P[f"block{k}.b1"]
            r = np.maximum(z, 0.0)
            cache["blocks"].append((a, z, r))
            a = a + r @ P[f"block{k}.W2"] + P[f"block{k}.b2"]
        top = np.maximum(a, 0.0)
        cache["a"] = a
        cache["top"] = top
        return top @ P["out.W"] + P["out.b"], cache

    def backward(self, cache, d_out):
        """Gradients of sum(d_out * head_output) w.r.t. every parameter and
        the input."""
        P = self.params
        d_out = np.atleast_2d(d_out)
        g = {}
        g["out.W"] = cache["top"].T @ d_out
        g["out.b"] = d_out.sum(axis=0)
        da = (d_out @ P["out.W"].T) * (cache["a"] > 0)
        for k in range(self.topology.blocks - 1, -1, -1):
            a_in, z, r = cache["blocks"][k]
            g[f"block{k}.W2"] = r.T @ da
            g[f"block{k}.b2"] = da.sum(axis=0)
            dz = (da @ P[f"block{k}.W2"].T) * (z > 0)
            g[f"block{k}.W1"] = a_in.T @ dz
            g[f"block{k}.b1"] = dz.sum(axis=0)
            da = da + dz @ P[f"block{k}.W1"].T
        dh0 = da * (cache["h0"] > 0)
        g["in.W"] = cache["x"].T @ dh0
        g["in.b"] = dh0.sum(axis=0)
        dx = dh0 @ P["in.W"].T
        return {name: g[name] for name in P}, dx

    # -- heads -------------------------------------------------------------

    def policy(self, x, mask):
        logits, _ = self.forward(x)
        return masked_softmax(logits, mask)

    def variance(self, x):
        out, _ = self.forward(x)
        return softplus(out[:, 0])

    # -- parameter plumbing --------------------------------------------------

    def copy(self) -> "ResidualNet":
        other = ResidualNet.__new__(ResidualNet)
        other.topology = self.topology
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.params.values()])

    def set_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for name, v in self.params.items():
            n = v.size
            self.params[name] = np.array(flat[pos:pos + n], dtype=float).reshape(v.shape)
            pos += n
        if pos != len(flat):
            raise ValueError(f"flat vector has {len(flat)} values, network needs {pos}")

    @property
    def num_params(self) -> int:
        return sum(v.size for v in self.params.values())


NetworkParams = ResidualNet


def masked_softmax(logits, mask):
    logits = np.atleast_2d(logits)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
    if not mask.any(axis=1).all():
        raise ValueError("every row needs at least one legal action")
    z = np.where(mask, logits, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(probs, d_probs):
    """Logit gradient given dL/dp for a (masked) softmax output."""
    return probs * (d_probs - np.sum(probs * d_probs, axis=1, keepdims=True))


def softplus(z):
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-np.logaddexp(0.0, -z))


def forward_policy(params: ResidualNet, x, legal_mask) -> np.ndarray:
    return params.policy(x, legal_mask)


def forward_variance(params: ResidualNet, x) -> np.ndarray:
    return params.variance(x)


def backward(params: ResidualNet, cache, upstream):
    return params.backward(cache, upstream)


# --- optimisation ----------------------------------------------------------------


@dataclass
class OptimizerState:
    """Adam moments. A step whose gradient is identically zero only advances
    ``step``; parameters and moments are left alone."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    t: int = 0  # bias-correction counter (non-zero updates only)
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


def optimizer_step(params: ResidualNet, grads: dict, state: OptimizerState) -> None:
    for name, g in grads.items():
        if name not in params.params:
            raise KeyError(f"gradient for unknown parameter block {name!r}")
        if g.shape != params.params[name].shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter block {name!r}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter block {name!r}")
    state.step += 1
    if not any(np.any(g) for g in grads.values()):
        return
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params.params[name] = params.params[name] - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def copy_into_target(main: ResidualNet, target: ResidualNet) -> None:
    if main.topology != target.topology:
        raise ValueError(f"topology mismatch: {main.topology} vs {target.topology}")
    target.params = {k: v.copy() for k, v in main.params.items()}


# --- checkpoints ---------------------------------------------------------------
# layout: magic(4) | version u32 | header length u32 | JSON topology | float64 LE params


def save_checkpoint(net: ResidualNet, path) -> None:
    header = json.dumps(asdict(net.topology), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        fh.write(net.flat().astype("<f8").tobytes())


def load_checkpoint(path, topology: Optional[Topology] = None) -> ResidualNet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a network checkpoint")
    version, hlen = struct.unpack("<II", blob[4:12])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    stored = Topology(**json.loads(blob[12:12 + hlen]))
    if topology is not None and stored != topology:
        raise ValueError(f"{path}: topology {stored} does not match expected {topology}")
    net = ResidualNet(stored)
    flat = np.frombuffer(blob[12 + hlen:], dtype="<f8")
    net.set_flat(flat)
    return net
