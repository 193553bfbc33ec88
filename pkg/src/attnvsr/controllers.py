"""Parameter-shared per-voxel controllers and the flat genotype codec.

Genotype layout, in order:

    Attention      w_q(d) | w_k(d) | b_q(d) | b_k(d) | weights(4n) | bias(1)
    SlowAttention  same as Attention, then gene_alpha | gene_eta
    MLP            weights(4n) | bias(1)
    MLPComm        weights(5 x 8n, row-major) | biases(5)

Downstream weights act on the row-major flattening of the 4 x n (or 8 x n)
encoded matrix, so the weight of channel ``r`` for voxel ``i`` sits at
``r * n + i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .morphology import one_hot_encode

FAMILIES = ("Attention", "SlowAttention", "MLP", "MLPComm")
N_SENSORS = 4
N_COMM = 4  # one outgoing value per neighbor direction N, E, S, W


class CodecError(ValueError):
    pass


@dataclass(frozen=True)
class ControllerSpec:
    family: str = "Attention"
    d: int = 8
    k_act: int = 20
    comm_channels: int = N_COMM

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown controller family {self.family!r}; expected one of {FAMILIES}")
        if self.d < 1 or self.k_act < 1:
            raise ValueError("d and k_act must be >= 1")

    @property
    def uses_attention(self) -> bool:
        return self.family in ("Attention", "SlowAttention")


def attention_size(spec: ControllerSpec) -> int:
    return 4 * spec.d if spec.uses_attention else 0


def param_count(spec: ControllerSpec, n: int) -> int:
    if n < 1:
        raise ValueError("n must be >= 1")
    if spec.family == "Attention":
        return 4 * spec.d + N_SENSORS * n + 1
    if spec.family == "SlowAttention":
        return 4 * spec.d + N_SENSORS * n + 1 + 2
    if spec.family == "MLP":
        return N_SENSORS * n + 1
    n_in = N_SENSORS + spec.comm_channels
    n_out = 1 + spec.comm_channels
    return n_in * n * n_out + n_out


def layout(spec: ControllerSpec, n: int) -> list[tuple[str, int]]:
    """Ordered ``(segment, length)`` pairs making up the genotype."""
    d = spec.d
    if spec.family == "MLPComm":
        n_in = N_SENSORS + spec.comm_channels
        n_out = 1 + spec.comm_channels
        return [("weights", n_out * n_in * n), ("bias", n_out)]
    segments = []
    if spec.uses_attention:
        segments += [("w_q", d), ("w_k", d), ("b_q", d), ("b_k", d)]
    segments += [("weights", N_SENSORS * n), ("bias", 1)]
    if spec.family == "SlowAttention":
        segments += [("gene_alpha", 1), ("gene_eta", 1)]
    return segments


def layout_descriptor(spec: ControllerSpec, n: int) -> str:
    segs = ",".join(f"{name}:{size}" for name, size in layout(spec, n))
    return f"family={spec.family} d={spec.d} n={n} p={param_count(spec, n)} segments={segs}"


def parse_layout_descriptor(line: str) -> dict:
    fields = dict(tok.split("=", 1) for tok in line.split())
    return {"family": fields["family"], "d": int(fields["d"]), "n": int(fields["n"]), "p": int(fields["p"])}


@dataclass(frozen=True)
class AttentionParams:
    w_q: np.ndarray
    w_k: np.ndarray
    b_q: np.ndarray
    b_k: np.ndarray

    @property
    def d(self) -> int:
        return len(self.w_q)


@dataclass(frozen=True)
class DecodedGenotype:
    spec: ControllerSpec
    n: int
    attn: AttentionParams | None
    weights: np.ndarray  # (n_out, rows, n)
    bias: np.ndarray  # (n_out,)
    gene_alpha: float = 0.0
    gene_eta: float = 0.0


def decode(theta, spec: ControllerSpec, n: int) -> DecodedGenotype:
    theta = np.asarray(theta, dtype=float)
    expected = param_count(spec, n)
    if theta.ndim != 1 or len(theta) != expected:
        raise CodecError(f"genotype length mismatch for {spec.family} with n={n}: expected {expected}, found {theta.size}")
    parts = {}
    pos = 0
    for name, size in layout(spec, n):
        parts[name] = theta[pos:pos + size]
        pos += size
    attn = None
    if spec.uses_attention:
        attn = AttentionParams(parts["w_q"], parts["w_k"], parts["b_q"], parts["b_k"])
    if spec.family == "MLPComm":
        n_out = 1 + spec.comm_channels
        weights = parts["weights"].reshape(n_out, N_SENSORS + spec.comm_channels, n)
    else:
        weights = parts["weights"].reshape(1, N_SENSORS, n)
    return DecodedGenotype(
        spec=spec, n=n, attn=attn, weights=weights, bias=parts["bias"],
        gene_alpha=float(parts["gene_alpha"][0]) if "gene_alpha" in parts else 0.0,
        gene_eta=float(parts["gene_eta"][0]) if "gene_eta" in parts else 0.0,
    )


def encode(g: DecodedGenotype) -> np.ndarray:
    chunks = []
    if g.attn is not None:
        chunks += [g.attn.w_q, g.attn.w_k, g.attn.b_q, g.attn.b_k]
    chunks += [g.weights.ravel(), g.bias]
    if g.spec.family == "SlowAttention":
        chunks += [[g.gene_alpha], [g.gene_eta]]
    return np.concatenate([np.asarray(c, dtype=float) for c in chunks])


def decode_slow_attention_genes(gene_alpha: float, gene_eta: float) -> tuple[float, float]:
    return min(abs(gene_alpha), 1.0), min(abs(gene_eta), 1.0)


# -- single-voxel forward passes ---------------------------------------------


def attention_matrix(X: np.ndarray, attn: AttentionParams, i: int) -> np.ndarray:
    """``tanh(Q K^T / sqrt(d))`` with voxel-local projections.

    ``W_q = h_i w_q^T`` picks column ``i`` out of ``X``, so the result does
    not depend on any other column.
    """
    n = X.shape[1]
    h = np.zeros(n)
    h[i] = 1.0
    Wq = np.outer(h, attn.w_q)
    Wk = np.outer(h, attn.w_k)
    Q = X @ Wq + attn.b_q
    K = X @ Wk + attn.b_k
    return np.tanh(Q @ K.T / math.sqrt(attn.d))


def _downstream(weights: np.ndarray, bias: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.tanh(weights.reshape(len(bias), -1) @ Y.ravel() + bias)


def attention_forward_encoded(X: np.ndarray, i: int, g: DecodedGenotype, A: np.ndarray | None = None) -> float:
    """Actuation from an encoded input; only column ``i`` of ``X`` is read.

    ``A`` overrides the computed attention matrix (slow or frozen attention).
    """
    n = X.shape[1]
    h = np.zeros(n)
    h[i] = 1.0
    if A is None:
        A = attention_matrix(X, g.attn, i)
    Y = A @ np.outer(X @ h, h)
    return float(_downstream(g.weights, g.bias, Y)[0])


def attention_forward(s, i: int, n: int, genotype, spec: ControllerSpec) -> float:
    g = decode(genotype, spec, n)
    return attention_forward_encoded(one_hot_encode(s, i, n), i, g)


def mlp_forward(s, i: int, n: int, genotype) -> float:
    g = decode(genotype, ControllerSpec("MLP"), n)
    return float(_downstream(g.weights, g.bias, one_hot_encode(s, i, n))[0])


def mlp_comm_forward(s, incoming, i: int, n: int, genotype) -> tuple[float, np.ndarray]:
    """One MLP-Comm step; ``incoming`` is ordered N, E, S, W."""
    g = decode(genotype, ControllerSpec("MLPComm"), n)
    x = np.concatenate([np.asarray(s, dtype=float), np.asarray(incoming, dtype=float)])
    out = _downstream(g.weights, g.bias, one_hot_encode(x, i, n))
    return float(out[0]), out[1:].copy()


@dataclass
class SlowAttentionState:
    alpha: float
    eta: float
    A_prev: np.ndarray | None = None
    k: int = 0


def slow_attention_update(A: np.ndarray, state: SlowAttentionState) -> np.ndarray:
    """Blend the current attention with the running one; mutates ``state``."""
    if state.k == 0:
        A_eff = np.array(A, dtype=float)
    else:
        A_eff = state.alpha * A + state.eta * state.A_prev
    state.A_prev = A_eff
    state.k += 1
    return A_eff


# -- batched controllers used during simulation ------------------------------


def batched_attention(S: np.ndarray, attn: AttentionParams) -> np.ndarray:
    """Attention matrices for all voxels at once, ``S`` has shape ``(n, 4)``."""
    Q = S[:, :, None] * attn.w_q[None, None, :] + attn.b_q
    K = S[:, :, None] * attn.w_k[None, None, :] + attn.b_k
    return np.tanh(np.einsum("nrd,ncd->nrc", Q, K) / math.sqrt(attn.d))


@dataclass
class Controller:
    """Stateful per-evaluation wrapper around a decoded genotype.

    ``tick`` maps the ``(n, 4)`` normalized, noisy sensor matrix to ``n``
    actuations and updates any carried state (slow attention blend or
    message buffers). The last attention matrices are kept for export.
    """

    genotype: DecodedGenotype
    neighbors: np.ndarray | None = None  # (n, 4) neighbor index in N, E, S, W or -1
    frozen_attention: np.ndarray | None = None  # (n, 4, 4) pinned matrices
    last_attention: np.ndarray | None = field(default=None, init=False)
    inbox: np.ndarray | None = field(default=None, init=False)
    slow: SlowAttentionState | None = field(default=None, init=False)

    def __post_init__(self):
        g = self.genotype
        if g.spec.family == "SlowAttention":
            alpha, eta = decode_slow_attention_genes(g.gene_alpha, g.gene_eta)
            self.slow = SlowAttentionState(alpha, eta)
        if g.spec.family == "MLPComm":
            if self.neighbors is None:
                raise ValueError("MLPComm needs the voxel neighbor table")
            self.inbox = np.zeros((g.n, g.spec.comm_channels))
        if self.frozen_attention is not None and not g.spec.uses_attention:
            raise ValueError("frozen attention requires an attention controller")

    def tick(self, S: np.ndarray) -> np.ndarray:
        g = self.genotype
        family = g.spec.family
        idx = np.arange(g.n)
        if family == "MLPComm":
            inputs = np.concatenate([S, self.inbox], axis=1)  # (n, 8)
            W = g.weights[:, :, idx]  # (5, 8, n)
            out = np.tanh(np.einsum("orn,nr->no", W, inputs) + g.bias)
            self._exchange(out[:, 1:])
            return out[:, 0]
        if g.attn is None:
            AS = S
        else:
            if self.frozen_attention is not None:
                A = self.frozen_attention
            else:
                A = batched_attention(S, g.attn)
                if self.slow is not None:
                    A = slow_attention_update(A, self.slow)
            self.last_attention = A
            AS = np.einsum("nrc,nc->nr", A, S)
        W = g.weights[0][:, idx]  # (4, n): column i holds voxel i's weights
        return np.tanh(np.einsum("rn,nr->n", W, AS) + g.bias[0])

    def _exchange(self, outgoing: np.ndarray):
        # inbox[v, dir] receives what the neighbor in `dir` sent toward v
        opposite = np.array([2, 3, 0, 1])
        inbox = np.zeros_like(self.inbox)
        for k in range(4):
            nb = self.neighbors[:, k]
            ok = nb >= 0
            inbox[ok, k] = outgoing[nb[ok], opposite[k]]
        self.inbox = inbox
