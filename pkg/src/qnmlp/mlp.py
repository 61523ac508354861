"""One-hidden-layer sigmoid perceptron over a flat parameter vector.

The flat layout is ``[W_in_hidden row-major | b_hidden | W_hidden_out
row-major | b_out]``, which is what both optimizers treat as the point
they are minimizing over. Targets are scaled into [0.1, 0.9] so the
sigmoid output unit can actually reach them; the scaling endpoints are
kept on the dataset for denormalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Topology",
    "Network",
    "Dataset",
    "NORM_LO",
    "NORM_HI",
    "init_params",
    "unpack_params",
    "sigmoid",
    "forward",
    "loss_mse",
    "loss_and_grad",
    "grad_backprop",
    "finite_diff_grad",
    "normalize_targets",
    "denormalize",
    "relative_error",
]

# Normalized-target range: strictly inside (0, 1) so an exact fit never
# needs infinite weights.
NORM_LO = 0.1
NORM_HI = 0.9


@dataclass(frozen=True)
class Topology:
    """Node counts of the three layers."""

    n_in: int
    n_hidden: int
    n_out: int = 1

    def __post_init__(self):
        if min(self.n_in, self.n_hidden, self.n_out) < 1:
            raise ValueError(f"all layer sizes must be >= 1, got {self}")

    @property
    def n_params(self) -> int:
        return self.n_hidden * self.n_in + self.n_hidden + self.n_out * self.n_hidden + self.n_out


def init_params(topology: Topology, seed: int) -> np.ndarray:
    """Uniform [-0.5, 0.5] start weights from a deterministic stream."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.5, 0.5, topology.n_params)


def unpack_params(topology: Topology, params: np.ndarray):
    """Views (w_in_hidden, b_hidden, w_hidden_out, b_out) into the flat vector."""
    t = topology
    end_w1 = t.n_hidden * t.n_in
    end_b1 = end_w1 + t.n_hidden
    end_w2 = end_b1 + t.n_out * t.n_hidden
    w1 = params[:end_w1].reshape(t.n_hidden, t.n_in)
    b1 = params[end_w1:end_b1]
    w2 = params[end_b1:end_w2].reshape(t.n_out, t.n_hidden)
    b2 = params[end_w2:]
    return w1, b1, w2, b2


@dataclass(frozen=True, eq=False)
class Network:
    """A topology plus one flat parameter vector (kept read-only)."""

    topology: Topology
    params: np.ndarray

    def __post_init__(self):
        p = np.array(self.params, dtype=np.float64)
        if p.ndim != 1 or p.size != self.topology.n_params:
            raise ValueError(
                f"parameter vector has length {p.size}, topology {self.topology} needs {self.topology.n_params}"
            )
        if not np.all(np.isfinite(p)):
            raise ValueError("parameters must all be finite")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    def with_params(self, params) -> "Network":
        return Network(self.topology, params)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Sampled (input, target) rows with normalization metadata.

    Rows [0, split_index) are the training partition, the rest is the
    test partition. ``targets_norm`` lives in [0.1, 0.9]; ``norm_lo`` and
    ``norm_hi`` are the raw min/max that map there.
    """

    inputs: np.ndarray  # (n, n_in), raw function-domain units
    targets_raw: np.ndarray  # (n,)
    targets_norm: np.ndarray  # (n,)
    norm_lo: float
    norm_hi: float
    split_index: int

    def __post_init__(self):
        x = np.array(self.inputs, dtype=np.float64)
        raw = np.array(self.targets_raw, dtype=np.float64)
        norm = np.array(self.targets_norm, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] < 1:
            raise ValueError(f"inputs must be a 2-D array of non-empty rows, got shape {x.shape}")
        n = x.shape[0]
        if n < 2 or raw.shape != (n,) or norm.shape != (n,):
            raise ValueError("inputs, targets_raw and targets_norm need one entry per row, at least 2 rows")
        if not (np.all(norm >= NORM_LO - 1e-12) and np.all(norm <= NORM_HI + 1e-12)):
            raise ValueError(f"normalized targets must lie in [{NORM_LO}, {NORM_HI}]")
        if not self.norm_hi > self.norm_lo:
            raise ValueError(f"norm_lo must be < norm_hi, got [{self.norm_lo}, {self.norm_hi}]")
        if not 1 <= self.split_index < n:
            raise ValueError(f"split_index {self.split_index} leaves an empty partition for {n} rows")
        for a in (x, raw, norm):
            a.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets_raw", raw)
        object.__setattr__(self, "targets_norm", norm)

    @classmethod
    def from_samples(cls, inputs, targets_raw, split_index: int) -> "Dataset":
        """Build a dataset by normalizing raw targets over the full sample."""
        normed, lo, hi = normalize_targets(targets_raw)
        return cls(np.asarray(inputs, dtype=np.float64), np.asarray(targets_raw, dtype=np.float64),
                   normed, lo, hi, split_index)

    @property
    def n_rows(self) -> int:
        return self.inputs.shape[0]

    def rows(self, which: str):
        """(inputs, normalized targets) for the 'train' or 'test' partition."""
        if which == "train":
            sel = slice(0, self.split_index)
        elif which == "test":
            sel = slice(self.split_index, None)
        else:
            raise ValueError(f"row selector must be 'train' or 'test', got {which!r}")
        x, t = self.inputs[sel], self.targets_norm[sel]
        if t.size == 0:
            raise ValueError(f"selection {which!r} is empty")
        return x, t


def normalize_targets(raw):
    """Affine map sending min(raw) -> 0.1 and max(raw) -> 0.9.

    Returns (normalized, lo, hi) where lo/hi are the raw endpoints needed
    to invert the map later.
    """
    r = np.asarray(raw, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ValueError(f"need at least 2 raw targets, got shape {r.shape}")
    lo, hi = float(r.min()), float(r.max())
    if not hi > lo:
        raise ValueError("raw targets are constant; the normalization map is undefined")
    normed = NORM_LO + (r - lo) * ((NORM_HI - NORM_LO) / (hi - lo))
    return normed, lo, hi


def denormalize(y, lo: float, hi: float):
    """Inverse of ``normalize_targets`` for a value (or array) in [0.1, 0.9]."""
    if not hi > lo:
        raise ValueError(f"invalid normalization range [{lo}, {hi}]")
    out = lo + (np.asarray(y, dtype=np.float64) - NORM_LO) * ((hi - lo) / (NORM_HI - NORM_LO))
    return float(out) if np.ndim(out) == 0 else out


def sigmoid(x):
    """Logistic function, overflow-safe for large |x|. Works elementwise."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return float(out) if out.ndim == 0 else out


def forward(net: Network, x):
    """Single-row forward pass; returns (hidden_acts, outputs)."""
    x = np.asarray(x, dtype=np.float64)
    t = net.topology
    if x.shape != (t.n_in,):
        raise ValueError(f"input has shape {x.shape}, expected ({t.n_in},)")
    w1, b1, w2, b2 = unpack_params(t, net.params)
    hidden = sigmoid(w1 @ x + b1)
    out = sigmoid(w2 @ hidden + b2)
    return hidden, out


def _check_net_vs_data(net: Network, data: Dataset) -> None:
    t = net.topology
    if data.inputs.shape[1] != t.n_in:
        raise ValueError(f"dataset rows have {data.inputs.shape[1]} inputs, network expects {t.n_in}")
    if t.n_out != 1:
        raise ValueError("dataset training needs a single output unit")


def _forward_batch(topology: Topology, params: np.ndarray, x: np.ndarray):
    w1, b1, w2, b2 = unpack_params(topology, params)
    hidden = sigmoid(x @ w1.T + b1)
    out = sigmoid(hidden @ w2.T + b2)
    return hidden, out


def loss_mse(net: Network, data: Dataset, rows: str = "train") -> float:
    """Mean squared error against normalized targets on the selected rows."""
    _check_net_vs_data(net, data)
    x, t = data.rows(rows)
    _, out = _forward_batch(net.topology, net.params, x)
    r = out[:, 0] - t
    return float(np.mean(r * r))


def loss_and_grad(net: Network, data: Dataset, rows: str = "train"):
    """MSE and its gradient from one shared forward pass."""
    _check_net_vs_data(net, data)
    x, t = data.rows(rows)
    topo = net.topology
    w1, b1, w2, b2 = unpack_params(topo, net.params)
    hidden = sigmoid(x @ w1.T + b1)  # (n, n_hidden)
    out = sigmoid(hidden @ w2.T + b2)  # (n, 1)
    resid = out[:, 0] - t
    loss = float(np.mean(resid * resid))

    n = x.shape[0]
    d_out = (2.0 / n) * resid[:, None] * out * (1.0 - out)  # (n, 1)
    d_hid = (d_out @ w2) * hidden * (1.0 - hidden)  # (n, n_hidden)
    grad = np.empty_like(net.params)
    gw1, gb1, gw2, gb2 = unpack_params(topo, grad)
    gw1[:] = d_hid.T @ x
    gb1[:] = d_hid.sum(axis=0)
    gw2[:] = d_out.T @ hidden
    gb2[:] = d_out.sum(axis=0)
    return loss, grad


def grad_backprop(net: Network, data: Dataset, rows: str = "train") -> np.ndarray:
    """Gradient of ``loss_mse`` in flat layout order.

    This is the true ascent gradient of the averaged loss, 2/N factor
    included, so it can be checked against finite differences directly.
    """
    return loss_and_grad(net, data, rows)[1]


def finite_diff_grad(net: Network, data: Dataset, rows: str = "train", step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient oracle; leaves the network untouched."""
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    base = np.array(net.params)
    grad = np.empty_like(base)
    for i in range(base.size):
        p = base.copy()
        p[i] = base[i] + step
        f_plus = loss_mse(net.with_params(p), data, rows)
        p[i] = base[i] - step
        f_minus = loss_mse(net.with_params(p), data, rows)
        grad[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(a, b) -> float:
    """max over coordinates of |a - b| / max(1, |a|, |b|)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))
