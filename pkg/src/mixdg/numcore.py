"""Dense float64 arithmetic: small feed-forward nets with hand-written backprop.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Public entry points
validate shape and finiteness through :func:`as_tensor`; internals trust their
inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity", "softmax")


class DimensionError(ValueError):
    pass


class StateError(RuntimeError):
    pass


class NumericError(ValueError):
    pass


def as_tensor(x, name: str = "tensor", ndim: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name}: expected {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name}: contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class Dense:
    n_in: int
    n_out: int
    activation: str = "relu"

    def __post_init__(self):
        if self.n_in < 1 or self.n_out < 1:
            raise DimensionError(f"layer widths must be positive, got {self.n_in}->{self.n_out}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class NetworkSpec:
    layers: list[Dense]
    seed: int = 0

    def __post_init__(self):
        if not self.layers:
            raise DimensionError("a network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise DimensionError(f"layer widths do not chain: {a.n_out} -> {b.n_in}")

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    @classmethod
    def mlp(cls, widths: Sequence[int], hidden: str = "relu", last: str = "identity",
            seed: int = 0) -> "NetworkSpec":
        """Chain ``widths[0] -> ... -> widths[-1]``; ``last`` is the output activation."""
        acts = [hidden] * (len(widths) - 2) + [last]
        layers = [Dense(a, b, act) for a, b, act in zip(widths, widths[1:], acts)]
        return cls(layers, seed)


class ParamStore:
    """Named parameter arrays with same-shaped gradient slots.

    Insertion order fixes the flat view. ``version`` increments on every
    in-place parameter update so callers can detect stale gradients.
    """

    def __init__(self, name: str = ""):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.version = 0

    def add(self, key: str, value: np.ndarray) -> None:
        if key in self.params:
            raise StateError(f"duplicate parameter {key!r}")
        value = np.array(value, dtype=np.float64)
        self.params[key] = value
        self.grads[key] = np.zeros_like(value)

    @property
    def layout(self) -> tuple[tuple[str, tuple[int, ...]], ...]:
        return tuple((k, v.shape) for k, v in self.params.items())

    @property
    def size(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def flat_params(self) -> np.ndarray:
        if not self.params:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self.params.values()])

    def flat_grads(self) -> np.ndarray:
        if not self.grads:
            return np.zeros(0)
        return np.concatenate([g.ravel() for g in self.grads.values()])

    def set_flat_params(self, vec: np.ndarray) -> None:
        _scatter(vec, self.params, self.size)
        self.version += 1

    def set_flat_grads(self, vec: np.ndarray) -> None:
        _scatter(vec, self.grads, self.size)

    def step(self, direction: np.ndarray, lr: float) -> None:
        """In-place ``theta -= lr * direction`` over the flat view."""
        if lr == 0.0:
            return
        self.set_flat_params(self.flat_params() - lr * direction)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in snap.items():
            self.params[k][...] = v
        self.version += 1


def _scatter(vec: np.ndarray, target: dict[str, np.ndarray], size: int) -> None:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (size,):
        raise StateError(f"flat vector has shape {vec.shape}, store expects ({size},)")
    offset = 0
    for arr in target.values():
        n = arr.size
        arr[...] = vec[offset:offset + n].reshape(arr.shape)
        offset += n


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z  # identity; softmax is applied inside the loss


def _act_grad(z: np.ndarray, a: np.ndarray, kind: str, upstream: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return upstream * (z > 0.0)
    if kind == "tanh":
        return upstream * (1.0 - a * a)
    return upstream


class Network:
    """Feed-forward stack of dense layers; weights are ``(n_in, n_out)``, row-vector convention."""

    def __init__(self, spec: NetworkSpec, name: str = ""):
        self.spec = spec
        self.store = ParamStore(name)
        rng = np.random.default_rng(spec.seed)
        for i, layer in enumerate(spec.layers):
            bound = np.sqrt(6.0 / (layer.n_in + layer.n_out))
            self.store.add(f"W{i}", rng.uniform(-bound, bound, size=(layer.n_in, layer.n_out)))
            self.store.add(f"b{i}", np.zeros(layer.n_out))
        self._cache: list[tuple[np.ndarray, np.ndarray, np.ndarray]] | None = None

    @property
    def n_in(self) -> int:
        return self.spec.n_in

    @property
    def n_out(self) -> int:
        return self.spec.n_out

    def _check_input(self, batch) -> np.ndarray:
        x = as_tensor(batch, "batch", ndim=2)
        if x.shape[1] != self.n_in:
            raise DimensionError(f"batch width {x.shape[1]} != network input width {self.n_in}")
        return x

    def predict(self, batch) -> np.ndarray:
        """Forward pass without caching (read-only on the network)."""
        a = self._check_input(batch)
        p = self.store.params
        for i, layer in enumerate(self.spec.layers):
            a = _act(a @ p[f"W{i}"] + p[f"b{i}"], layer.activation)
        return a

    def forward(self, batch) -> np.ndarray:
        a = self._check_input(batch)
        p = self.store.params
        cache = []
        for i, layer in enumerate(self.spec.layers):
            z = a @ p[f"W{i}"] + p[f"b{i}"]
            out = _act(z, layer.activation)
            cache.append((a, z, out))
            a = out
        self._cache = cache
        return a

    def backward(self, upstream_grad) -> np.ndarray:
        """Accumulate parameter gradients for the cached batch; return d(loss)/d(input).

        May be called repeatedly after one forward (gradients add up).
        """
        if self._cache is None:
            raise StateError("backward called before forward")
        g = as_tensor(upstream_grad, "upstream_grad", ndim=2)
        if g.shape != self._cache[-1][2].shape:
            raise DimensionError(f"upstream grad shape {g.shape} != output shape {self._cache[-1][2].shape}")
        p, grads = self.store.params, self.store.grads
        for i in reversed(range(len(self.spec.layers))):
            a_in, z, out = self._cache[i]
            g = _act_grad(z, out, self.spec.layers[i].activation, g)
            grads[f"W{i}"] += a_in.T @ g
            grads[f"b{i}"] += g.sum(axis=0)
            g = g @ p[f"W{i}"].T
        return g


@dataclass
class GradCheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


# Noise floor for the relative-error denominator: central differences at
# step 1e-5 carry ~1e-11 rounding noise, which must not register on
# parameters whose true gradient is exactly zero (dead relu units).
_REL_FLOOR = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), _REL_FLOOR)
    return float(diff / scale)


def finite_diff_check(net, loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]], batch,
                      step: float = 1e-5, tolerance: float = 1e-4) -> GradCheckReport:
    """Compare ``net.backward`` against central differences of ``loss_fn(net(batch))``.

    ``loss_fn`` maps network output to ``(loss, d loss / d output)``. One
    relative error is reported per parameter tensor.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    store = net.store
    store.zero_grad()
    out = net.forward(batch)
    loss, dout = loss_fn(out)
    net.backward(dout)
    report = GradCheckReport(tolerance=tolerance)
    for key, param in store.params.items():
        analytic = store.grads[key].copy()
        numeric = np.zeros_like(param)
        flat, nflat = param.reshape(-1), numeric.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            up = loss_fn(net.predict(batch))[0]
            flat[idx] = orig - step
            down = loss_fn(net.predict(batch))[0]
            flat[idx] = orig
            nflat[idx] = (up - down) / (2.0 * step)
        if not (np.all(np.isfinite(numeric)) and np.all(np.isfinite(analytic))):
            raise NumericError(f"non-finite gradient for {key}")
        report.errors[f"{store.name}{'.' if store.name else ''}{key}"] = relative_error(analytic, numeric)
    return report


def _layout(stores: Iterable[ParamStore]):
    return tuple(s.layout for s in stores)


def flatten_grads(stores: ParamStore | Sequence[ParamStore], layout=None) -> np.ndarray:
    """Concatenate gradients of ``stores`` in their fixed order.

    ``layout`` (from :func:`grad_layout`) pins the expected ordering; a mismatch
    raises :class:`StateError`.
    """
    stores = [stores] if isinstance(stores, ParamStore) else list(stores)
    if layout is not None and _layout(stores) != layout:
        raise StateError("parameter layout changed since the reference ordering was taken")
    parts = [s.flat_grads() for s in stores]
    return np.concatenate(parts) if parts else np.zeros(0)


def unflatten_grads(vec: np.ndarray, stores: ParamStore | Sequence[ParamStore]) -> None:
    stores = [stores] if isinstance(stores, ParamStore) else list(stores)
    total = sum(s.size for s in stores)
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (total,):
        raise StateError(f"flat vector length {vec.shape} != total parameter count {total}")
    offset = 0
    for s in stores:
        s.set_flat_grads(vec[offset:offset + s.size])
        offset += s.size


def grad_layout(stores: ParamStore | Sequence[ParamStore]):
    stores = [stores] if isinstance(stores, ParamStore) else list(stores)
    return _layout(stores)


class Adam:
    """Adam over the flat view of one store. Used by probes and the non-default optimizer flag."""

    def __init__(self, store: ParamStore, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.store, self.lr, self.betas, self.eps = store, lr, betas, eps
        self.m = np.zeros(store.size)
        self.v = np.zeros(store.size)
        self.t = 0

    def direction(self, grad: np.ndarray) -> np.ndarray:
        b1, b2 = self.betas
        self.t += 1
        self.m = b1 * self.m + (1 - b1) * grad
        self.v = b2 * self.v + (1 - b2) * grad * grad
        mhat = self.m / (1 - b1 ** self.t)
        vhat = self.v / (1 - b2 ** self.t)
        return mhat / (np.sqrt(vhat) + self.eps)

    def step(self, grad: np.ndarray | None = None) -> None:
        grad = self.store.flat_grads() if grad is None else grad
        self.store.step(self.direction(grad), self.lr)
