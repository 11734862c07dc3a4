"""Small numpy layer kit with hand-written backward passes.

Every layer is stateless: parameters live in a flat ``dict[str, ndarray]``
owned by the caller, ``forward`` returns ``(output, cache)`` and ``backward``
accumulates parameter gradients into a caller-supplied dict of the same
shape and returns the gradient with respect to the input.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

log = logging.getLogger(__name__)

KINDS = ("linear", "bilinear", "conv1d", "deconv1d", "gru-bidirectional-stack", "embedding-lookup")


class ShapeError(ValueError):
    pass


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _check(cond, layer, msg):
    if not cond:
        raise ShapeError(f"{layer.kind} '{layer.name}': {msg}")


# ---------------------------------------------------------------- layers


class Linear:
    kind = "linear"

    def __init__(self, name, n_in, n_out):
        self.name, self.n_in, self.n_out = name, n_in, n_out

    def init(self, rng, dtype=np.float64):
        return {
            f"{self.name}.w": _uniform(rng, (self.n_in, self.n_out), self.n_in, dtype),
            f"{self.name}.b": _uniform(rng, (self.n_out,), self.n_in, dtype),
        }

    def forward(self, params, x):
        _check(x.shape[-1] == self.n_in, self, f"expected {self.n_in} input features, got {x.shape[-1]}")
        return x @ params[f"{self.name}.w"] + params[f"{self.name}.b"], x

    def backward(self, params, x, dy, grads):
        x2 = x.reshape(-1, self.n_in)
        dy2 = dy.reshape(-1, self.n_out)
        grads[f"{self.name}.w"] += x2.T @ dy2
        grads[f"{self.name}.b"] += dy2.sum(axis=0)
        return dy @ params[f"{self.name}.w"].T


class Bilinear:
    """y_k = sum_ij x_i Z_kij a_j + b_k for a pair of vectors."""

    kind = "bilinear"

    def __init__(self, name, n_x, n_a, n_out):
        self.name, self.n_x, self.n_a, self.n_out = name, n_x, n_a, n_out

    def init(self, rng, dtype=np.float64):
        fan_in = self.n_x * self.n_a
        return {
            f"{self.name}.z": _uniform(rng, (self.n_out, self.n_x, self.n_a), fan_in, dtype),
            f"{self.name}.b": _uniform(rng, (self.n_out,), fan_in, dtype),
        }

    def forward(self, params, x, a):
        _check(x.shape == (self.n_x,), self, f"expected left input ({self.n_x},), got {x.shape}")
        _check(a.shape == (self.n_a,), self, f"expected right input ({self.n_a},), got {a.shape}")
        z = params[f"{self.name}.z"]
        za = z @ a  # (out, n_x)
        return za @ x + params[f"{self.name}.b"], (x, a, za)

    def backward(self, params, cache, dy, grads):
        x, a, za = cache
        z = params[f"{self.name}.z"]
        grads[f"{self.name}.z"] += dy[:, None, None] * x[None, :, None] * a[None, None, :]
        grads[f"{self.name}.b"] += dy
        dx = dy @ za
        da = np.einsum("k,kij,i->j", dy, z, x)
        return dx, da


class Embedding:
    """Lookup table; index ``None`` maps to the zero vector."""

    kind = "embedding-lookup"

    def __init__(self, name, n_rows, dim):
        self.name, self.n_rows, self.dim = name, n_rows, dim

    def init(self, rng, dtype=np.float64):
        return {f"{self.name}.table": rng.uniform(-1.0, 1.0, size=(self.n_rows, self.dim)).astype(dtype)}

    def forward(self, params, idx):
        table = params[f"{self.name}.table"]
        if idx is None:
            return np.zeros(self.dim, dtype=table.dtype), None
        _check(0 <= idx < self.n_rows, self, f"index {idx} outside [0, {self.n_rows})")
        return table[idx].copy(), idx

    def backward(self, params, idx, dy, grads):
        if idx is not None:
            grads[f"{self.name}.table"][idx] += dy


class Conv1d:
    """Stride-1 convolution over positions; input (..., L, C_in)."""

    kind = "conv1d"

    def __init__(self, name, c_in, c_out, kernel, padding="valid"):
        if padding not in ("valid", "same"):
            raise ValueError(f"unknown padding {padding!r}")
        if padding == "same" and kernel % 2 == 0:
            raise ValueError("same padding needs an odd kernel width")
        self.name, self.c_in, self.c_out, self.kernel, self.padding = name, c_in, c_out, kernel, padding
        self.pad = (kernel - 1) // 2 if padding == "same" else 0

    def init(self, rng, dtype=np.float64):
        fan_in = self.kernel * self.c_in
        return {
            f"{self.name}.w": _uniform(rng, (self.kernel, self.c_in, self.c_out), fan_in, dtype),
            f"{self.name}.b": _uniform(rng, (self.c_out,), fan_in, dtype),
        }

    def forward(self, params, x):
        _check(x.ndim >= 2 and x.shape[-1] == self.c_in, self, f"expected {self.c_in} input channels, got shape {x.shape}")
        length = x.shape[-2] + 2 * self.pad
        _check(self.kernel <= length, self, f"kernel width {self.kernel} exceeds input length {x.shape[-2]}")
        if self.pad:
            widths = [(0, 0)] * (x.ndim - 2) + [(self.pad, self.pad), (0, 0)]
            xp = np.pad(x, widths)
        else:
            xp = x
        # (..., L_out, C_in, K) -> (..., L_out, K * C_in)
        win = sliding_window_view(xp, self.kernel, axis=-2)
        win = np.swapaxes(win, -1, -2)
        cols = win.reshape(*win.shape[:-2], self.kernel * self.c_in)
        w = params[f"{self.name}.w"].reshape(self.kernel * self.c_in, self.c_out)
        return cols @ w + params[f"{self.name}.b"], (cols, xp.shape)

    def backward(self, params, cache, dy, grads):
        cols, xp_shape = cache
        k, c = self.kernel, self.c_in
        w = params[f"{self.name}.w"].reshape(k * c, self.c_out)
        grads[f"{self.name}.w"] += (cols.reshape(-1, k * c).T @ dy.reshape(-1, self.c_out)).reshape(k, c, self.c_out)
        grads[f"{self.name}.b"] += dy.reshape(-1, self.c_out).sum(axis=0)
        dcols = (dy @ w.T).reshape(*dy.shape[:-1], k, c)
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        n_out = dy.shape[-2]
        for j in range(k):
            dxp[..., j:j + n_out, :] += dcols[..., j, :]
        if self.pad:
            return dxp[..., self.pad:-self.pad, :]
        return dxp


class Deconv1d:
    """Stride-1 transposed convolution; 'same' crops back to the input length."""

    kind = "deconv1d"

    def __init__(self, name, c_in, c_out, kernel, padding="valid"):
        if padding == "same" and kernel % 2 == 0:
            raise ValueError("same padding needs an odd kernel width")
        self.name, self.c_in, self.c_out, self.kernel = name, c_in, c_out, kernel
        self.crop = (kernel - 1) // 2 if padding == "same" else 0

    def init(self, rng, dtype=np.float64):
        fan_in = self.kernel * self.c_in
        return {
            f"{self.name}.w": _uniform(rng, (self.kernel, self.c_in, self.c_out), fan_in, dtype),
            f"{self.name}.b": _uniform(rng, (self.c_out,), fan_in, dtype),
        }

    def forward(self, params, x):
        _check(x.ndim >= 2 and x.shape[-1] == self.c_in, self, f"expected {self.c_in} input channels, got shape {x.shape}")
        w = params[f"{self.name}.w"]
        n = x.shape[-2]
        full = np.zeros((*x.shape[:-2], n + self.kernel - 1, self.c_out), dtype=x.dtype)
        for j in range(self.kernel):
            full[..., j:j + n, :] += x @ w[j]
        out = full[..., self.crop:full.shape[-2] - self.crop, :] + params[f"{self.name}.b"]
        return out, x

    def backward(self, params, x, dy, grads):
        w = params[f"{self.name}.w"]
        n = x.shape[-2]
        full_shape = (*dy.shape[:-2], n + self.kernel - 1, self.c_out)
        dfull = np.zeros(full_shape, dtype=dy.dtype)
        dfull[..., self.crop:full_shape[-2] - self.crop, :] = dy
        grads[f"{self.name}.b"] += dy.reshape(-1, self.c_out).sum(axis=0)
        x2 = x.reshape(-1, n, self.c_in)
        dx = np.zeros_like(x)
        for j in range(self.kernel):
            seg = dfull[..., j:j + n, :]
            grads[f"{self.name}.w"][j] += x2.reshape(-1, self.c_in).T @ seg.reshape(-1, self.c_out)
            dx += seg @ w[j].T
        return dx


class BiGRUStack:
    """Stacked bidirectional GRU over a single (L, n_in) sequence.

    Per layer the two directions are run together as a batch of two with
    separate weights.  Gates follow the original formulation where the reset
    gate scales the hidden state before the candidate projection:
    n = tanh(W_in x + b_in + W_hn (r * h) + b_hn).
    Output is (L, 2 * hidden): forward and backward states concatenated.
    """

    kind = "gru-bidirectional-stack"

    def __init__(self, name, n_in, hidden, layers=2):
        self.name, self.n_in, self.hidden, self.layers = name, n_in, hidden, layers

    def _layer_in(self, i):
        return self.n_in if i == 0 else 2 * self.hidden

    def init(self, rng, dtype=np.float64):
        h = self.hidden
        p = {}
        for i in range(self.layers):
            pre = f"{self.name}.l{i}"
            p[f"{pre}.wx"] = _uniform(rng, (2, self._layer_in(i), 3 * h), h, dtype)
            p[f"{pre}.wh"] = _uniform(rng, (2, h, 3 * h), h, dtype)
            p[f"{pre}.bx"] = _uniform(rng, (2, 3 * h), h, dtype)
            p[f"{pre}.bh"] = _uniform(rng, (2, 3 * h), h, dtype)
        return p

    def forward(self, params, x):
        _check(x.ndim == 2 and x.shape[1] == self.n_in, self, f"expected input (L, {self.n_in}), got {x.shape}")
        caches = []
        out = x
        for i in range(self.layers):
            out, c = self._layer_forward(params, f"{self.name}.l{i}", out)
            caches.append(c)
        return out, caches

    def _layer_forward(self, params, pre, x):
        h_dim = self.hidden
        wx, wh = params[f"{pre}.wx"], params[f"{pre}.wh"]
        bx, bh = params[f"{pre}.bx"], params[f"{pre}.bh"]
        n = x.shape[0]
        xs = np.stack([x, x[::-1]])  # (2, L, in)
        gx = xs @ wx + bx[:, None, :]  # (2, L, 3H)
        wh_rz, wh_n = wh[:, :, :2 * h_dim], wh[:, :, 2 * h_dim:]
        bh_rz, bh_n = bh[:, :2 * h_dim], bh[:, 2 * h_dim:]
        h = np.zeros((2, h_dim), dtype=x.dtype)
        hs = np.empty((2, n, h_dim), dtype=x.dtype)
        steps = []
        for t in range(n):
            a_rz = gx[:, t, :2 * h_dim] + np.matmul(h[:, None, :], wh_rz)[:, 0] + bh_rz
            rz = 1.0 / (1.0 + np.exp(-a_rz))
            r, z = rz[:, :h_dim], rz[:, h_dim:]
            rh = r * h
            cand = np.tanh(gx[:, t, 2 * h_dim:] + np.matmul(rh[:, None, :], wh_n)[:, 0] + bh_n)
            h_new = (1.0 - z) * cand + z * h
            steps.append((h, r, z, rh, cand))
            hs[:, t] = h_new
            h = h_new
        out = np.concatenate([hs[0], hs[1][::-1]], axis=1)
        return out, (xs, steps)

    def backward(self, params, caches, dy, grads):
        d = dy
        for i in reversed(range(self.layers)):
            d = self._layer_backward(params, f"{self.name}.l{i}", caches[i], d, grads)
        return d

    def _layer_backward(self, params, pre, cache, dy, grads):
        xs, steps = cache
        h_dim = self.hidden
        wx, wh = params[f"{pre}.wx"], params[f"{pre}.wh"]
        wh_rz, wh_n = wh[:, :, :2 * h_dim], wh[:, :, 2 * h_dim:]
        n = xs.shape[1]
        dhs = np.stack([dy[:, :h_dim], dy[::-1, h_dim:]])  # (2, L, H) in each direction's time order
        dgx = np.empty((2, n, 3 * h_dim), dtype=dy.dtype)
        dwh = np.zeros_like(wh)
        dbh = np.zeros((2, 3 * h_dim), dtype=dy.dtype)
        dh_next = np.zeros((2, h_dim), dtype=dy.dtype)
        for t in reversed(range(n)):
            h_prev, r, z, rh, cand = steps[t]
            dh = dhs[:, t] + dh_next
            da_n = dh * (1.0 - z) * (1.0 - cand * cand)
            dz = dh * (h_prev - cand)
            dh_prev = dh * z
            drh = np.matmul(da_n[:, None, :], np.swapaxes(wh_n, 1, 2))[:, 0]
            dwh[:, :, 2 * h_dim:] += rh[:, :, None] * da_n[:, None, :]
            dh_prev += drh * r
            da_r = drh * h_prev * r * (1.0 - r)
            da_z = dz * z * (1.0 - z)
            da_rz = np.concatenate([da_r, da_z], axis=1)
            dwh[:, :, :2 * h_dim] += h_prev[:, :, None] * da_rz[:, None, :]
            dh_prev += np.matmul(da_rz[:, None, :], np.swapaxes(wh_rz, 1, 2))[:, 0]
            dgx[:, t, :2 * h_dim] = da_rz
            dgx[:, t, 2 * h_dim:] = da_n
            dbh[:, :2 * h_dim] += da_rz
            dbh[:, 2 * h_dim:] += da_n
            dh_next = dh_prev
        grads[f"{pre}.wh"] += dwh
        grads[f"{pre}.bh"] += dbh
        grads[f"{pre}.bx"] += dgx.sum(axis=1)
        grads[f"{pre}.wx"] += np.matmul(np.swapaxes(xs, 1, 2), dgx)
        dxs = np.matmul(dgx, np.swapaxes(wx, 1, 2))
        return dxs[0] + dxs[1][::-1]


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    dims: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        for k, v in self.dims.items():
            if isinstance(v, int) and v <= 0:
                raise ShapeError(f"{self.kind}: dimension {k}={v} must be positive")

    def build(self, name="layer"):
        d = self.dims
        if self.kind == "linear":
            return Linear(name, d["n_in"], d["n_out"])
        if self.kind == "bilinear":
            return Bilinear(name, d["n_x"], d["n_a"], d["n_out"])
        if self.kind == "conv1d":
            return Conv1d(name, d["c_in"], d["c_out"], d["kernel"], d.get("padding", "valid"))
        if self.kind == "deconv1d":
            return Deconv1d(name, d["c_in"], d["c_out"], d["kernel"], d.get("padding", "valid"))
        if self.kind == "gru-bidirectional-stack":
            return BiGRUStack(name, d["n_in"], d["hidden"], d.get("layers", 2))
        return Embedding(name, d["n_rows"], d["dim"])


def layer_forward(spec, params, x, name="layer"):
    """One-shot forward through a layer described by ``spec``."""
    y, _ = spec.build(name).forward(params, x)
    return y


# ---------------------------------------------------------------- functions


def tanh_backward(y, dy):
    return dy * (1.0 - y * y)


def softmax(logits, axis=-1):
    logits = np.asarray(logits)
    if logits.size == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(logits - logits.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _check_dist(p, name):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D distribution")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(f"{name} is not a probability distribution (sum={p.sum():.8f})")
    return p


def kl_divergence(p, q):
    """KL(p || q) with 0 log 0 = 0 and q clamped at 1e-12."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    p, q = _check_dist(p, "p"), _check_dist(q, "q")
    nz = p > 0
    return float(max(0.0, np.sum(p[nz] * (np.log(p[nz]) - np.log(np.maximum(q[nz], 1e-12))))))


def entropy(p):
    p = _check_dist(p, "p")
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz])))


# ---------------------------------------------------------------- optimisation


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_global_norm(grads, max_norm):
    """Scale all arrays jointly so their global L2 norm is at most ``max_norm``."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        return {k: (g * scale).astype(g.dtype, copy=False) for k, g in grads.items()}, norm
    return grads, norm


class Adam:
    """Adam with bias correction; updates parameter arrays in place.

    ``lr_map`` optionally overrides the learning rate for parameters whose
    name starts with a given prefix.
    """

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8, lr_map=None):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.lr_map = dict(lr_map or {})
        self.step = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def _lr(self, name):
        for prefix, lr in self.lr_map.items():
            if name.startswith(prefix):
                return lr
        return self.lr

    def update(self, params, grads):
        """Apply one descent step.  Returns False if the step was skipped."""
        for k, g in grads.items():
            if g.shape != params[k].shape:
                raise ShapeError(f"gradient {k} has shape {g.shape}, parameter has {params[k].shape}")
        if not all(np.all(np.isfinite(g)) for g in grads.values()):
            log.warning("non-finite gradient at adam step %d; update skipped", self.step + 1)
            return False
        self.step += 1
        t = self.step
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for k, g in grads.items():
            m, v, p = self.m[k], self.v[k], params[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            lr = self._lr(k)
            if lr == 0.0:
                continue
            p -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype, copy=False)
        return True


def adam_step(params, grads, state):
    """Functional wrapper around :meth:`Adam.update`."""
    state.update(params, grads)
    return params, state


def zeros_like(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


# ---------------------------------------------------------------- verification


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    worst: tuple
    tolerance: float

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


def finite_diff_check(loss_fn, params, tolerance=1e-4, n_samples=100, h=1e-5, seed=0, fd_dtype=np.longdouble):
    """Compare analytic gradients with central differences.

    ``loss_fn(params)`` must return ``(loss, grads)``.  Up to ``n_samples``
    coordinates are drawn at random (every coordinate when there are fewer).
    The analytic gradient is taken at the given precision; the perturbed
    losses are evaluated on a ``fd_dtype`` copy of the parameters, so the
    loss function should keep its result as a numpy scalar.  Failures are
    reported, never raised.
    """
    _, analytic = loss_fn(params)
    hp = {k: np.array(v, dtype=fd_dtype) for k, v in params.items()}
    coords = [(k, i) for k, v in params.items() for i in range(v.size)]
    rng = np.random.default_rng(seed)
    if len(coords) > n_samples:
        pick = rng.choice(len(coords), size=n_samples, replace=False)
        coords = [coords[j] for j in sorted(pick)]
    worst, worst_err = None, 0.0
    for name, i in coords:
        flat = hp[name].reshape(-1)
        orig = flat[i]
        flat[i] = orig + h
        lp, _ = loss_fn(hp)
        flat[i] = orig - h
        lm, _ = loss_fn(hp)
        flat[i] = orig
        fd = float((lp - lm) / (2 * h))
        a = float(analytic[name].reshape(-1)[i])
        err = abs(a - fd) / max(1e-8, abs(a) + abs(fd))
        if err > worst_err or worst is None:
            worst, worst_err = (name, i, a, fd), err
    return GradCheckReport(worst_err, len(coords), worst, tolerance)
