"""Radial-basis networks written from scratch on numpy.

Three evaluators are provided, each following its own width convention:

* :func:`feedforward_nar` - one hidden layer of logistic or Gaussian units,
  the nonlinear autoregressive predictor.
* :func:`rbf_eval` - a stateless Gaussian RBF network, ``exp(-|y - c|^2 / (2 s))``.
* :func:`rrbfn_step` - the recurrent RBF network: sigmoidal input neurons with
  self-connections ``x_j(t) = sigmoid(u_j(t) + r_j x_j(t-1))`` feeding one or
  more Gaussian layers ``exp(-|x - c|^2 / s)`` and a linear output.

Training is full-batch gradient descent on centers, widths and the output
layer; the recurrent weights stay at their initial values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

LOGISTIC = "logistic-sigmoid"
GAUSSIAN = "gaussian"
LINEAR = "linear"
ACTIVATIONS = (LOGISTIC, GAUSSIAN, LINEAR)

FORMAT_TAG = "RRBFN-MODEL"
FORMAT_VERSION = 1

MIN_WIDTH = 1e-4


class ShapeError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def activate(kind: str, z):
    if kind == LOGISTIC:
        return sigmoid(z)
    if kind == GAUSSIAN:
        return np.exp(-np.square(z))
    if kind == LINEAR:
        return z
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


# -- feed-forward NAR -------------------------------------------------------


@dataclass
class FeedForwardModel:
    input_weights: np.ndarray  # (n, Q), w_ij
    hidden_bias: np.ndarray  # (Q,), w_0j
    output_weights: np.ndarray  # (Q,), w_j
    output_bias: float = 0.0  # w_0
    activation: str = LOGISTIC

    def __post_init__(self):
        self.input_weights = np.atleast_2d(np.asarray(self.input_weights, dtype=np.float64))
        n, q = self.input_weights.shape
        self.hidden_bias = np.asarray(self.hidden_bias, dtype=np.float64).reshape(-1)
        self.output_weights = np.asarray(self.output_weights, dtype=np.float64).reshape(-1)
        if self.hidden_bias.shape != (q,) or self.output_weights.shape != (q,):
            raise ShapeError(f"hidden bias and output weights must have length Q={q}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_inputs(self) -> int:
        return self.input_weights.shape[0]


def feedforward_nar(model: FeedForwardModel, history: Sequence[float]) -> float:
    """One-step prediction from ``history = (y(t-1), ..., y(t-n))`` with e(t) = 0."""
    y = np.asarray(history, dtype=np.float64)
    if y.shape != (model.n_inputs,):
        raise ShapeError(f"expected {model.n_inputs} lagged values, got shape {y.shape}")
    hidden = activate(model.activation, model.hidden_bias + y @ model.input_weights)
    return float(model.output_bias + hidden @ model.output_weights)


# -- stateless RBF -------------------------------------------------------------


def rbf_eval(centers, widths, weights, x) -> float:
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    widths = np.asarray(widths, dtype=np.float64).reshape(-1)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if np.any(widths <= 0):
        raise ValueError("RBF widths must be positive")
    if centers.shape != (widths.size, x.size) or weights.size != widths.size:
        raise ShapeError(f"inconsistent shapes: centers {centers.shape}, widths {widths.shape}, weights {weights.shape}, input {x.shape}")
    d2 = np.sum(np.square(x[None, :] - centers), axis=1)
    return float(weights @ np.exp(-d2 / (2.0 * widths)))


# -- recurrent RBF network ----------------------------------------------------------


@dataclass(frozen=True)
class RrbfnConfig:
    input_size: int = 16
    hidden_sizes: tuple[int, ...] = (8, 8)
    recurrent_std: float = 0.5
    width_scale: float = 1.0
    output_init_std: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_size < 1 or not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ShapeError("layer sizes must be positive and at least one hidden layer is required")
        if self.width_scale <= 0:
            raise ValueError("width_scale must be positive")


DESK_CONFIG = RrbfnConfig(input_size=16, hidden_sizes=(8, 8))
LARGE_CONFIG = RrbfnConfig(input_size=250, hidden_sizes=(200, 200))


@dataclass
class RrbfnModel:
    recurrent_weights: np.ndarray  # (m,), r_j
    centers: list[np.ndarray]  # per hidden layer, (H_l, H_{l-1})
    widths: list[np.ndarray]  # per hidden layer, (H_l,)
    output_weights: np.ndarray  # (H_L,)
    output_bias: float = 0.0
    seed: int | None = None
    input_state: np.ndarray = field(default=None)

    def __post_init__(self):
        self.recurrent_weights = np.asarray(self.recurrent_weights, dtype=np.float64).reshape(-1)
        self.centers = [np.atleast_2d(np.asarray(c, dtype=np.float64)) for c in self.centers]
        self.widths = [np.asarray(w, dtype=np.float64).reshape(-1) for w in self.widths]
        self.output_weights = np.asarray(self.output_weights, dtype=np.float64).reshape(-1)
        self.output_bias = float(self.output_bias)
        if len(self.centers) != len(self.widths) or not self.centers:
            raise ShapeError("need matching, non-empty lists of centers and widths")
        prev = self.input_size
        for c, w in zip(self.centers, self.widths):
            if c.shape[1] != prev or w.shape != (c.shape[0],):
                raise ShapeError(f"layer shapes do not chain: centers {c.shape}, widths {w.shape}, fan-in {prev}")
            prev = c.shape[0]
        if self.output_weights.shape != (prev,):
            raise ShapeError(f"output weights must have length {prev}")
        if np.any(np.abs(self.recurrent_weights) > 1.0):
            raise ValueError("recurrent weights must lie in [-1, 1]")
        if any(np.any(w <= 0) for w in self.widths):
            raise ValueError("widths must be positive")
        if self.input_state is None:
            self.input_state = np.zeros(self.input_size)

    @property
    def input_size(self) -> int:
        return self.recurrent_weights.size

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[0] for c in self.centers)

    def parameters(self) -> list[np.ndarray]:
        """Trainable arrays in a fixed order; the scalar ``output_bias`` is handled separately."""
        out = []
        for c, w in zip(self.centers, self.widths):
            out += [c, w]
        return out + [self.output_weights]

    def copy(self) -> "RrbfnModel":
        return RrbfnModel(
            recurrent_weights=self.recurrent_weights.copy(),
            centers=[c.copy() for c in self.centers],
            widths=[w.copy() for w in self.widths],
            output_weights=self.output_weights.copy(),
            output_bias=self.output_bias,
            seed=self.seed,
            input_state=self.input_state.copy(),
        )

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()] + [[self.output_bias]])

    def set_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for p in self.parameters():
            p[...] = flat[pos : pos + p.size].reshape(p.shape)
            pos += p.size
        self.output_bias = float(flat[pos])


def init_model(config: RrbfnConfig, seed: int) -> RrbfnModel:
    """Random model: truncated-normal recurrent weights, uniform centers, constant widths."""
    rng = np.random.default_rng(seed)
    r = rng.normal(0.0, config.recurrent_std, size=config.input_size)
    bad = np.abs(r) > 1.0
    while bad.any():
        r[bad] = rng.normal(0.0, config.recurrent_std, size=int(bad.sum()))
        bad = np.abs(r) > 1.0
    centers, widths = [], []
    fan_in = config.input_size
    for h in config.hidden_sizes:
        centers.append(rng.uniform(0.0, 1.0, size=(h, fan_in)))
        # mean squared distance between two U(0,1) vectors is fan_in / 6
        widths.append(np.full(h, config.width_scale * fan_in / 6.0))
        fan_in = h
    w = rng.normal(0.0, config.output_init_std, size=fan_in)
    return RrbfnModel(recurrent_weights=r, centers=centers, widths=widths, output_weights=w, output_bias=0.0, seed=seed)


def reset_state(model: RrbfnModel) -> RrbfnModel:
    model.input_state = np.zeros(model.input_size)
    return model


def _hidden_forward(model: RrbfnModel, x: np.ndarray, dists: list | None = None) -> list[np.ndarray]:
    """Layer activations for a batch ``x`` of shape (S, m); element 0 is ``x`` itself.

    Squared distances to the centers are appended to ``dists`` when given.
    """
    acts = [x]
    a = x
    for c, w in zip(model.centers, model.widths):
        d2 = np.sum(a * a, axis=1)[:, None] - 2.0 * a @ c.T + np.sum(c * c, axis=1)[None, :]
        np.maximum(d2, 0.0, out=d2)
        if dists is not None:
            dists.append(d2)
        a = np.exp(-d2 / w[None, :])
        acts.append(a)
    return acts


def rrbfn_step(model: RrbfnModel, inputs) -> float:
    """Advance the input neurons one step and return the network output."""
    u = np.asarray(inputs, dtype=np.float64).reshape(-1)
    if u.size != model.input_size:
        raise ShapeError(f"expected {model.input_size} inputs, got {u.size}")
    model.input_state = sigmoid(u + model.recurrent_weights * model.input_state)
    acts = _hidden_forward(model, model.input_state[None, :])
    return float(acts[-1][0] @ model.output_weights + model.output_bias)


def input_states(model: RrbfnModel, sequences) -> np.ndarray:
    """Final input-neuron state for each sequence, starting from a reset state.

    ``sequences`` has shape (S, L, m); (S, m) is read as length-1 sequences.
    """
    seq = np.asarray(sequences, dtype=np.float64)
    if seq.ndim == 2:
        seq = seq[:, None, :]
    if seq.ndim != 3 or seq.shape[2] != model.input_size:
        raise ShapeError(f"sequences must have shape (S, L, {model.input_size}), got {seq.shape}")
    x = np.zeros((seq.shape[0], model.input_size))
    r = model.recurrent_weights[None, :]
    for t in range(seq.shape[1]):
        x = sigmoid(seq[:, t, :] + r * x)
    return x


def predict(model: RrbfnModel, sequences) -> np.ndarray:
    """Batch outputs, one per sequence, each evaluated from a reset state. Does not touch ``model.input_state``."""
    acts = _hidden_forward(model, input_states(model, sequences))
    return acts[-1] @ model.output_weights + model.output_bias


# -- training -------------------------------------------------------------


@dataclass
class TrainingSet:
    inputs: np.ndarray  # (S, L, m)
    targets: np.ndarray  # (S,)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim == 2:
            self.inputs = self.inputs[:, None, :]
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if self.inputs.ndim != 3 or self.inputs.shape[0] == 0:
            raise ShapeError("training set must be a non-empty (S, L, m) array")
        if self.targets.shape[0] != self.inputs.shape[0]:
            raise ShapeError("one target per sample is required")

    def __len__(self):
        return self.targets.shape[0]

    def subset(self, idx) -> "TrainingSet":
        return TrainingSet(self.inputs[idx], self.targets[idx])


@dataclass
class TrainReport:
    losses: list[float]
    residuals: np.ndarray

    @property
    def epochs(self) -> int:
        return len(self.losses)


def _loss_and_grads(model: RrbfnModel, x: np.ndarray, targets: np.ndarray):
    """Mean squared error and its gradient for every trainable array (same order as ``parameters()``)."""
    dists: list[np.ndarray] = []
    acts = _hidden_forward(model, x, dists)
    y = acts[-1] @ model.output_weights + model.output_bias
    err = y - targets
    s = targets.shape[0]
    loss = float(np.mean(err * err))
    dy = 2.0 * err / s
    g_w = acts[-1].T @ dy
    g_b = float(dy.sum())
    upstream = dy[:, None] * model.output_weights[None, :]  # dL/dh for the last layer
    layer_grads = []
    for l in range(len(model.centers) - 1, -1, -1):
        h, a = acts[l + 1], acts[l]
        c, w = model.centers[l], model.widths[l]
        g = upstream * h  # (S, H)
        g_width = np.sum(g * dists[l], axis=0) / (w * w)
        gw = g / w[None, :]
        # d/dc of exp(-|a - c|^2 / w) = h * 2 (a - c) / w
        g_centers = 2.0 * (gw.T @ a - gw.sum(axis=0)[:, None] * c)
        layer_grads.append((g_centers, g_width))
        if l > 0:
            upstream = -2.0 * (a * gw.sum(axis=1)[:, None] - gw @ c)
    grads = []
    for gc, gs in reversed(layer_grads):
        grads += [gc, gs]
    return loss, grads + [g_w], g_b, err


def _flat_grad(model: RrbfnModel, x: np.ndarray, targets: np.ndarray) -> np.ndarray:
    _, grads, g_b, _ = _loss_and_grads(model, x, targets)
    return np.concatenate([g.ravel() for g in grads] + [[g_b]])


def mse(model: RrbfnModel, data: TrainingSet) -> float:
    err = predict(model, data.inputs) - data.targets
    return float(np.mean(err * err))


def train_gradient_descent(
    model: RrbfnModel,
    data: TrainingSet,
    epochs: int,
    step_size: float,
    adaptive: bool = True,
    grow: float = 1.05,
    shrink: float = 0.5,
    max_halvings: int = 30,
) -> TrainReport:
    """Full-batch gradient descent; ``losses[k]`` is the loss before the k-th update.

    With ``adaptive`` (bold driver) a step that would raise the loss is retried
    at ``shrink`` times the step, and every accepted step grows the next one by
    ``grow``, so the recorded losses never increase. Without it the step is fixed.
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if step_size <= 0:
        raise ValueError("step_size must be > 0")
    x = input_states(model, data.inputs)
    losses: list[float] = []
    eta = float(step_size)
    loss, grads, g_b, _ = _loss_and_grads(model, x, data.targets) if epochs else (0.0, [], 0.0, None)
    for _ in range(int(epochs)):
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads) or not np.isfinite(g_b):
            raise TrainingError(f"training diverged after {len(losses)} epochs (loss={loss})")
        losses.append(loss)
        theta = model.get_flat()
        step = np.concatenate([g.ravel() for g in grads] + [[g_b]])
        for _attempt in range(max_halvings + 1):
            _apply_step(model, theta, step, eta)
            new_loss, new_grads, new_gb, _ = _loss_and_grads(model, x, data.targets)
            if not adaptive or (np.isfinite(new_loss) and new_loss <= loss):
                break
            eta *= shrink
        else:
            model.set_flat(theta)
            new_loss, new_grads, new_gb, _ = loss, grads, g_b, None
        if adaptive:
            eta *= grow
        loss, grads, g_b = new_loss, new_grads, new_gb
    reset_state(model)
    residuals = data.targets - predict(model, data.inputs) if epochs else np.empty(0)
    if epochs and not np.all(np.isfinite(residuals)):
        raise TrainingError("training produced non-finite outputs")
    return TrainReport(losses=losses, residuals=residuals)


def _apply_step(model: RrbfnModel, theta: np.ndarray, step: np.ndarray, eta: float) -> None:
    model.set_flat(theta - eta * step)
    for w in model.widths:
        np.maximum(w, MIN_WIDTH, out=w)


PARAM_GROUPS = ("centers", "widths", "output")


def gradient_check(model: RrbfnModel, data: TrainingSet, h: float = 1e-5, groups: Sequence[str] = PARAM_GROUPS) -> float:
    """Largest relative gap between backprop and central differences over the selected parameters."""
    if h <= 0:
        raise ValueError("h must be > 0")
    unknown = set(groups) - set(PARAM_GROUPS)
    if unknown:
        raise ValueError(f"unknown parameter groups {sorted(unknown)}")
    probe = model.copy()
    x = input_states(probe, data.inputs)
    analytic = _flat_grad(probe, x, data.targets)

    mask = []
    for c, w in zip(probe.centers, probe.widths):
        mask += [np.full(c.size, "centers" in groups), np.full(w.size, "widths" in groups)]
    mask += [np.full(probe.output_weights.size + 1, "output" in groups)]
    mask = np.concatenate(mask)

    base = probe.get_flat()
    worst = 0.0
    for i in np.flatnonzero(mask):
        theta = base.copy()
        theta[i] = base[i] + h
        probe.set_flat(theta)
        up = float(np.mean(np.square(_hidden_forward(probe, x)[-1] @ probe.output_weights + probe.output_bias - data.targets)))
        theta[i] = base[i] - h
        probe.set_flat(theta)
        down = float(np.mean(np.square(_hidden_forward(probe, x)[-1] @ probe.output_weights + probe.output_bias - data.targets)))
        numeric = (up - down) / (2.0 * h)
        rel = abs(analytic[i] - numeric) / max(1e-12, abs(analytic[i]) + abs(numeric))
        worst = max(worst, rel)
    probe.set_flat(base)
    return worst


# -- persistence ---------------------------------------------------------------


def _fmt(values: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def write_model(model: RrbfnModel, fh: TextIO, meta: dict | None = None) -> None:
    """Plain-text model: a header line, optional ``meta`` lines, then one labeled block per array."""
    acts = ",".join([LOGISTIC] + [GAUSSIAN] * len(model.centers) + [LINEAR])
    hidden = ",".join(str(h) for h in model.hidden_sizes)
    fh.write(
        f"{FORMAT_TAG} v{FORMAT_VERSION} input={model.input_size} hidden={hidden} output=1 "
        f"activations={acts} seed={model.seed if model.seed is not None else 'none'}\n"
    )
    for key, value in (meta or {}).items():
        fh.write(f"meta {key}={value}\n")
    blocks = [("recurrent_weights", model.recurrent_weights)]
    for l, (c, w) in enumerate(zip(model.centers, model.widths), start=1):
        blocks += [(f"centers_{l}", c), (f"widths_{l}", w)]
    blocks += [("output_weights", model.output_weights), ("output_bias", np.array([model.output_bias]))]
    for name, arr in blocks:
        dims = " ".join(str(d) for d in arr.shape)
        fh.write(f"{name} {dims}\n{_fmt(arr)}\n")


def read_model(fh: TextIO) -> tuple[RrbfnModel, dict]:
    lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith(FORMAT_TAG):
        raise ModelFormatError("missing model header")
    fields = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
    version = lines[0].split()[1]
    if version != f"v{FORMAT_VERSION}":
        raise ModelFormatError(f"unsupported model format version {version}")
    try:
        seed = None if fields["seed"] == "none" else int(fields["seed"])
        n_hidden = len(fields["hidden"].split(","))
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"bad header: {lines[0]!r}") from exc

    meta = {}
    i = 1
    while i < len(lines) and lines[i].startswith("meta "):
        key, value = lines[i][5:].split("=", 1)
        meta[key] = value
        i += 1
    arrays = {}
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        head = lines[i].split()
        try:
            name, dims = head[0], tuple(int(d) for d in head[1:])
            values = np.array([float(v) for v in lines[i + 1].split()], dtype=np.float64)
        except (IndexError, ValueError) as exc:
            raise ModelFormatError(f"bad block near line {i + 1}") from exc
        if values.size != int(np.prod(dims)):
            raise ModelFormatError(f"block {name}: expected {int(np.prod(dims))} values, got {values.size}")
        arrays[name] = values.reshape(dims)
        i += 2
    try:
        model = RrbfnModel(
            recurrent_weights=arrays["recurrent_weights"],
            centers=[arrays[f"centers_{l}"] for l in range(1, n_hidden + 1)],
            widths=[arrays[f"widths_{l}"] for l in range(1, n_hidden + 1)],
            output_weights=arrays["output_weights"],
            output_bias=float(arrays["output_bias"][0]),
            seed=seed,
        )
    except KeyError as exc:
        raise ModelFormatError(f"missing block {exc}") from exc
    return model, meta


def save_model(model: RrbfnModel, path: str | Path, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_model(model, fh, meta)


def load_model(path: str | Path) -> tuple[RrbfnModel, dict]:
    with open(path, encoding="utf-8") as fh:
        return read_model(fh)
