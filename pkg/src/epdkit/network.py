"""Feed-forward binary classifier trained under the divergence loss.

Small tanh networks with a two-logit softmax head; training is full-batch
gradient descent with step halving on non-descent, so runs are deterministic
given the seed.  Architecture selection scores each candidate under MLIC,
DPDIC, and EPDIC and consolidates the per-criterion rankings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .criteria import CriterionKind, CriterionReport
from .divergence import ALPHA_EPS, GAMMA_EPS, TuningTriple
from .regression import EstimatorKind, _effective_triple
from .subsets import ConsolidatedRanking, consolidate

LOGIT_CLAMP = 30.0

CRITERION_ESTIMATOR = {
    CriterionKind.MLIC: EstimatorKind.MLE,
    CriterionKind.DPDIC: EstimatorKind.DPDE,
    CriterionKind.EPDIC: EstimatorKind.EPDE,
}


class DivergentLossError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class ArchitectureSpec:
    hidden_layers: int
    hidden_width: int
    input_dim: int
    label: str

    def layer_sizes(self):
        sizes = [self.input_dim]
        sizes += [self.hidden_width] * self.hidden_layers
        sizes.append(2)
        return sizes


def architecture_grid(input_dim: int) -> list:
    """The four candidate architectures: (layers, width) in {1,2} x {2,3}."""
    return [
        ArchitectureSpec(1, 2, input_dim, "A1"),
        ArchitectureSpec(1, 3, input_dim, "A2"),
        ArchitectureSpec(2, 2, input_dim, "A3"),
        ArchitectureSpec(2, 3, input_dim, "A4"),
    ]


@dataclass
class NetworkParams:
    weights: list   # list of (W, b) with W shaped (out, in)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b.ravel()])
                               for W, b in self.weights])

    @property
    def size(self) -> int:
        return sum(W.size + b.size for W, b in self.weights)


@dataclass
class ClassificationData:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("features must be N x d with N labels")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be binary 0/1")
        self.features = X
        self.labels = y.astype(int)

    @property
    def n(self) -> int:
        return self.features.shape[0]


def init_params(arch: ArchitectureSpec, seed: int) -> NetworkParams:
    rng = np.random.default_rng(seed)
    weights = []
    sizes = arch.layer_sizes()
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = 1.0 / math.sqrt(fan_in)
        W = rng.uniform(-0.5, 0.5, size=(fan_out, fan_in)) * scale
        b = rng.uniform(-0.5, 0.5, size=fan_out) * scale
        weights.append((W, b))
    return NetworkParams(weights=weights)


def _forward_cached(params: NetworkParams, X: np.ndarray):
    """Return activations per layer plus raw output logits (N x 2)."""
    acts = [np.asarray(X, dtype=float)]
    a = acts[0]
    for W, b in params.weights[:-1]:
        a = np.tanh(a @ W.T + b)
        acts.append(a)
    W, b = params.weights[-1]
    logits = a @ W.T + b
    return acts, logits


def forward(params: NetworkParams, x) -> np.ndarray:
    """Failure probability p in (0, 1); logits clamped at +/- 30."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, logits = _forward_cached(params, x)
    z = np.clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP)
    s = z[:, 1] - z[:, 0]
    p = 1.0 / (1.0 + np.exp(-s))
    return p


def _exp_bracket_scaled(alpha, p):
    if abs(alpha) < ALPHA_EPS:
        return 0.5 * p * p + alpha * p ** 3 / 3.0
    ap = alpha * p
    return (np.exp(ap) * (ap - 1.0) + 1.0) / (alpha * alpha)


def _expm1_ratio(alpha, f):
    if abs(alpha) < ALPHA_EPS:
        return f * (1.0 + 0.5 * alpha * f)
    return np.expm1(alpha * f) / alpha


def _loss_values(p, y, t: TuningTriple):
    """Samplewise divergence over the implied Bernoulli densities."""
    a, b, g = t.alpha, t.beta, t.gamma
    q = 1.0 - p
    model = 0.0
    if b > 0.0:
        model = b * (_exp_bracket_scaled(a, p) + _exp_bracket_scaled(a, q))
    if b < 1.0:
        model = model + (1.0 - b) * (p ** (1.0 + g) + q ** (1.0 + g))
    f = np.where(y == 1, p, q)
    logf = np.log(f)
    if g < GAMMA_EPS:
        poly = 1.0 + logf
    else:
        poly = ((g + 1.0) * np.exp(g * logf) - 1.0) / g
    data = b * _expm1_ratio(a, f) + (1.0 - b) * poly
    return model - data


def _dloss_ds(p, y, t: TuningTriple):
    """Derivative of the samplewise loss w.r.t. the logit difference.

    Grouped so that the f^{gamma-1} singularity cancels against p(1-p).
    """
    a, b, g = t.alpha, t.beta, t.gamma
    q = 1.0 - p
    pq = p * q
    model = 0.0
    if b > 0.0:
        model = b * (p * np.exp(a * p) - q * np.exp(a * q))
    if b < 1.0:
        model = model + (1.0 - b) * (1.0 + g) * (p ** g - q ** g)
    model = model * pq

    def w(f):
        out = (1.0 - b) * (1.0 + g) * f ** g
        if b > 0.0:
            out = out + b * f * np.exp(a * f)
        return out

    data = np.where(y == 1, w(p) * q, -w(q) * p)
    return model - data


def epd_loss(params: NetworkParams, data: ClassificationData,
             t: TuningTriple) -> float:
    p = forward(params, data.features)
    return float(np.mean(_loss_values(p, data.labels, t)))


def nll_loss(params: NetworkParams, data: ClassificationData) -> float:
    p = forward(params, data.features)
    f = np.where(data.labels == 1, p, 1.0 - p)
    return float(-np.mean(np.log(f)))


def _loss_and_seed(params: NetworkParams, data: ClassificationData,
                   t: TuningTriple, kind: EstimatorKind):
    """Loss value and per-sample d loss / d s at the current parameters."""
    p = forward(params, data.features)
    y = data.labels
    if kind is EstimatorKind.MLE:
        f = np.where(y == 1, p, 1.0 - p)
        loss = float(-np.mean(np.log(f)))
        dls = p - y
    else:
        te = _effective_triple(t, kind)
        loss = float(np.mean(_loss_values(p, y, te)))
        dls = _dloss_ds(p, y, te)
    return loss, dls


def _backward(params: NetworkParams, acts, dz):
    """Mean parameter gradient from the output seed dz = d c / d logits (N x 2)."""
    n = dz.shape[0]
    grads = [None] * len(params.weights)
    delta = dz
    for layer in range(len(params.weights) - 1, -1, -1):
        W, _ = params.weights[layer]
        a_prev = acts[layer]
        gW = delta.T @ a_prev / n
        gb = delta.mean(axis=0)
        grads[layer] = (gW, gb)
        if layer > 0:
            delta = (delta @ W) * (1.0 - acts[layer] ** 2)
    return grads


def _loss_gradient(params: NetworkParams, data: ClassificationData,
                   t: TuningTriple, kind: EstimatorKind):
    acts, _ = _forward_cached(params, data.features)
    loss, dls = _loss_and_seed(params, data, t, kind)
    dz = np.column_stack([-dls, dls])
    return loss, _backward(params, acts, dz)


@dataclass
class TrainOptions:
    seed: int = 0
    max_epochs: int = 500
    step_size: float = 0.05
    grad_tol: float = 1e-7


@dataclass
class TrainReport:
    epochs: int
    final_loss: float
    converged: bool
    loss_history: list = field(default_factory=list, repr=False)


def train(arch: ArchitectureSpec, data: ClassificationData, t: TuningTriple,
          kind: EstimatorKind,
          opts: TrainOptions | None = None) -> tuple[NetworkParams, TrainReport]:
    """Full-batch monotone gradient descent from a seeded initialization."""
    opts = opts or TrainOptions()
    params = init_params(arch, opts.seed)
    loss, grads = _loss_gradient(params, data, t, kind)
    if not math.isfinite(loss):
        raise DivergentLossError("non-finite loss at initialization")
    step = opts.step_size
    history = [loss]
    epoch = 0
    converged = False
    while epoch < opts.max_epochs:
        gnorm = max(float(np.max(np.abs(gW))) for gW, _ in grads)
        gnorm = max(gnorm, max(float(np.max(np.abs(gb))) for _, gb in grads))
        if gnorm <= opts.grad_tol:
            converged = True
            break
        accepted = False
        while step >= 1e-12:
            trial = NetworkParams(weights=[
                (W - step * gW, b - step * gb)
                for (W, b), (gW, gb) in zip(params.weights, grads)])
            new_loss, new_grads = _loss_gradient(trial, data, t, kind)
            if math.isfinite(new_loss) and new_loss < loss:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        params, loss, grads = trial, new_loss, new_grads
        history.append(loss)
        step = min(step * 1.1, 1.0)
        epoch += 1
    if not math.isfinite(loss):
        raise DivergentLossError("training diverged")
    return params, TrainReport(epochs=epoch, final_loss=loss,
                               converged=converged, loss_history=history)


def _per_sample_grads(params: NetworkParams, acts, dseed):
    """N x q matrix of per-sample gradients for a scalar with logit seed dseed."""
    n = dseed.shape[0]
    pieces = []
    delta = np.column_stack([-dseed, dseed])
    stack = []
    for layer in range(len(params.weights) - 1, -1, -1):
        W, _ = params.weights[layer]
        a_prev = acts[layer]
        gW = delta[:, :, None] * a_prev[:, None, :]
        stack.append((layer, gW.reshape(n, -1), delta.copy()))
        if layer > 0:
            delta = (delta @ W) * (1.0 - acts[layer] ** 2)
    for layer in range(len(params.weights)):
        entry = next(e for e in stack if e[0] == layer)
        pieces.append(entry[1])
        pieces.append(entry[2])
    return np.concatenate(pieces, axis=1)


def sandwich_penalty(params: NetworkParams, data: ClassificationData,
                     t: TuningTriple, kind: EstimatorKind,
                     ridge: float = 1e-8) -> float:
    """tr(Omega Psi^{-1}) from per-sample gradients.

    Omega is the mean outer product of per-sample loss gradients; Psi is the
    Gauss-Newton curvature surrogate sum h_i J_i J_i^T over the logit
    difference, with h_i the (clipped) second derivative of the samplewise
    loss along the logit.  A small ridge guards the routinely near-singular
    network curvature.
    """
    acts, logits = _forward_cached(params, data.features)
    z = np.clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP)
    s = z[:, 1] - z[:, 0]
    p = 1.0 / (1.0 + np.exp(-s))
    y = data.labels
    if kind is EstimatorKind.MLE:
        dls = p - y
        h = p * (1.0 - p)
    else:
        te = _effective_triple(t, kind)
        dls = _dloss_ds(p, y, te)
        ds = 1e-4
        p_hi = 1.0 / (1.0 + np.exp(-(s + ds)))
        p_lo = 1.0 / (1.0 + np.exp(-(s - ds)))
        h = (_dloss_ds(p_hi, y, te) - _dloss_ds(p_lo, y, te)) / (2.0 * ds)
        h = np.maximum(h, 0.0)
    G = _per_sample_grads(params, acts, dls)
    J = _per_sample_grads(params, acts, np.ones_like(dls))
    n = data.n
    omega = G.T @ G / n
    psi = (J * h[:, None]).T @ J / n
    psi = psi + ridge * np.eye(psi.shape[0])
    return float(np.trace(np.linalg.solve(psi, omega)))


def network_criterion(params: NetworkParams, data: ClassificationData,
                      t: TuningTriple, ck: CriterionKind) -> CriterionReport:
    ek = CRITERION_ESTIMATOR[ck]
    if ek is EstimatorKind.MLE:
        fit_term = data.n * nll_loss(params, data)
    else:
        fit_term = data.n * epd_loss(params, data, _effective_triple(t, ek))
    penalty = sandwich_penalty(params, data, t, ek)
    return CriterionReport(kind=ck, fit_term=fit_term, penalty=penalty,
                           total=fit_term + penalty)


def select_architecture(data: ClassificationData,
                        t_map: dict,
                        kinds: list | None = None,
                        opts: TrainOptions | None = None,
                        top_k: int = 4) -> ConsolidatedRanking:
    """Train every architecture under every criterion's estimator and rank."""
    kinds = kinds or [CriterionKind.MLIC, CriterionKind.DPDIC,
                      CriterionKind.EPDIC]
    opts = opts or TrainOptions()
    lists = {ck: [] for ck in kinds}
    for arch in architecture_grid(data.features.shape[1]):
        for ck in kinds:
            ek = CRITERION_ESTIMATOR[ck]
            triple = t_map[ek]
            params, _ = train(arch, data, triple, ek, opts=opts)
            lists[ck].append((arch.label, network_criterion(params, data,
                                                            triple, ck)))
    for ck in kinds:
        lists[ck].sort(key=lambda e: e[1].total)
    return consolidate(lists, top_k=top_k)
