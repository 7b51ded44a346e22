"""Maximum-likelihood training with Adam, gradient checking and grid search.

The size table is fit in closed form; only the circuit logits are trained,
on the mean negative log-likelihood of canonically ordered graphs.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from sklearn.model_selection import ParameterGrid

from .canonical import canonicalize
from .circuit import RegionGraphSpec
from .exceptions import ConfigurationError, NumericalError, SchemaError
from .graph import SparseGraph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.82
    epsilon: float = 1e-8
    epochs: int = 40
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("beta1 and beta2 must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")


@dataclass
class TrainReport:
    train_nll: list[float] = field(default_factory=list)
    val_nll: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    model: object = None

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_nll", "val_nll", "seconds"])
            for e, (tr, va, s) in enumerate(zip(self.train_nll, self.val_nll, self.seconds), 1):
                w.writerow([e, repr(float(tr)), repr(float(va)), f"{s:.6f}"])


def adam_init(params):
    return {"m": [np.zeros_like(p) for p in params], "v": [np.zeros_like(p) for p in params]}


def adam_step(params, grads, state, cfg: OptimizerConfig, t: int):
    """One bias-corrected Adam update for a minimisation problem. Pure."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    b1, b2 = cfg.beta1, cfg.beta2
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_params.append(p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_params, {"m": new_m, "v": new_v}


def train_val_test_split(graphs: Sequence, seed: int = 0, ratios=(0.8, 0.1, 0.1)):
    """Seeded shuffle followed by an 80/10/10 split."""
    idx = np.random.default_rng(seed).permutation(len(graphs))
    n_train = int(round(ratios[0] * len(graphs)))
    n_valid = int(round(ratios[1] * len(graphs)))
    pick = lambda ids: [graphs[i] for i in ids]  # noqa: E731
    return pick(idx[:n_train]), pick(idx[n_train : n_train + n_valid]), pick(idx[n_train + n_valid :])


def train(model, graphs: Sequence[SparseGraph], cfg: OptimizerConfig = OptimizerConfig(), valid=None, canonical: bool = True, alpha: float = 0.0) -> TrainReport:
    if len(graphs) == 0:
        raise SchemaError("cannot train on an empty dataset")
    if canonical:
        graphs = [canonicalize(g)[0] for g in graphs]
        valid = [canonicalize(g)[0] for g in valid] if valid else valid
    model.fit_cardinality(graphs, alpha)
    X = model.encode(graphs)
    card = model._card_terms(graphs)
    if not np.all(np.isfinite(card)):
        raise NumericalError("training graph outside the fitted size support")
    circuit = model.circuit
    rng = np.random.default_rng(cfg.seed)
    state = adam_init(circuit.params)
    report = TrainReport(model=model)
    t = 0
    for epoch in range(cfg.epochs):
        start = time.perf_counter()
        order = rng.permutation(len(X))
        total = 0.0
        for lo in range(0, len(X), cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            B = len(batch)
            try:
                ll, grads = circuit.backward(X[batch], weights=np.full(B, 1.0 / B))
            except ArithmeticError as exc:
                raise NumericalError(f"epoch {epoch + 1}: {exc}") from exc
            loss = -(ll + card[batch]).sum()
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise NumericalError(f"epoch {epoch + 1}: non-finite loss or gradient")
            total += loss
            t += 1
            params, state = adam_step(circuit.params, [-g for g in grads], state, cfg, t)
            circuit.params = params
        report.train_nll.append(float(total / len(X)))
        if valid:
            report.val_nll.append(float(-np.mean(model.log_prob_batch(valid, canonical=False))))
        else:
            report.val_nll.append(float("nan"))
        report.seconds.append(time.perf_counter() - start)
        log.info("epoch %d train_nll %.4f val_nll %.4f", epoch + 1, report.train_nll[-1], report.val_nll[-1])
    return report


@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    n_checked: int
    passed: bool
    tol: float


def grad_check(
    model,
    g: SparseGraph,
    step: float = 1e-5,
    tol: float = 1e-4,
    n_checks: int | None = 32,
    random_state=0,
    analytic=None,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare backward against central finite differences of the circuit log-value.

    The relative error of one entry is ``|fd - an| / max(|fd|, |an|, floor)``;
    the floor keeps entries whose gradient is below the finite-difference
    round-off level (about ``1e-16 |f| / step``) from dominating.
    ``n_checks=None`` checks every parameter. ``analytic`` overrides the
    backward gradients (used to verify that a stale gradient is flagged).
    """
    if not step > 0:
        raise ValueError("step must be positive")
    circuit = model.circuit
    x = model.encode([canonicalize(g)[0]])
    if analytic is None:
        _, analytic = circuit.backward(x)
    rng = np.random.default_rng(random_state)
    base = circuit.get_params()
    if n_checks is None:
        picks = [(pi, f) for pi, p in enumerate(base) for f in range(p.size)]
    else:
        sizes = np.sqrt([p.size for p in base])
        picks = []
        for _ in range(n_checks):
            pi = int(rng.choice(len(base), p=sizes / sizes.sum()))
            picks.append((pi, int(rng.integers(base[pi].size))))
    worst_rel = worst_abs = 0.0
    try:
        for pi, flat in picks:
            vals = []
            for sign in (1, -1):
                trial = [p.copy() for p in base]
                trial[pi].flat[flat] += sign * step
                circuit.params = trial
                vals.append(float(circuit.log_likelihood(x)[0]))
            fd = (vals[0] - vals[1]) / (2 * step)
            an = float(analytic[pi].flat[flat])
            err = abs(fd - an)
            worst_abs = max(worst_abs, err)
            worst_rel = max(worst_rel, err / max(abs(fd), abs(an), floor))
    finally:
        circuit.params = base
    return GradCheckReport(worst_rel, worst_abs, len(picks), worst_rel < tol, tol)


@dataclass
class GridResult:
    params: dict
    val_nll: float = float("nan")
    validity: float | None = None
    error: str | None = None
    report: TrainReport | None = None


def rank_results(results: Sequence[GridResult]) -> list[GridResult]:
    """Highest validity first, then lowest validation NLL; failed runs last."""

    def key(r):
        failed = r.error is not None
        validity = r.validity if r.validity is not None else -np.inf
        nll = r.val_nll if np.isfinite(r.val_nll) else np.inf
        return (failed, -validity, nll)

    return sorted(results, key=key)


def grid_search(
    train_graphs: Sequence[SparseGraph],
    grid,
    build: Callable[[RegionGraphSpec], object],
    cfg: OptimizerConfig = OptimizerConfig(),
    valid=None,
    validity: Callable[[object], float] | None = None,
    base_spec: RegionGraphSpec = RegionGraphSpec(),
) -> list[GridResult]:
    """Train one model per grid point and rank the outcomes.

    ``grid`` is a dict of lists (or list of such dicts) over
    :class:`RegionGraphSpec` fields; per-group settings use keys like
    ``"E_idx.n_L"``. ``build`` turns a spec into a fresh model and
    ``validity`` scores a trained model (e.g. validity of its samples).
    """
    if not grid:
        raise ConfigurationError("grid must not be empty")
    results = []
    for point in ParameterGrid(grid):
        res = GridResult(dict(point))
        try:
            spec = _spec_with(base_spec, point)
            model = build(spec)
            res.report = train(model, train_graphs, cfg, valid=valid)
            res.val_nll = res.report.val_nll[-1] if valid else res.report.train_nll[-1]
            if validity is not None:
                res.validity = float(validity(model))
        except Exception as exc:  # one failed configuration must not abort the sweep
            res.error = f"{type(exc).__name__}: {exc}"
            log.warning("grid point %s failed: %s", point, res.error)
        results.append(res)
    return rank_results(results)


def _spec_with(base: RegionGraphSpec, point: dict) -> RegionGraphSpec:
    d = base.to_dict()
    groups = {k: dict(v) for k, v in d["groups"].items()}
    for key, value in point.items():
        if "." in key:
            group, name = key.split(".", 1)
            groups.setdefault(group, {"n_L": d["n_L"], "n_S": d["n_S"], "n_I": d["n_I"]})[name] = value
        else:
            d[key] = value
    d["groups"] = groups
    return RegionGraphSpec.from_dict(d)


__all__ = [
    "GradCheckReport",
    "GridResult",
    "OptimizerConfig",
    "TrainReport",
    "adam_init",
    "adam_step",
    "grad_check",
    "grid_search",
    "rank_results",
    "train",
    "train_val_test_split",
]
