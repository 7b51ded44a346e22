"""Independent structural checks on the explicit unit view of a circuit."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp


def check_units(units, root: int, n_vars: int | None = None, atol: float = 1e-9) -> list[str]:
    """Return every violated property; an empty list means the circuit is valid.

    Checked: topological order, normalised input and sum parameters,
    smoothness of sums, decomposability of products and a full root scope.
    """
    problems = []
    scopes: list[frozenset] = []
    for uid, u in enumerate(units):
        if any(c >= uid for c in u.children):
            problems.append(f"unit {uid}: child after parent")
            scopes.append(frozenset())
            continue
        if u.kind == "input":
            if abs(logsumexp(u.log_probs)) > atol:
                problems.append(f"unit {uid}: input distribution not normalised")
            scopes.append(frozenset([u.var]))
        elif u.kind == "sum":
            child_scopes = {scopes[c] for c in u.children}
            if len(child_scopes) != 1:
                problems.append(f"unit {uid}: sum is not smooth")
            if len(u.log_weights) != len(u.children):
                problems.append(f"unit {uid}: weight count mismatch")
            elif abs(logsumexp(u.log_weights)) > atol:
                problems.append(f"unit {uid}: sum weights not normalised")
            scopes.append(frozenset().union(*child_scopes))
        elif u.kind == "product":
            seen: set = set()
            for c in u.children:
                if seen & scopes[c]:
                    problems.append(f"unit {uid}: product is not decomposable")
                seen |= scopes[c]
            scopes.append(frozenset(seen))
        else:
            problems.append(f"unit {uid}: unknown kind {u.kind!r}")
            scopes.append(frozenset())
    if n_vars is not None and scopes[root] != frozenset(range(n_vars)):
        problems.append("root scope does not cover every variable")
    return problems


def evaluate_units(units, root: int, x) -> float:
    """Reference one-row evaluator over the explicit unit list (-1 = marginalised)."""
    vals = np.empty(len(units))
    for uid, u in enumerate(units):
        if u.kind == "input":
            vals[uid] = 0.0 if x[u.var] < 0 else u.log_probs[x[u.var]]
        elif u.kind == "product":
            vals[uid] = sum(vals[c] for c in u.children)
        else:
            vals[uid] = logsumexp(u.log_weights + vals[list(u.children)])
    return float(vals[root])
