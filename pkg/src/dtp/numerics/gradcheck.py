"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .params import ParamStore
from .tensor import Tensor, backward, record_branches


class NondeterministicFunction(ValueError):
    pass


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    n_checked: int
    passed: bool
    n_shrunk: int = 0       # entries whose step was reduced to stay off a kink
    n_unresolved: int = 0   # entries still straddling a kink at the smallest step


@dataclass
class GradCheckReport:
    tol: float
    step: float
    params: dict[str, ParamCheck] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.params.values())

    @property
    def max_rel_err(self) -> float:
        return max((p.max_rel_err for p in self.params.values()), default=0.0)

    def lines(self) -> list[str]:
        out = []
        for p in self.params.values():
            status = "PASS" if p.passed else "FAIL"
            extra = ""
            if p.n_shrunk or p.n_unresolved:
                extra = f" shrunk={p.n_shrunk} unresolved={p.n_unresolved}"
            out.append(f"{status} {p.name:<28s} max_rel_err={p.max_rel_err:.3e} "
                       f"entries={p.n_checked}{extra}")
        overall = "PASS" if self.passed else "FAIL"
        out.append(f"{overall} overall max_rel_err={self.max_rel_err:.3e} tol={self.tol:.1e}")
        return out


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def _entries(size: int, max_entries: int | None, rng: np.random.Generator) -> np.ndarray:
    if max_entries is None or size <= max_entries:
        return np.arange(size)
    return np.sort(rng.choice(size, size=max_entries, replace=False))


def _traced(f):
    with record_branches() as log:
        value = f().item()
    return value, log


def _same_branches(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def finite_diff_check(f: Callable[[], Tensor], params: ParamStore, step: float = 1e-3,
                      tol: float = 1e-4, names=None, max_entries: int | None = None,
                      analytic: dict[str, np.ndarray] | None = None,
                      seed: int = 0, kink_aware: bool = False,
                      min_step: float = 1e-7) -> GradCheckReport:
    """Compare backprop gradients of the scalar ``f()`` against central differences.

    Args:
        f: zero-argument callable that rebuilds the graph from ``params`` and
            returns a scalar Tensor.
        params: store whose tensors are perturbed in place (restored afterwards).
        step: finite-difference half-width.
        tol: pass threshold on the per-entry relative error
            ``|ga - gn| / max(|ga|, |gn|, 1e-8)``.
        names: subset of parameter names to check (default: all learnable).
        max_entries: check at most this many entries per tensor, sampled
            deterministically from ``seed``.
        analytic: pre-computed gradients to test instead of running backprop.
        kink_aware: record the branch taken by every abs / relu / clamp / max
            at x and x +- h.  If either side lands on a different branch the
            difference straddles a kink, so h is divided by 10 for that entry
            until both sides agree with x.  An entry that still straddles a
            kink at ``min_step`` counts as a failure.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    first = f()
    second = f()
    if first.data.size != 1:
        raise ValueError(f"f must return a scalar, got shape {first.shape}")
    if not np.array_equal(first.data, second.data):
        raise NondeterministicFunction(
            f"f is not deterministic: {first.item()!r} != {second.item()!r}")

    if names is None:
        names = params.learnable_names()
    if analytic is None:
        backward(first, params)
        analytic = {n: params[n].grad.copy() for n in names}

    base = _traced(f)[1] if kink_aware else None
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tol=tol, step=step)
    for name in names:
        t = params[name]
        t.data = np.asarray(t.data)  # 0-d values may be numpy scalars, which have no view
        flat = t.data.reshape(-1)  # view into the live buffer
        ga = np.asarray(analytic[name]).reshape(-1)
        idx = _entries(flat.size, max_entries, rng)
        worst = 0.0
        shrunk = unresolved = 0
        for i in idx:
            orig = flat[i]
            h = step
            while True:
                flat[i] = orig + h
                fp, bp = _traced(f)
                flat[i] = orig - h
                fm, bm = _traced(f)
                flat[i] = orig
                if not kink_aware or (_same_branches(base, bp) and _same_branches(base, bm)):
                    break
                if h / 10 < min_step:
                    unresolved += 1
                    break
                h /= 10
            shrunk += h < step
            gn = (fp - fm) / (2 * h)
            worst = max(worst, float(relative_error(ga[i], gn)))
        report.params[name] = ParamCheck(name, worst, len(idx),
                                         worst < tol and unresolved == 0, shrunk, unresolved)
    return report
