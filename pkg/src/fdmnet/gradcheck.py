"""Central finite-difference check of analytic layer gradients."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradcheckReport:
    max_rel_error: float
    tol: float
    n_checked: int
    worst: str = ""
    nonfinite: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.nonfinite and self.max_rel_error < self.tol

    def __str__(self):
        status = "ok" if self.passed else "FAIL"
        msg = f"{status} max_rel_err={self.max_rel_error:.3e} (tol {self.tol:g}, {self.n_checked} probes"
        if self.worst:
            msg += f", worst at {self.worst}"
        msg += ")"
        if self.nonfinite:
            msg += f" non-finite: {', '.join(self.nonfinite)}"
        return msg


def _rel_errors(analytic, numeric, floor):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def fd_gradcheck(module, x, h=1e-5, tol=1e-4, n_probe=24, rng=None,
                 check_input=True, check_params=True, input_mask=None, floor_frac=1e-5):
    """Compare ``module.backward`` against central differences.

    The scalar probed is ``sum(g * module.forward(x))`` for a fixed random
    ``g``. Up to ``n_probe`` coordinates are sampled per tensor (input and
    each parameter). Relative error uses ``max(|a|, |n|, floor)`` in the
    denominator, where ``floor = floor_frac * max|analytic|`` of that tensor,
    so exact zeros do not divide by zero. ``input_mask`` restricts which
    input coordinates may be probed (e.g. away from a ReLU kink).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    x = np.array(x, dtype=np.float64)
    out = module.forward(x)
    g = rng.standard_normal(np.shape(out))

    def objective():
        return float(np.sum(g * module.forward(x)))

    module.zero_grad()
    module.forward(x)
    dx = module.backward(g)

    targets = []
    if check_input:
        targets.append(("input", x, np.array(dx, dtype=np.float64), input_mask))
    if check_params:
        for name, p in module.named_params():
            targets.append((name, p.value, p.grad.copy(), None))

    worst, worst_name, n_checked, bad = 0.0, "", 0, []
    for name, arr, analytic, mask in targets:
        if not np.all(np.isfinite(analytic)):
            bad.append(name)
            continue
        candidates = np.flatnonzero(mask.ravel()) if mask is not None else np.arange(arr.size)
        if candidates.size == 0:
            continue
        picks = rng.choice(candidates, size=min(n_probe, candidates.size), replace=False)
        flat = arr.reshape(-1)
        a_vals, n_vals = [], []
        for idx in picks:
            orig = flat[idx]
            flat[idx] = orig + h
            fp = objective()
            flat[idx] = orig - h
            fm = objective()
            flat[idx] = orig
            num = (fp - fm) / (2 * h)
            if not np.isfinite(num):
                bad.append(f"{name}[{idx}]")
                continue
            a_vals.append(analytic.reshape(-1)[idx])
            n_vals.append(num)
        if not a_vals:
            continue
        floor = max(floor_frac * float(np.max(np.abs(analytic))), 1e-12)
        errs = _rel_errors(np.array(a_vals), np.array(n_vals), floor)
        n_checked += errs.size
        i = int(np.argmax(errs))
        if errs[i] > worst:
            worst, worst_name = float(errs[i]), f"{name}[{picks[i]}]"
    # restore caches to the unperturbed point
    module.forward(x)
    return GradcheckReport(worst, tol, n_checked, worst_name, bad)


class FunctionModule:
    """Adapter giving a (forward, vjp) pair the layer protocol, for losses."""

    def __init__(self, forward, vjp):
        self._f, self._vjp = forward, vjp

    def forward(self, x):
        return np.asarray(self._f(x))

    def backward(self, dy):
        return self._vjp(dy)

    def named_params(self):
        return iter(())

    def zero_grad(self):
        pass
