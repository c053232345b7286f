from dataclasses import dataclass, field

import numpy as np

from .tape import Tape

# |analytic - numeric| / max(|analytic|, |numeric|, REL_FLOOR)
REL_FLOOR = 1e-3


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst: tuple  # (param name, flat index)
    checked: int
    skipped: int
    tol: float
    per_param: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.max_rel_err < self.tol

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} max_rel_err={self.max_rel_err:.3e} tol={self.tol:.1e} "
                f"checked={self.checked} skipped={self.skipped} worst={self.worst}")


def _branches_equal(a, b):
    return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(f, params, h=1e-6, tol=1e-6, rel_floor=REL_FLOOR, max_entries=None, seed=0):
    """Compare tape gradients with central finite differences.

    ``f(tape, leaves)`` must build a scalar on ``tape`` from the leaf tensors
    in ``leaves`` (one per entry of ``params``). Entries whose perturbation
    changes any branch the forward pass recorded (activation side, nearest
    neighbour assignment) are skipped. ``max_entries`` checks a seeded random
    subset per parameter instead of every entry.
    """
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def run(record_grad):
        tape = Tape()
        leaves = {k: tape.leaf(v, name=k) for k, v in params.items()}
        out = f(tape, leaves)
        if record_grad:
            tape.backward(out)
            return out.item(), tape.branches, {k: t.grad for k, t in leaves.items()}
        return out.item(), tape.branches, None

    _, base_branches, analytic = run(True)
    gen = np.random.default_rng(seed)
    worst, worst_at, checked, skipped, per_param = 0.0, None, 0, 0, {}
    for name, value in params.items():
        flat = value.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(gen.choice(flat.size, max_entries, replace=False))
        local = 0.0
        for i in entries:
            orig = flat[i]
            flat[i] = orig + h
            fp, bp, _ = run(False)
            flat[i] = orig - h
            fm, bm, _ = run(False)
            flat[i] = orig
            if not (_branches_equal(bp, base_branches) and _branches_equal(bm, base_branches)):
                skipped += 1
                continue
            numeric = (fp - fm) / (2 * h)
            a = analytic[name].reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), rel_floor)
            checked += 1
            local = max(local, err)
            if worst_at is None or err > worst:
                worst, worst_at = err, (name, int(i))
        per_param[name] = local
    return GradCheckReport(worst, worst_at, checked, skipped, tol, per_param)
