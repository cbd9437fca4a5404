"""Every-parameter central finite-difference check of the reverse-mode gradients.

Each scalar is perturbed by +-h. If either perturbed forward pass changes the
branch pattern of a non-smooth op (threshold clamp or sign, an absolute value),
the finite difference straddles a kink and says nothing about the derivative,
so that scalar is skipped and counted instead of compared.
"""
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .losses import stage1_terms, stage2_terms
from .networks import fnet_apply, ifnet_apply


@dataclass
class GradCheckReport:
    checked: int = 0
    skipped: int = 0
    failures: list = field(default_factory=list)
    max_rel_error: float = 0.0

    @property
    def total(self):
        return self.checked + self.skipped

    @property
    def checked_fraction(self):
        return self.checked / self.total if self.total else 0.0

    def summary(self):
        return (f"checked {self.checked}/{self.total} ({100 * self.checked_fraction:.2f}%), "
                f"skipped {self.skipped} at kinks, max rel err {self.max_rel_error:.2e}, "
                f"{len(self.failures)} failures")


def relative_error(analytic, numeric, floor=1e-8):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _same_pattern(a, b):
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def check_gradients(named, objective, h=1e-6, tol=1e-3, floor=1e-8):
    """Compare ``objective``'s tape gradient against central differences.

    ``named`` is a list of (name, array) parameters, perturbed in place and
    restored. ``objective(tape)`` builds the loss node on the given tape.
    """
    tape = Tape(record=True)
    loss = objective(tape)
    tape.backward(loss)
    grads = {name: np.array(tape.grad(arr), copy=True) for name, arr in named}

    def probe():
        t = Tape(record=False, probe=True)
        value = float(objective(t).value)
        return value, t.kinks

    _, base = probe()
    report = GradCheckReport()
    for name, arr in named:
        flat = arr.reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus, k_plus = probe()
            flat[i] = orig - h
            f_minus, k_minus = probe()
            flat[i] = orig
            if not (_same_pattern(base, k_plus) and _same_pattern(base, k_minus)):
                report.skipped += 1
                continue
            numeric = (f_plus - f_minus) / (2 * h)
            err = relative_error(float(gflat[i]), numeric, floor)
            report.checked += 1
            report.max_rel_error = max(report.max_rel_error, err)
            if err >= tol:
                report.failures.append((name, i, float(gflat[i]), numeric, err))
    return report


def stage1_objective(I1, I2, fnet, ifnet):
    def build(tape):
        i1, i2 = tape.const(I1), tape.const(I2)
        i1p, i2p, _, _ = ifnet_apply(tape, fnet_apply(tape, i1, i2, fnet), ifnet)
        return stage1_terms(tape, i1p, i1, i2p, i2)
    return build


def stage2_objective(I1, I2, fnet, beta=(20.0, 20.0, 15.0)):
    def build(tape):
        i1, i2 = tape.const(I1), tape.const(I2)
        return stage2_terms(tape, fnet_apply(tape, i1, i2, fnet), i1, i2, *beta).total
    return build
