import numpy as np

from lzsc.autodiff import Tape
from lzsc.gradcheck import GradCheckReport, check_gradients, relative_error


def _quadratic(w, scale):
    def build(tape):
        node = tape.leaf(w)
        return tape.scale(tape.mean(tape.mul(node, node)), scale)
    return build


def test_accepts_correct_gradient():
    w = np.array([0.5, -1.0, 2.0])
    rep = check_gradients([("w", w)], _quadratic(w, 1.0))
    assert rep.checked == 3 and rep.skipped == 0 and not rep.failures
    assert np.array_equal(w, [0.5, -1.0, 2.0])


def test_detects_wrong_gradient(monkeypatch):
    w = np.array([0.5, -1.0])
    original = Tape.backward

    def doubled(self, node):
        original(self, node)
        for _, var in self._leaves.values():
            if var.grad is not None:
                var.grad = 2.0 * var.grad

    monkeypatch.setattr(Tape, "backward", doubled)
    rep = check_gradients([("w", w)], _quadratic(w, 1.0))
    assert len(rep.failures) == 2
    assert all(abs(err - 0.5) < 1e-6 for *_, err in rep.failures)


def test_counts_kink_skips():
    w = np.array([1e-8, 0.7])

    def build(tape):
        return tape.mean_abs_diff(tape.leaf(w), tape.const(np.zeros(2)))

    rep = check_gradients([("w", w)], build, h=1e-6)
    assert rep.skipped == 1 and rep.checked == 1
    assert "skipped 1" in rep.summary()


def test_relative_error_floor():
    assert relative_error(0.0, 1e-12) == 1e-12 / 1e-8
    assert relative_error(2.0, 1.0) == 0.5
    assert GradCheckReport().checked_fraction == 0.0
