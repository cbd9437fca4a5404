"""JSON problem specs for the ``solve`` subcommand.

Dense modes (``exhaustive``, ``nihta``) accept either an explicit problem::

    {"x": [...], "D": [[...], ...], "lam": 0.01, "theta": 0.2, "iters": 200}

or a planted batch::

    {"planted": {"n": 8, "m": 6, "k": 2, "trials": 100, "seed": 0}, "theta": 0.2}

Convolutional modes (``ista``, ``nihta-conv``) take a synthetic instance::

    {"synthetic": {"size": 32, "K": 4, "kernel_size": 5, "density": 0.02, "seed": 0},
     "theta": 0.05, "iters": 100}

Validation failures raise SpecError carrying an RFC 6901 pointer to the bad field.
"""
import numpy as np

from .solvers import (adjoint_kernel, conv_l0_objective, conv_operator_norm, exhaustive_l0, ista_conv,
                      l0_objective, nihta_conv, nihta_dense, planted_instance, synthetic_csc)
from .tensor import conv2d_same


class SpecError(ValueError):
    def __init__(self, pointer, message):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
        self.message = message


def _number(spec, key, default=None, base="", positive=False, minimum=None):
    pointer = f"{base}/{key}"
    if key not in spec:
        if default is None:
            raise SpecError(pointer, "required field missing")
        return default
    value = spec[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        raise SpecError(pointer, f"expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise SpecError(pointer, f"must be > 0, got {value}")
    if minimum is not None and value < minimum:
        raise SpecError(pointer, f"must be >= {minimum}, got {value}")
    return value


def _integer(spec, key, default=None, base="", minimum=0):
    value = _number(spec, key, default, base, minimum=minimum)
    if int(value) != value:
        raise SpecError(f"{base}/{key}", f"expected an integer, got {value!r}")
    return int(value)


def _matrix(spec, key):
    try:
        arr = np.asarray(spec[key], dtype=float)
    except KeyError:
        raise SpecError(f"/{key}", "required field missing") from None
    except (TypeError, ValueError):
        raise SpecError(f"/{key}", "expected a numeric array") from None
    return arr


def _dense_problems(spec):
    if "planted" in spec:
        planted = spec["planted"]
        if not isinstance(planted, dict):
            raise SpecError("/planted", "expected an object")
        n = _integer(planted, "n", 8, "/planted", 1)
        m = _integer(planted, "m", 6, "/planted", 1)
        k = _integer(planted, "k", 2, "/planted", 1)
        if k > m:
            raise SpecError("/planted/k", f"sparsity {k} exceeds atom count {m}")
        trials = _integer(planted, "trials", 1, "/planted", 1)
        rng = np.random.default_rng(_integer(planted, "seed", 0, "/planted"))
        for _ in range(trials):
            D, z, support = planted_instance(rng, n, m, k)
            yield D @ z, D, support
        return
    x = _matrix(spec, "x")
    D = _matrix(spec, "D")
    if D.ndim != 2:
        raise SpecError("/D", f"expected a 2-D matrix, got {D.ndim} dimensions")
    if x.shape != (D.shape[0],):
        raise SpecError("/x", f"expected length {D.shape[0]} to match D, got shape {x.shape}")
    yield x, D, None


def _solve_dense(mode, spec):
    problems = list(_dense_problems(spec))
    lam = _number(spec, "lam", 0.01, minimum=0)
    max_support = _integer(spec, "max_support", 4, minimum=1)
    if mode == "nihta":
        theta = _number(spec, "theta", minimum=0)
        iters = _integer(spec, "iters", 200, minimum=1)
        mu_scale = _number(spec, "mu_scale", 0.9, positive=True)
    results = []
    for x, D, planted in problems:
        z_opt, obj_opt = exhaustive_l0(x, D, lam, max_support)
        row = {"exhaustive_objective": obj_opt, "exhaustive_support": [int(i) for i in np.flatnonzero(z_opt)]}
        if mode == "nihta":
            mu = mu_scale / np.linalg.norm(D, 2) ** 2
            z, report = nihta_dense(x, D, theta, mu, iters, lam=lam)
            obj = l0_objective(x, D, z, lam)
            row.update(support=[int(i) for i in report.final_support], objective=obj,
                       oracle_dominates=bool(obj_opt <= obj + 1e-12), z=z.tolist())
        else:
            row.update(support=row["exhaustive_support"], objective=obj_opt, z=z_opt.tolist())
        if planted is not None:
            row["planted_support"] = [int(i) for i in planted]
            row["recovered"] = row["support"] == row["planted_support"]
        results.append(row)
    summary = {"mode": mode, "instances": len(results), "results": results}
    if results and "recovered" in results[0]:
        summary["recovered"] = sum(r["recovered"] for r in results)
    if mode == "nihta":
        summary["oracle_dominates_all"] = all(r["oracle_dominates"] for r in results)
    return summary


def _solve_conv(mode, spec):
    syn = spec.get("synthetic", {})
    if not isinstance(syn, dict):
        raise SpecError("/synthetic", "expected an object")
    size = _integer(syn, "size", 32, "/synthetic", 8)
    K = _integer(syn, "K", 4, "/synthetic", 1)
    k = _integer(syn, "kernel_size", 5, "/synthetic", 1)
    if k % 2 == 0:
        raise SpecError("/synthetic/kernel_size", f"kernel size must be odd, got {k}")
    density = _number(syn, "density", 0.02, "/synthetic", minimum=0)
    if density > 1:
        raise SpecError("/synthetic/density", f"must be <= 1, got {density}")
    rng = np.random.default_rng(_integer(syn, "seed", 0, "/synthetic"))
    theta = _number(spec, "theta", minimum=0)
    iters = _integer(spec, "iters", 100, minimum=1)
    lam = _number(spec, "lam", theta ** 2 / 2, minimum=0)

    I, z_true, D = synthetic_csc(rng, size, K, k, density)
    mu = 0.9 / conv_operator_norm(D, z_true.shape) ** 2
    W_u = mu * adjoint_kernel(D)
    solver = ista_conv if mode == "ista" else nihta_conv
    z = solver(I, D, W_u, theta, iters)
    residual = np.linalg.norm(I - conv2d_same(z, D)) / max(np.linalg.norm(I), 1e-300)
    return {"mode": mode, "iterations": iters, "theta": theta, "step": mu,
            "objective": conv_l0_objective(I, D, z, lam), "relative_residual": float(residual),
            "nonzeros": int(np.count_nonzero(z)), "true_nonzeros": int(np.count_nonzero(z_true))}


def run_solve(mode, spec):
    if mode in ("exhaustive", "nihta"):
        return _solve_dense(mode, spec)
    if mode in ("ista", "nihta-conv"):
        return _solve_conv(mode, spec)
    raise SpecError("/mode", f"unknown mode {mode!r}")
