"""Central-difference verification of analytic gradients."""

import logging
from typing import Callable, Optional

import numpy as np

from ..errors import NonFiniteError
from ..models import GradCheckResult
from .params import ParameterStore
from .tensor import Tensor, precision

logger = logging.getLogger(__name__)

ScalarFn = Callable[[ParameterStore], Tensor]


def grad_check(
    f: ScalarFn,
    params: ParameterStore,
    eps: float = 1e-6,
    max_coords: int = 8,
    tolerance: float = 1e-3,
    rng: Optional[np.random.Generator] = None,
    name: str = "grad_check",
) -> GradCheckResult:
    """Compare backprop against central differences on sampled coordinates.

    ``f`` builds a scalar graph from a store. Both passes run on a float64 copy
    of ``params`` so the comparison measures the gradient, not float32 rounding.
    The error per coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
    A coordinate whose forward and backward one-sided differences disagree sits on
    a ReLU/hinge kink and is counted in ``kinks_skipped`` instead.
    """
    if not 1e-6 <= eps <= 1e-2:
        raise ValueError(f"eps must lie in [1e-6, 1e-2], got {eps}")
    rng = rng or np.random.default_rng(0)

    with precision(np.float64):
        store = params.astype(np.float64)
        out = f(store)
        if out.data.size != 1:
            raise ValueError("grad_check needs a scalar-valued function")
        base = float(out.data.reshape(-1)[0])
        out.backward()
        analytic = {n: store.grad(n).copy() for n in store}

        max_err = 0.0
        checked = 0
        kinks = 0
        finite = True
        for pname in store:
            value = store.value(pname)
            flat = value.reshape(-1)
            picks = rng.choice(flat.size, size=min(max_coords, flat.size), replace=False)
            for idx in picks:
                original = flat[idx]
                try:
                    flat[idx] = original + eps
                    store.set_value(pname, flat.reshape(value.shape))
                    f_plus = float(f(store).data.reshape(-1)[0])
                    flat[idx] = original - eps
                    store.set_value(pname, flat.reshape(value.shape))
                    f_minus = float(f(store).data.reshape(-1)[0])
                except NonFiniteError as e:
                    logger.debug("perturbed evaluation is not finite", extra={"param": pname, "op": e.op})
                    finite = False
                    continue
                finally:
                    flat[idx] = original
                    store.set_value(pname, flat.reshape(value.shape))

                numeric = (f_plus - f_minus) / (2.0 * eps)
                a = float(analytic[pname].reshape(-1)[idx])
                if not np.isfinite(numeric):
                    finite = False
                    continue
                err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
                if err > tolerance:
                    forward = (f_plus - base) / eps
                    backward = (base - f_minus) / eps
                    spread = abs(forward - backward) / max(1.0, abs(forward), abs(backward))
                    if spread > 10.0 * tolerance:
                        kinks += 1
                        continue
                max_err = max(max_err, err)
                checked += 1

    result = GradCheckResult(
        name=name,
        max_rel_error=max_err,
        coords_checked=checked,
        kinks_skipped=kinks,
        tolerance=tolerance,
        passed=finite and checked > 0 and max_err <= tolerance,
    )
    # "name" is a reserved LogRecord attribute
    logger.debug("gradient check finished", extra={"check": name, **result.model_dump(exclude={"name"})})
    return result
