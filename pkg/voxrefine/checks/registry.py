import inspect
import logging
from typing import Callable, Dict, Optional

import numpy as np
from docstring_parser import parse

from voxrefine.checks.models import CaseInstance, GradCase, GradCheckError, GradCheckReport, GradCheckResult
from voxrefine.tensor import backward, zero_grad

logger = logging.getLogger(__name__)

# floor of the relative-error denominator
GRAD_FLOOR = 1e-8
# analytic and numeric values closer than this agree outright; covers gradients that are
# structurally zero, where the central difference only sees float64 round-off
GRAD_ATOL = 1e-7


class GradCheckRegistry:
    """Central finite-difference checks for every registered differentiable operation"""

    def __init__(self, register_defaults: bool = True):
        self._cases: Dict[str, GradCase] = {}
        if register_defaults:
            from voxrefine.checks.default_cases import register_default_cases

            register_default_cases(self)

    def case(self, name: Optional[str] = None, description: Optional[str] = None, negative_control: bool = False):
        """
        Decorator for registering a case builder

        Args:
            name: Case name; defaults to the function name.
            description: Optional description. If not provided, uses the docstring's short description.
            negative_control: Mark a deliberately broken case that only runs on request.
        """

        def decorator(func: Callable[[np.random.Generator], CaseInstance]) -> Callable:
            case_description = description
            if case_description is None:
                docstring = inspect.getdoc(func)
                parsed = parse(docstring) if docstring else None
                case_description = (parsed.short_description if parsed else None) or "No description provided"
            case_name = name or func.__name__
            if case_name in self._cases:
                raise GradCheckError(f"case {case_name!r} registered twice")
            self._cases[case_name] = GradCase(case_name, case_description, func, negative_control)
            return func

        return decorator

    def names(self, include_negative: bool = False) -> list[str]:
        return [name for name, case in self._cases.items() if include_negative or not case.negative_control]

    def describe(self) -> dict[str, str]:
        return {name: case.description for name, case in self._cases.items() if not case.negative_control}

    def check(
        self,
        op_name: Optional[str] = None,
        trials: int = 10,
        eps: float = 1e-5,
        tol: float = 1e-4,
        seed: int = 0,
        atol: float = GRAD_ATOL,
        max_coords: Optional[int] = None,
        include_negative: bool = False,
    ) -> GradCheckReport:
        """
        Run the named case, or every case, and collect the worst relative error per case.

        Every coordinate of every parameter is perturbed by +-eps. A coordinate's error is
        |a - n| / max(|a|, |n|, 1e-8), or 0 when |a - n| <= atol.

        Args:
            op_name: Restrict the run to this case and its variants (name prefix `op_name_`); unknown names are rejected.
            trials: Random instances per case.
            eps: Central difference step.
            tol: Largest accepted relative error.
            seed: Seed of the instance generator.
            atol: Absolute agreement below which a coordinate counts as exact.
            max_coords: Sample this many coordinates per tensor instead of all of them.
            include_negative: Also run negative-control cases.
        """
        if eps <= 0 or tol <= 0 or atol < 0:
            raise GradCheckError(f"eps and tol must be positive and atol non-negative, got {eps}, {tol}, {atol}")
        if op_name is not None:
            selected = [
                case
                for name, case in self._cases.items()
                if name == op_name or (name.startswith(f"{op_name}_") and (include_negative or not case.negative_control))
            ]
            if not selected:
                raise GradCheckError(f"unknown operation {op_name!r}; known: {', '.join(self.names())}")
        else:
            selected = [self._cases[name] for name in self.names(include_negative)]

        results = []
        for case in selected:
            rng = np.random.default_rng(seed)
            worst = max(
                (_trial_error(case.build(rng), eps, atol, max_coords, rng) for _ in range(trials)),
                default=0.0,
            )
            passed = bool(worst < tol)
            logger.info(f"{'✅' if passed else '❌'} {case.name}: max rel err {worst:.2e}")
            results.append(
                GradCheckResult(op=case.name, description=case.description, trials=trials, max_rel_err=worst, passed=passed)
            )
        return GradCheckReport(tol=tol, eps=eps, atol=atol, results=results)


def coordinate_error(analytic: float, numeric: float, atol: float = GRAD_ATOL) -> float:
    diff = abs(analytic - numeric)
    if diff <= atol:
        return 0.0
    return diff / max(abs(analytic), abs(numeric), GRAD_FLOOR)


def _trial_error(
    instance: CaseInstance,
    eps: float,
    atol: float,
    max_coords: Optional[int],
    rng: np.random.Generator,
) -> float:
    out = instance.forward()
    weights = rng.normal(size=out.shape)

    def objective() -> float:
        return float(np.sum(instance.forward().data * weights))

    params = list(instance.params.values())
    zero_grad(params)
    backward((out * weights).sum())

    worst = 0.0
    for tensor in params:
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        if max_coords is None or max_coords >= flat.size:
            picks = range(flat.size)
        else:
            picks = rng.choice(flat.size, size=max_coords, replace=False)
        for i in picks:
            original = flat[i]
            flat[i] = original + eps
            plus = objective()
            flat[i] = original - eps
            minus = objective()
            flat[i] = original
            numeric = (plus - minus) / (2 * eps)
            worst = max(worst, coordinate_error(analytic.reshape(-1)[i], numeric, atol))
    return worst


_default_registry: Optional[GradCheckRegistry] = None


def grad_check(
    op_name: Optional[str] = None,
    trials: int = 10,
    eps: float = 1e-5,
    tol: float = 1e-4,
    include_negative: bool = False,
) -> GradCheckReport:
    """Run the default registry; see `GradCheckRegistry.check`."""
    global _default_registry
    if _default_registry is None:
        _default_registry = GradCheckRegistry()
    return _default_registry.check(op_name, trials=trials, eps=eps, tol=tol, include_negative=include_negative)
