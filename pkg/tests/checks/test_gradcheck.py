# Tests for the finite-difference gradient check registry

import numpy as np
import pytest

from voxrefine.checks import CaseInstance, GradCheckError, GradCheckRegistry
from voxrefine.checks.registry import GRAD_ATOL, coordinate_error
from voxrefine.tensor import Function, Tensor, exp, instance_norm3d

ALL_OPS = {
    "conv3d", "instance_norm3d", "leaky_relu", "linear", "softmax", "layer_norm", "upsample",
    "attention", "self_attention", "neighborhood_cross", "pna_fab", "sigm", "dcam",
    "weighted_ce", "scal_semantic", "scal_geometric", "lovasz",
}


@pytest.fixture(scope="module")
def registry():
    return GradCheckRegistry()


def test_default_registry_covers_every_differentiable_operation(registry):
    assert ALL_OPS <= set(registry.names())
    assert "corrupted_backward" not in registry.names()
    assert "corrupted_backward" in registry.names(include_negative=True)


def test_descriptions_come_from_docstrings(registry):
    assert registry.describe()["pna_fab"] == "Attention aggregation block on a 4x4x4 skip volume."


def test_every_default_case_passes(registry):
    report = registry.check(trials=2, eps=1e-5, tol=1e-4)
    assert report.failures == []
    assert {result.op for result in report.results} >= ALL_OPS
    assert report.atol == GRAD_ATOL


@pytest.mark.slow
def test_every_default_case_passes_ten_trials(registry):
    report = registry.check(trials=10, eps=1e-5, tol=1e-4)
    assert report.failures == []
    assert all(result.trials == 10 for result in report.results)


def test_filter_selects_the_op_and_its_variants(registry):
    report = registry.check("conv3d", trials=1)
    assert [result.op for result in report.results] == ["conv3d", "conv3d_strided", "conv3d_depthwise"]


def test_unknown_filter_is_rejected(registry):
    with pytest.raises(GradCheckError, match="unknown operation"):
        registry.check("conv4d", trials=1)


def test_corrupted_backward_is_caught(registry):
    report = registry.check("corrupted_backward", trials=3, include_negative=True)
    assert not report.passed
    assert report.failures == ["corrupted_backward"]
    assert report.results[0].max_rel_err > 1e-2


def test_custom_case_registration():
    registry = GradCheckRegistry(register_defaults=False)

    @registry.case()
    def exponential(rng):
        """Elementwise exponential.

        Args:
            rng: instance generator.
        """
        x = Tensor(rng.normal(size=(3,)), requires_grad=True)
        return CaseInstance({"x": x}, lambda: exp(x))

    assert registry.describe() == {"exponential": "Elementwise exponential."}
    assert registry.check(trials=2).passed
    with pytest.raises(GradCheckError):
        registry.case(name="exponential")(exponential)


def test_checks_are_reproducible(registry):
    first = registry.check("sigm", trials=2, seed=3)
    second = registry.check("sigm", trials=2, seed=3)
    assert first.results[0].max_rel_err == second.results[0].max_rel_err
    assert np.isfinite(first.results[0].max_rel_err)


class _TinyGradientError(Function):
    name = "tiny_gradient_error"

    def forward(self, x):
        return np.zeros_like(x)

    def backward(self, grad):
        return (np.full_like(grad, 1e-9),)


class _OneWrongCoordinate(Function):
    name = "one_wrong_coordinate"

    def forward(self, x):
        return 2.0 * x

    def backward(self, grad):
        out = 2.0 * grad
        out.flat[37] += 1.0
        return (out,)


# --- Tests for the error measure ---

def test_coordinate_error_floor_and_absolute_tolerance():
    assert coordinate_error(2.0, 1.0) == pytest.approx(0.5)
    assert coordinate_error(0.0, 1e-3, atol=0.0) == pytest.approx(1.0)
    assert coordinate_error(1e-9, 0.0, atol=0.0) == pytest.approx(0.1)
    assert coordinate_error(1e-9, 0.0) == 0.0
    assert coordinate_error(0.0, 0.0, atol=0.0) == 0.0


def test_absolute_tolerance_decides_tiny_discrepancies():
    registry = GradCheckRegistry(register_defaults=False)

    @registry.case()
    def tiny(rng):
        """Zero map whose backward is off by 1e-9."""
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        return CaseInstance({"x": x}, lambda: _TinyGradientError.apply(x))

    assert registry.check(trials=2).passed
    strict = registry.check(trials=2, atol=0.0)
    assert not strict.passed
    assert strict.results[0].max_rel_err == pytest.approx(0.1)


def test_every_coordinate_is_perturbed():
    registry = GradCheckRegistry(register_defaults=False)

    @registry.case()
    def one_wrong(rng):
        """Doubling with one wrong gradient entry."""
        x = Tensor(rng.normal(size=(10, 10)), requires_grad=True)
        return CaseInstance({"x": x}, lambda: _OneWrongCoordinate.apply(x))

    for seed in range(3):
        report = registry.check(trials=1, seed=seed)
        assert not report.passed
        assert report.results[0].max_rel_err > 1e-2


def test_structurally_zero_gradient_passes():
    registry = GradCheckRegistry(register_defaults=False)

    @registry.case()
    def bias_before_norm(rng):
        """Per-channel shift absorbed by instance normalisation."""
        x = Tensor(rng.normal(size=(2, 3, 3, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 1, 1, 1)), requires_grad=True)
        return CaseInstance({"x": x, "b": b}, lambda: instance_norm3d(x + b, 1e-5))

    report = registry.check(trials=3)
    assert report.passed, report.results[0].max_rel_err


def test_invalid_tolerances_are_rejected(registry):
    with pytest.raises(GradCheckError):
        registry.check("sigm", trials=1, eps=0.0)
    with pytest.raises(GradCheckError):
        registry.check("sigm", trials=1, atol=-1.0)
