from voxrefine.checks.models import CaseInstance, GradCase, GradCheckError, GradCheckReport, GradCheckResult
from voxrefine.checks.registry import GradCheckRegistry, grad_check

__all__ = [
    'CaseInstance',
    'GradCase',
    'GradCheckError',
    'GradCheckRegistry',
    'GradCheckReport',
    'GradCheckResult',
    'grad_check',
]
