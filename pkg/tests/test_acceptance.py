"""Acceptance gate: every exit criterion, each printing its pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` for the per-criterion lines,
or from the command line as `eqtracer verify --suite all`.
"""

import pytest

from eqtracer import verify


CRITERIA = [
    ("1 static misspending contraction", verify.check_static_misspending, 30.0),
    ("2 static convex-potential contraction", verify.check_static_cpf, None),
    ("3 perturbation jump caps dominate", verify.check_delta_domination, None),
    ("4 dynamic tracing under windowed bound", verify.check_dynamic_tracing, None),
    ("5 extremal shares equal exhaustive search", verify.check_extremal_shares, None),
    ("6 bid dynamics convergence and recurrence", verify.check_prd_convergence, None),
    ("7 supply perturbations reduce to utility", verify.check_supply_reduction, None),
    ("8 gradient descent tracking", verify.check_gd_tracking, 5.0),
    ("9 diffusion load balancing", verify.check_diffusion, None),
    ("10 byte-identical reruns", verify.check_determinism, None),
]


@pytest.mark.parametrize("label,check,budget", CRITERIA, ids=[c[0] for c in CRITERIA])
def test_criterion(label, check, budget):
    result = check()
    status = "PASS" if result.passed else "FAIL"
    print(f"{status}  criterion {label}  [{result.seconds:.2f}s]  {result.detail}")
    assert result.passed, f"criterion {label}: {result.detail}"
    if budget is not None:
        assert result.seconds < budget, (
            f"criterion {label} took {result.seconds:.1f}s, budget {budget}s"
        )
