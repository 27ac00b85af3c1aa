"""
Verifying every built-in scenario
=================================

Each scenario carries closed forms derived by hand.  verify_scenario runs the
generic pipeline on a grid and compares, then checks the structural
identities that hold for any deformation.
"""

from deformgeo.chart_fields import DifferentiationScheme
from deformgeo.scenarios import SCENARIO_NAMES, by_name, verify_scenario

for scheme in (DifferentiationScheme("analytic"), DifferentiationScheme("richardson")):
    print(f"--- {scheme.mode}")
    for name in SCENARIO_NAMES:
        results = verify_scenario(by_name(name), resolution=9, scheme=scheme)
        worst = max(results, key=lambda r: r.max_residual / r.tolerance
                    if r.expectation == "holds" else 0.0)
        status = "ok" if all(r.passed for r in results) else "FAILED"
        print(f"{name:>17}: {status:6} {len(results):2d} checks, "
              f"tightest {worst.name} at {worst.max_residual:.1e}")

# For the shear family the coincidence check is expected to be violated, and
# it passes when it is.
