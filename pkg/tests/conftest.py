from __future__ import annotations

from hypothesis import HealthCheck, settings

# invariant suites run at least a thousand cases each
settings.register_profile("invariants", max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("invariants")

PROPERTY_CASES = 1000
