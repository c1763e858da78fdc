import sys
from pathlib import Path

from hypothesis import HealthCheck, settings

# make `import oracles` work regardless of how pytest was invoked
sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "suite",
    deadline=None,  # eigensolver calls are cached but the first one is slow
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")
