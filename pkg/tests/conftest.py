import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from depthray.geometry import CameraExtrinsics, CameraIntrinsics, random_rotation

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# criterion lines collected by test_acceptance and echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_camera(rng, size=(48, 40), fmin=100.0, fmax=2000.0):
    w, h = size
    intr = CameraIntrinsics(
        fx=rng.uniform(fmin, fmax),
        fy=rng.uniform(fmin, fmax),
        cx=rng.uniform(0.3 * w, 0.7 * w),
        cy=rng.uniform(0.3 * h, 0.7 * h),
        width=w,
        height=h,
    )
    extr = CameraExtrinsics.from_matrix(random_rotation(rng), rng.normal(scale=3.0, size=3))
    return intr, extr


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
