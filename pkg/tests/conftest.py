import sys
import threading
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from camadapt.adapt import ServoPolicy, calibrate, default_train_rig  # noqa: E402
from camadapt.camgeom import CameraModel, Intrinsics, Pose, rotation_about  # noqa: E402
from camadapt.nvslink import NvsClient, NvsRequest, SourceView, TargetCamera  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--skip-perf", action="store_true", help="skip the latency tests (slow or shared machines)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--skip-perf"):
        skip = pytest.mark.skip(reason="--skip-perf given")
        for item in items:
            if "perf" in item.keywords:
                item.add_marker(skip)


_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def check(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return check


@pytest.fixture(scope="session")
def rig():
    return default_train_rig()


@pytest.fixture(scope="session")
def calibration(rig):
    return calibrate(rig["agent"])


@pytest.fixture(scope="session")
def policy(calibration):
    return ServoPolicy("agent", calibration)


def random_pose(rng, max_t=1.0):
    R = rotation_about(rng.normal(size=3), rng.uniform(-np.pi, np.pi))
    return Pose(R, rng.uniform(-max_t, max_t, 3))


def small_camera(cam_id="cam", size=32, fov=60.0, pose=None):
    return CameraModel(cam_id, Intrinsics.from_fov(size, size, fov), pose or Pose.identity())


def random_request(rng, max_side=12, max_views=3):
    h, w = (int(x) for x in rng.integers(1, max_side + 1, 2))

    def intr(hh, ww):
        fx, fy = rng.uniform(1, 500, 2)
        return Intrinsics(fx, fy, rng.uniform(0, ww - 1e-9), rng.uniform(0, hh - 1e-9), ww, hh)

    sources = [
        SourceView(intr(h, w), random_pose(rng, 5.0), rng.integers(0, 256, (h, w, 3), dtype=np.uint8))
        for _ in range(int(rng.integers(1, max_views + 1)))
    ]
    targets = []
    for _ in range(int(rng.integers(1, max_views + 1))):
        th, tw = (int(x) for x in rng.integers(1, max_side + 1, 2))
        targets.append(TargetCamera(intr(th, tw), random_pose(rng, 5.0)))
    return NvsRequest(sources, targets, int(rng.integers(0, 2**63)))


def random_case(rng, size=(8, 28)):
    h, w = (int(x) for x in rng.integers(*size, 2))
    img = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    kind = rng.integers(3)
    if kind == 0:
        mask = rng.random((h, w)) > rng.uniform(0.05, 0.7)
    elif kind == 1:
        mask = np.ones((h, w), bool)
        for _ in range(int(rng.integers(1, 4))):
            i, j = rng.integers(0, h), rng.integers(0, w)
            mask[i : i + int(rng.integers(1, 8)), j : j + int(rng.integers(1, 8))] = False
    else:
        yy, xx = np.mgrid[0:h, 0:w]
        cy, cx, r = rng.uniform(0, h), rng.uniform(0, w), rng.uniform(1, 6)
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 > r * r
    if mask.all():
        mask[h // 2, w // 2] = False
    if not mask.any():
        mask[0, 0] = True
    return img, mask


def run_clients(endpoint, n_clients, n_requests, seed):
    failures = []

    def worker(cid):
        rng = np.random.default_rng(seed + cid)
        try:
            with NvsClient(endpoint, 5000) as client:
                for r in range(n_requests):
                    req = random_request(rng, 8, 2)
                    req.targets = [TargetCamera(req.sources[0].intrinsics, t.pose) for t in req.targets]
                    req.request_id = cid * 1000 + r + 1
                    resp = client.synthesize(req)
                    assert resp.request_id == req.request_id
                    for i, img in enumerate(resp.images):
                        assert np.array_equal(img, req.sources[i % len(req.sources)].image)
        except Exception as exc:  # collected and reported by the caller
            failures.append((cid, exc))

    threads = [threading.Thread(target=worker, args=(c,)) for c in range(n_clients)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return failures
