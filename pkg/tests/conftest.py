import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gazeaffect import EMOTIONS, TARGETS
from gazeaffect.dataset import ClassBin
from gazeaffect.features import CHANNELS, N_STEPS, FeatureRecord
from gazeaffect.preprocessing import TrialWindow

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DT = 1000.0 / 150.0


def make_trial(x, y, pupil=None, valid=None, emotion="Neutral", trial_id="clip_000", dt=DT, start=0.0):
    """Trial at 150 Hz from coordinate arrays (units are whatever the caller uses)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    t = np.arange(n) * dt
    pupil = np.full(n, 3.0) if pupil is None else np.asarray(pupil, dtype=float)
    valid = np.ones(n, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    end = start + max(t[-1] if n else 0.0, dt)
    return TrialWindow(trial_id, emotion, start, end, t, x, y, pupil, valid)


def make_record(rng, label=0, pid="P001", tid="clip_000", emotion=None, sequence=None,
                personality=None, environment=None):
    emotion = emotion or EMOTIONS[int(rng.integers(6))]
    stim = np.zeros(6)
    stim[EMOTIONS.index(emotion)] = 1.0
    return FeatureRecord(
        participant_id=pid, trial_id=tid,
        sequence=rng.normal(size=(N_STEPS, len(CHANNELS))) if sequence is None else sequence,
        personality=rng.uniform(0.1, 0.9, size=5) if personality is None else personality,
        stimulus=stim,
        environment=rng.normal([350.0, 22.0], [50.0, 1.0]) if environment is None else environment,
        labels={t: ClassBin(int(label)) for t in TARGETS},
    )


def separable_records(n, seed=0):
    """Records whose label is encoded in the level of the first sequence channels."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = i % 3
        seq = rng.normal(0, 0.3, size=(N_STEPS, len(CHANNELS)))
        seq[:, :3] += 2.0 * (np.arange(3) == label)
        out.append(make_record(rng, label, pid=f"P{i % 7:03d}", tid=f"clip_{i:03d}", sequence=seq))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ----------------------------------------------------------------

ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and rep.when == "call":
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        ACCEPTANCE.append((marker.args[0], marker.args[1], rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE, key=lambda a: a[0]):
        line = f"{'PASS' if ok else 'FAIL'}  {number:>2}. {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
