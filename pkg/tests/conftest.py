import numpy as np
import pytest

from serattn.audio_io import AudioClip, write_wav

ACCEPTANCE_RESULTS = {}  # test name -> [outcome, seconds incl. setup]


def tone(freq, sr=16000, seconds=1.0, amp=0.5):
    t = np.arange(int(round(sr * seconds))) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sr)


def peak_hz(x, sr):
    """Frequency of the largest |FFT| bin of the whole signal (bin width sr/len)."""
    spec = np.abs(np.fft.rfft(x))
    return np.argmax(spec) * sr / len(x)


def voiced(f0, sr=16000, seconds=1.0, rng=None, amp=0.5):
    """Harmonic tone with a little noise, loosely speech-like."""
    rng = rng or np.random.default_rng(0)
    t = np.arange(int(sr * seconds)) / sr
    s = sum(np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi)) / h for h in range(1, 6))
    s = s + 0.02 * rng.standard_normal(len(t))
    return AudioClip(amp * s / np.abs(s).max(), sr)


TESS_EMOTIONS = {"angry": 150.0, "sad": 420.0}


def make_tess_tree(root, per_class=6, seed=0, emotions=TESS_EMOTIONS):
    """Synthetic corpus laid out like TESS (OAF_<emotion>/OAF_<word>_<emotion>.wav)."""
    rng = np.random.default_rng(seed)
    paths = []
    for emo, f0 in emotions.items():
        d = root / f"OAF_{emo}"
        d.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            clip = voiced(f0 * rng.uniform(0.92, 1.08), seconds=rng.uniform(0.8, 1.4), rng=rng)
            p = d / f"OAF_word{i:02d}_{emo}.wav"
            write_wav(p, clip)
            paths.append(p)
    return paths


@pytest.fixture
def tess_root(tmp_path):
    root = tmp_path / "tess"
    make_tess_tree(root)
    return root


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid or report.when == "teardown":
        return
    name = report.nodeid.split("::")[-1]
    entry = ACCEPTANCE_RESULTS.setdefault(name, ["PASS", 0.0])
    entry[1] += report.duration
    if report.failed:
        entry[0] = "FAIL"
    elif report.skipped:
        entry[0] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (outcome, dur) in ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"{outcome:4s}  {name}  ({dur:.1f}s)")
