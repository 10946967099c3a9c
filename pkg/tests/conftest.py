import pytest
from hypothesis import settings

from ffdrive import cli
from ffdrive.grids import Grid1D
from ffdrive.model import PhysicalParams, QuarticTilt, RunConfig

settings.register_profile("suite", deadline=None, max_examples=25)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def quartic_spec():
    return QuarticTilt()


@pytest.fixture(scope="session")
def quartic_params():
    return PhysicalParams(mass=1.0, hbar=2.0, tau=1.0, n=17)


@pytest.fixture(scope="session")
def default_grid():
    return Grid1D(-8.0, 8.0, 1024)


@pytest.fixture(scope="session")
def headline_run(tmp_path_factory):
    """The full default pipeline, run once and shared by the suite."""
    out = tmp_path_factory.mktemp("headline")
    return cli.reproduce(RunConfig(), out_dir=str(out))


def smoothstep(x):
    """Quintic ramp: s(0)=0, s(1)=1, zero first and second derivatives at both ends."""
    return x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


def smoothstep_d(x):
    return 30.0 * x**2 * (1.0 - x) ** 2


def smoothstep_dd(x):
    return 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x)


def make_scale_invariant(tau=1.0, shift=1.5, dilation=0.3, base="harmonic"):
    """Translated/dilated well with smooth schedules (exact-shortcut family)."""
    from ffdrive.model import ScaleInvariant

    if base == "harmonic":
        base_fn, base_dq = (lambda x: 0.5 * x**2), (lambda x: x)
    else:
        base_fn, base_dq = (lambda x: x**4), (lambda x: 4.0 * x**3)
    return ScaleInvariant(
        base=base_fn,
        base_dq=base_dq,
        f=lambda t: shift * smoothstep(t / tau),
        f_dot=lambda t: shift * smoothstep_d(t / tau) / tau,
        f_ddot=lambda t: shift * smoothstep_dd(t / tau) / tau**2,
        gamma=lambda t: 1.0 + dilation * smoothstep(t / tau),
        gamma_dot=lambda t: dilation * smoothstep_d(t / tau) / tau,
        gamma_ddot=lambda t: dilation * smoothstep_dd(t / tau) / tau**2,
    )


# one pass/fail line per reproduction criterion, printed at session end
ACCEPTANCE_LINES: dict[str, str] = {}


def record_criterion(tag: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[tag] = f"{tag}: {'PASS' if passed else 'FAIL'} ({detail})"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("-", "reproduction criteria")
    for tag in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[tag])


@pytest.fixture
def criterion():
    return record_criterion
