import os

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def small_config(root, *, v_start=900, v_floor=880, repeats=2, selections=("core0",), seed=1,
                 benchmarks=(("bench", 2000),), **kw):
    from uvlab.model import CoreSelection
    from uvlab.orchestrator import BenchmarkSpec, CampaignConfig

    return CampaignConfig(
        benchmarks=[BenchmarkSpec(b, nominal_duration_ms=ms) for b, ms in benchmarks],
        v_start_mv=v_start,
        v_floor_mv=v_floor,
        selections=[CoreSelection.parse(s) for s in selections],
        repeats=repeats,
        seed=seed,
        output_root=root,
        **kw,
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
