"""Shared pytest plumbing for the acceptance suite.

Tests in test_acceptance.py carry a ``criterion`` marker; after the run a
one-line PASS/FAIL verdict is printed per criterion so the whole gate can
be read at a glance.
"""

import pytest

CRITERIA = (
    (1, "auc matches the pairwise oracle; youden matches the exhaustive scan"),
    (2, "finite differences confirm layer gradients and the full GAN stack"),
    (3, "constant-predictor closed forms and the loss/F1 curve shape"),
    (4, "oversampled points lie on their defining segments; counts balance"),
    (5, "dragan gains >= +0.05 mean AUC over vanilla on the n~731 IR~16 task"),
    (6, "dragan gains >= +0.08 mean AUC over vanilla on the n~2338 IR~39 task"),
    (7, "smote and polyfit-star each gain >= +0.05 over vanilla on both tasks"),
    (8, "telemetry: best score is monotone and patience accounting is exact"),
    (9, "two identically seeded bench runs emit byte-identical files"),
    (10, "ablation slopes match the closed-form least-squares oracle"),
)


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(n): ties a test to one acceptance criterion")
    config._criterion_outcomes = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    # setup failures (broken fixtures) count against the criterion too
    if report.when not in ("setup", "call"):
        return
    bucket = item.config._criterion_outcomes.setdefault(marker.args[0], [])
    if report.failed:
        bucket.append("failed")
    elif report.skipped:
        bucket.append("skipped")
    elif report.when == "call":
        bucket.append("passed")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = getattr(config, "_criterion_outcomes", {})
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number, label in CRITERIA:
        if number not in outcomes:
            continue
        seen = outcomes[number]
        if "failed" in seen:
            verdict = "FAIL"
        elif "passed" in seen:
            verdict = "PASS"
        else:
            verdict = "SKIP"
        terminalreporter.write_line(f"[{verdict}] criterion {number}: {label}")
