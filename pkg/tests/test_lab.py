"""Tests for the claim experiments.

Exact anchors: the m = 2 slit diamond solves by hand to upper 7/16 and
lower 1/4 (three interior sites; the two side sites carry value 1/2 for
the upper exit and the top site 3/4, so the virtual start averages to
7/16), and an independent sweep solver reproduces the escape probability
at n = 9.  Sampled anchors are frozen from the deterministic streams, and
every envelope check is validated against the direction the claim
registry declares for it.
"""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from floorwalk.errors import CapExceeded, DomainError, InsufficientData
from floorwalk.lab import (
    CLAIMS,
    escape_probability_experiment,
    exit_asymmetry_experiment,
    ladder_tail_experiment,
    points_csv,
    report_json,
    slit_diamond_exit,
    sqrt_envelope_suite,
    _check,
    _fit_loglog,
    _verdict,
)

SMALL_ENSEMBLE = {
    "segments": (16, 32, 64),
    "singles": (8, 16, 32),
    "animals": {"count": 6, "size": 32},
    "dla": {"runs": 1, "steps": 200},
}


@pytest.fixture(scope="module")
def escape_report():
    return escape_probability_experiment((9, 16, 36, 64), 40000, seed=5)


@pytest.fixture(scope="module")
def ladder_report():
    return ladder_tail_experiment((4, 8, 16), 30000, seed=7)


@pytest.fixture(scope="module")
def asym_exact_report():
    return exit_asymmetry_experiment(range(2, 13), "exact")


@pytest.fixture(scope="module")
def asym_mc_report():
    return exit_asymmetry_experiment((4,), "mc", samples=30000, seed=3)


@pytest.fixture(scope="module")
def suite_reports():
    return sqrt_envelope_suite(SMALL_ENSEMBLE, seed=11)


def _named(report, fragment):
    hits = [c for c in report.envelope["checks"] if fragment in c["name"]]
    assert hits, f"no check matching {fragment!r}"
    return hits


def _passes(check):
    if check["op"] == "<=":
        return check["lhs"] <= check["rhs"] + check["slack"]
    if check["op"] == ">=":
        return check["lhs"] >= check["rhs"] - check["slack"]
    return abs(check["lhs"] - check["rhs"]) <= check["slack"]


def _sweep_escape(r):
    # independent route: Gauss-Seidel on a site dict until stationary
    sites = {}
    for a in range(-r + 1, r):
        for b in range(-r + 1 + abs(a), r - abs(a)):
            if not (a == 0 and -r < b <= 0):
                sites[(a, b)] = 0.0
    for _ in range(100000):
        delta = 0.0
        for (a, b) in sites:
            acc = 0.0
            for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                w = (a + da, b + db)
                if w in sites:
                    acc += 0.25 * sites[w]
                elif abs(w[0]) + abs(w[1]) == r and w != (0, -r):
                    acc += 0.25
            delta = max(delta, abs(acc - sites[(a, b)]))
            sites[(a, b)] = acc
        if delta < 1e-14:
            break
    return 0.25 * (sites[(1, 0)] + sites[(-1, 0)] + sites[(0, 1)])


# ---------------------------------------------------------------------------
# escape from the column tip


def test_escape_matches_independent_solver(escape_report):
    oracle = _sweep_escape(3)
    assert slit_diamond_exit(3)["escape"] == pytest.approx(oracle, abs=1e-9)
    label, est, se = escape_report.points[0]
    assert label == "n=9"
    assert abs(est - oracle) <= 4 * se


def test_escape_slope_in_band(escape_report):
    assert escape_report.verdict == "consistent"
    assert -0.57 <= escape_report.envelope["slope"] <= -0.43
    assert escape_report.envelope["slope_se"] > 0


def test_escape_scaled_floor(escape_report):
    assert escape_report.envelope["scaled_min"] > 1.2
    floor = _named(escape_report, "scaled escape probability floor")[0]
    assert floor["op"] == ">=" and _passes(floor)


def test_escape_points_frozen(escape_report):
    est = {label: e for label, e, _ in escape_report.points}
    assert est["n=9"] == pytest.approx(0.45150, abs=1e-5)
    assert est["n=64"] == pytest.approx(0.15887, abs=1e-5)
    counts = escape_report.notes["landing_counts"]["n=9"]
    assert sum(counts) == 40000
    assert counts[4] == 0  # the sphere's bottom tip hides behind the slit
    assert counts[5] == 0


def test_escape_step_cap_raises():
    with pytest.raises(CapExceeded):
        escape_probability_experiment((9,), 200, seed=1, step_cap=4)


def test_escape_validation():
    with pytest.raises(DomainError):
        escape_probability_experiment((8, 16), 100)
    with pytest.raises(DomainError):
        escape_probability_experiment((16,), 0)
    with pytest.raises(DomainError):
        escape_probability_experiment((), 100)


# ---------------------------------------------------------------------------
# ladder descent


def test_ladder_unit_step_and_symmetry(ladder_report):
    unit = dict((label, e) for label, e, _ in ladder_report.points)["Y:unit"]
    assert unit == pytest.approx(0.31537, abs=1e-5)
    assert unit >= 0.25
    for check in _named(ladder_report, "tail symmetry"):
        assert _passes(check)


def test_ladder_printed_band_is_breached(ladder_report):
    # the measured constant sits near 0.3, far below the printed band
    assert ladder_report.verdict == "violated"
    for check in _named(ladder_report, "above 0.8"):
        assert check["kind"] == "companion"
        assert not _passes(check)
    est = {label: e for label, e, _ in ladder_report.points}
    for n in (8, 16, 32):
        assert est[f"Y:n={n}"] < 0.45
    assert est["Y:n=8"] == pytest.approx(0.29920, abs=1e-5)


def test_ladder_descent_floor(ladder_report):
    floor = _named(ladder_report, "scaled ladder descent floor")[0]
    assert floor["kind"] == "claim-null" and _passes(floor)
    est = {label: e for label, e, _ in ladder_report.points}
    for r in (4, 8, 16):
        assert 0.15 < est[f"T:r={r}"] < 0.45


def test_ladder_censoring_accounting(ladder_report):
    notes = ladder_report.notes
    assert notes["excursions"] == 30000
    assert notes["walks"] == 2000
    assert notes["excursion_censored"] == 11
    assert notes["ladder_censored"] == 23
    caps = ladder_report.inputs
    assert caps["excursion_cap"] == 10**7 and caps["ladder_cap"] == 1000


def test_ladder_forced_censoring_is_visible():
    report = ladder_tail_experiment((2,), 4000, seed=9, ladder_cap=2)
    assert report.notes["ladder_censored"] > 0
    total = (report.notes["ladder_censored"]
             + report.notes["excursion_censored"])
    assert total < report.notes["walks"]  # some walks still finish


def test_ladder_insufficient_tail_raises():
    with pytest.raises(InsufficientData):
        ladder_tail_experiment((10**6,), 3000, seed=4)


def test_ladder_reproducible():
    a = ladder_tail_experiment((4, 8), 8000, seed=2)
    b = ladder_tail_experiment((4, 8), 8000, seed=2)
    assert report_json(a) == report_json(b)


def test_ladder_validation():
    with pytest.raises(DomainError):
        ladder_tail_experiment((), 100)
    with pytest.raises(DomainError):
        ladder_tail_experiment((0, 4), 100)
    with pytest.raises(DomainError):
        ladder_tail_experiment((4,), 0)


# ---------------------------------------------------------------------------
# exit asymmetry


def test_asymmetry_hand_solved_m2():
    split = slit_diamond_exit(2)
    assert split["upper"] == pytest.approx(7 / 16, abs=1e-12)
    assert split["lower"] == pytest.approx(1 / 4, abs=1e-12)
    assert split["escape"] == pytest.approx(9 / 16, abs=1e-12)


def test_asymmetry_exact_gaps(asym_exact_report):
    assert asym_exact_report.verdict == "consistent"
    gaps = [est for _, est, _ in asym_exact_report.points]
    assert gaps[0] == pytest.approx(3 / 16, abs=1e-12)
    assert gaps[-1] == pytest.approx(0.08280375, abs=1e-8)
    assert all(g > 0 for g in gaps)
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert all(se == 0.0 for _, _, se in asym_exact_report.points)


def test_asymmetry_full_diamond_symmetry(asym_exact_report):
    for check in _named(asym_exact_report, "full diamond symmetry"):
        assert _passes(check)
    split = slit_diamond_exit(7, both_slits=True)
    assert split["upper"] == pytest.approx(split["lower"], abs=1e-12)


def test_asymmetry_mc_matches_exact(asym_mc_report):
    label, gap, se = asym_mc_report.points[0]
    exact = slit_diamond_exit(4)
    assert abs(gap - (exact["upper"] - exact["lower"])) <= 4 * se
    counts = asym_mc_report.notes["landing_counts"]["m=4"]
    assert sum(counts) == 30000
    assert counts[4] == 0 and counts[5] == 0
    assert asym_mc_report.verdict == "consistent"


def test_asymmetry_validation():
    with pytest.raises(DomainError):
        exit_asymmetry_experiment((1, 4), "exact")
    with pytest.raises(DomainError):
        exit_asymmetry_experiment((4,), "both")
    with pytest.raises(DomainError):
        exit_asymmetry_experiment((13,), "exact")
    with pytest.raises(DomainError):
        exit_asymmetry_experiment((4,), "mc", samples=0)
    with pytest.raises(DomainError):
        slit_diamond_exit(1)


@settings(max_examples=16, deadline=None)
@given(m=st.integers(min_value=2, max_value=9), both=st.booleans())
def test_asymmetry_solver_properties(m, both):
    split = slit_diamond_exit(m, both_slits=both)
    for value in split.values():
        assert 0.0 <= value <= 1.0
    if both:
        assert abs(split["upper"] - split["lower"]) <= 1e-12
    else:
        assert split["upper"] > split["lower"]


# ---------------------------------------------------------------------------
# square-root envelopes


def test_suite_tip_ratios_frozen(suite_reports):
    report = next(r for r in suite_reports if r.claim_id == "thm-1.4")
    est = {label: e for label, e, _ in report.points}
    assert est["n=16"] == pytest.approx(2.752192, abs=1e-5)
    assert est["n=32"] == pytest.approx(2.753081, abs=1e-5)
    assert est["n=64"] == pytest.approx(2.753534, abs=1e-5)
    assert report.envelope["slope"] == pytest.approx(0.500352, abs=1e-5)
    assert report.verdict == "consistent"


def test_suite_total_ratios_frozen(suite_reports):
    report = next(r for r in suite_reports if r.claim_id == "thm-1.6")
    est = {label: e for label, e, _ in report.points}
    assert est["n=16"] == pytest.approx(2.043972, abs=1e-5)
    assert est["n=64"] == pytest.approx(2.011034, abs=1e-5)
    assert report.envelope["slope"] == pytest.approx(0.988281, abs=1e-5)
    assert report.verdict == "consistent"


def test_suite_singleton_totals_frozen(suite_reports):
    report = next(r for r in suite_reports if r.claim_id == "thm-1.5")
    est = {label: e for label, e, _ in report.points}
    assert est["k=8"] == pytest.approx(2.976744, abs=1e-5)
    assert est["k=32"] == pytest.approx(3.770190, abs=1e-5)
    assert report.envelope["slope"] == pytest.approx(1.268138, abs=1e-5)
    assert report.envelope["slope"] >= 0.93
    assert report.verdict == "consistent"


def test_suite_upper_envelope_pools_families(suite_reports):
    report = next(r for r in suite_reports if r.claim_id == "thm-1.3")
    labels = [label for label, _, _ in report.points]
    assert any(label.startswith("segment:") for label in labels)
    assert any(label.startswith("animal:") for label in labels)
    assert any(label.startswith("dla:") for label in labels)
    assert report.notes["clusters"] == 10
    assert report.envelope["sup_ratio"] == pytest.approx(2.753534, abs=1e-5)
    assert report.envelope["sup_ratio"] <= 20.0
    assert report.verdict == "consistent"


def test_suite_exactness_and_order(suite_reports):
    assert [r.claim_id for r in suite_reports] == [
        "thm-1.3", "thm-1.4", "thm-1.5", "thm-1.6"]
    for report in suite_reports:
        assert all(se == 0.0 for _, _, se in report.points)
        assert all(c["slack"] == 0.0 for c in report.envelope["checks"]
                   if c["op"] != "==")


def test_suite_reproducible(suite_reports):
    again = sqrt_envelope_suite(SMALL_ENSEMBLE, seed=11)
    assert [report_json(a) for a in suite_reports] == \
           [report_json(b) for b in again]


def test_suite_validation():
    with pytest.raises(DomainError):
        sqrt_envelope_suite({"widgets": (1, 2)})
    with pytest.raises(DomainError):
        sqrt_envelope_suite({"segments": (16,)})
    with pytest.raises(DomainError):
        sqrt_envelope_suite({"animals": {"count": 2, "size": 1}})


# ---------------------------------------------------------------------------
# registry, verdict machinery, serialization


def test_registry_shape():
    assert set(CLAIMS) == {"thm-1.3", "thm-1.4", "thm-1.5", "thm-1.6",
                           "eq-4.14", "lemma-4.3", "lemma-4.4"}
    for entry in CLAIMS.values():
        assert entry["direction"] in ("upper", "lower")
        assert entry["location"].strip()
    assert CLAIMS["thm-1.3"]["direction"] == "upper"
    assert CLAIMS["thm-1.4"]["direction"] == "lower"


def test_claim_null_checks_match_registry_direction(
        escape_report, ladder_report, asym_exact_report, asym_mc_report,
        suite_reports):
    reports = [escape_report, ladder_report, asym_exact_report,
               asym_mc_report, *suite_reports]
    for report in reports:
        direction = CLAIMS[report.claim_id]["direction"]
        wanted = ">=" if direction == "lower" else "<="
        nulls = [c for c in report.envelope["checks"]
                 if c["kind"] == "claim-null"]
        assert nulls, f"{report.claim_id} carries no claim-null check"
        for check in nulls:
            assert check["op"] == wanted
        for check in report.envelope["checks"]:
            assert check["kind"] in ("claim-null", "companion", "sanity")
            assert check["op"] in ("<=", ">=", "==")
            assert check["slack"] >= 0.0


def test_verdict_rules():
    ok = _check("ok", ">=", 1.0, 0.5, 0.0, "claim-null")
    near = _check("near", ">=", 0.4, 0.5, 0.2, "claim-null")
    bad = _check("bad", ">=", 0.1, 0.9, 0.2, "claim-null")
    assert _verdict([ok]) == "consistent"
    assert _verdict([ok, near]) == "inconclusive"
    assert _verdict([ok, near, bad]) == "violated"
    eq_ok = _check("eq", "==", 0.50, 0.51, 0.02, "sanity")
    eq_bad = _check("eq", "==", 0.50, 0.60, 0.02, "sanity")
    assert _verdict([eq_ok]) == "consistent"
    assert _verdict([eq_bad]) == "violated"
    with pytest.raises(DomainError):
        _check("nonsense", "<", 0.0, 1.0, 0.0, "sanity")


def test_fit_loglog():
    xs = [2.0, 4.0, 8.0, 16.0]
    ys = [3.0 * math.sqrt(x) for x in xs]
    slope, intercept, se = _fit_loglog(xs, ys, [0.0] * 4)
    assert slope == pytest.approx(0.5, abs=1e-12)
    assert intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert se == 0.0
    _, _, se = _fit_loglog(xs, ys, [0.1] * 4)
    assert se > 0
    with pytest.raises(DomainError):
        _fit_loglog([4.0, 4.0], [1.0, 1.0], [0.0, 0.0])
    with pytest.raises(InsufficientData):
        _fit_loglog([1.0, 2.0], [0.0, 1.0], [0.0, 0.0])


def test_report_serialization(tmp_path, asym_exact_report):
    blob = report_json(asym_exact_report)
    parsed = json.loads(blob)
    assert parsed["claim_id"] == "lemma-4.4"
    assert parsed["verdict"] == "consistent"
    assert parsed["inputs"]["m_list"] == list(range(2, 13))
    path = tmp_path / "points.csv"
    points_csv(asym_exact_report, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "parameter,estimate,stderr"
    assert len(lines) == 1 + len(asym_exact_report.points)
    label, est, se = asym_exact_report.points[0]
    first = lines[1].split(",")
    assert first[0] == label
    assert float(first[1]) == est and float(first[2]) == se
