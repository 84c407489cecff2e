import numpy as np
import pytest

from hartreemix.convergence import (
    CSV_HEADER,
    Row,
    StudyPlan,
    fit_rate,
    growth_in_time,
    run_point,
    run_study,
)
import hartreemix.convergence as conv
from hartreemix.grid import make_grid
from hartreemix.hartree import MixtureSpec, gaussian_orbital
from hartreemix.potentials import PotentialMatrix, PotentialSpec


def _rows(dist, Ns=(2, 4, 6, 8), times=(0.5,)):
    return [Row(N, (N,), t, dist(N, t), dist(N, t)) for N in Ns for t in times]


def test_fit_exact_power_law():
    slope, intercept, resid = fit_rate(_rows(lambda N, t: 3.0 / N), 0.5)
    assert slope == pytest.approx(-1.0, abs=1e-9)
    assert intercept == pytest.approx(np.log(3.0), abs=1e-9)
    assert resid <= 1e-9


def test_fit_constant_distance():
    slope, _, _ = fit_rate(_rows(lambda N, t: 0.2), 0.5)
    assert slope == pytest.approx(0.0, abs=1e-12)


def test_fit_needs_three_points():
    with pytest.raises(ValueError):
        fit_rate(_rows(lambda N, t: 1.0 / N, Ns=(2, 4)), 0.5)


def test_fit_drops_nonpositive(caplog):
    rows = _rows(lambda N, t: 1.0 / N, Ns=(2, 4, 6, 8)) + [Row(10, (10,), 0.5, 0.0, 0.0)]
    slope, _, _ = fit_rate(rows, 0.5)
    assert slope == pytest.approx(-1.0)
    assert "excluded" in caplog.text


def test_growth_synthetic():
    times = (0.25, 0.5, 0.75, 1.0)
    assert growth_in_time(_rows(lambda N, t: 0.1, times=times)) == pytest.approx(0.0, abs=1e-12)
    K = growth_in_time(_rows(lambda N, t: np.exp(2 * t) / N, times=times))
    assert K == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(ValueError):
        growth_in_time(_rows(lambda N, t: 0.1, times=(0.5, 1.0)))


def _plan(pot=PotentialSpec("gaussian", 0.5, 1.0), sweep=((2,), (3,), (4,)), times=(0.0, 0.25, 0.5)):
    g = make_grid(1, 6, 6.0)
    return StudyPlan(g, MixtureSpec((1,), PotentialMatrix([[pot]])),
                     gaussian_orbital(g, 3.0, 1.0, 1)[None], list(sweep), list(times))


def test_zero_potential_point_at_floor():
    rows = run_point(_plan(PotentialSpec()), (4,))
    assert all(r.trace_distance <= 1e-8 for r in rows)


def test_initial_row_vanishes_and_later_rows_positive():
    rows = run_point(_plan(), (3,))
    assert rows[0].time == 0.0 and rows[0].trace_distance <= 1e-9
    assert rows[-1].trace_distance > 1e-4


def test_point_reproducible():
    plan = _plan(times=(0.5,))
    a, b = run_point(plan, (4,)), run_point(plan, (4,))
    assert a[0].trace_distance == b[0].trace_distance


def test_plan_validation():
    with pytest.raises(ValueError):
        _plan(sweep=((2, 2),))
    with pytest.raises(ValueError):
        _plan(times=(-1.0,))
    g = make_grid(1, 8, 8.0)
    with pytest.raises(ValueError):
        StudyPlan(g, MixtureSpec((1,), PotentialMatrix.zero(1)), gaussian_orbital(g)[None],
                  [(40,)], [0.1], basis_cap=1000)


def test_study_degenerate_notice():
    rep = run_study(_plan(PotentialSpec()))
    assert not rep.fits
    assert any("degenerate: distances at floor" in n for n in rep.notices)


def test_study_fit_and_csv():
    rep = run_study(_plan())
    assert set(rep.fits) == {"0.25", "0.5"}
    text = rep.to_csv()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert len(text.splitlines()) == 1 + 9
    with_prov = rep.to_csv({"a": 1})
    assert with_prov.startswith("# schema_version=1\n# config={\"a\":1}\n")


def test_study_records_failures(monkeypatch):
    real = conv.run_point

    def flaky(plan, N):
        if N == (3,):
            raise RuntimeError("boom")
        return real(plan, N)

    monkeypatch.setattr(conv, "run_point", flaky)
    rep = run_study(_plan(sweep=((2,), (3,), (4,), (5,))))
    failed = [r for r in rep.rows if r.failure]
    assert len(failed) == 3 and all("boom" in r.failure for r in failed)
    assert rep.to_json_dict()["failures"]
    assert "nan" in rep.to_csv()
    assert "0.25" in rep.fits


def test_parallel_matches_serial():
    plan = _plan(times=(0.25,))
    a = run_study(plan, jobs=1).to_csv()
    b = run_study(plan, jobs=2).to_csv()
    assert a == b
