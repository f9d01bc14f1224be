"""Tests for nodal counting, decay fits, chamber unfolding, and the hierarchy."""

import json
from types import SimpleNamespace

import numpy as np
import pytest

from choquard.analysis import (
    annotate_report,
    chamber_reconstruct,
    chamber_restrict,
    closed_chamber_mask,
    decay_fit,
    facet_ray_representatives,
    hierarchy_report,
    nodal_domains,
    nodal_min_bound,
    open_chamber_mask,
)
from choquard.coxeter import from_name
from choquard.errors import AllBelowFloor, NoNodalCandidates, SupportViolation
from choquard.field import Field, GridSpec, GroupAction
from choquard.functionals import parse_nonlinearity
from choquard.riesz import RieszKernel
from choquard.solver import SolveReport, SolverConfig, solve_ground

GRID = GridSpec(dim=2, M=64, L=10.0)
NL = parse_nonlinearity("power:p=2")


@pytest.fixture(scope="module")
def mesh():
    return GRID.mesh()


@pytest.fixture(scope="module")
def gauss(mesh):
    return np.exp(-GRID.radius() ** 2 / 4.0)


@pytest.fixture(scope="module")
def kernel():
    return RieszKernel(GRID, alpha=1.0)


# -- nodal domains ------------------------------------------------------------

def test_single_bump_counts_one(gauss):
    rep = nodal_domains(Field(GRID, gauss))
    assert (rep.count, rep.positive_count, rep.negative_count) == (1, 1, 0)
    assert len(rep.sizes) == 1
    assert rep.sign_on_chamber is None


def test_dipole_counts_two(mesh, gauss):
    x, _ = mesh
    action = GroupAction(from_name("A1"), GRID)
    rep = nodal_domains(Field(GRID, x * gauss), action=action)
    assert (rep.count, rep.positive_count, rep.negative_count) == (2, 1, 1)
    assert rep.sizes[0] == rep.sizes[1]
    # the chamber of the order-two group is {x1 > 0}, where this field is > 0
    assert rep.sign_on_chamber == 1
    flipped = nodal_domains(Field(GRID, -x * gauss), action=action)
    assert flipped.sign_on_chamber == -1


def test_quadrupole_counts_four(mesh, gauss):
    x, y = mesh
    action = GroupAction(from_name("I2:2"), GRID)
    rep = nodal_domains(Field(GRID, x * y * gauss), action=action)
    assert (rep.count, rep.positive_count, rep.negative_count) == (4, 2, 2)
    assert len(set(rep.sizes)) == 1
    assert rep.sign_on_chamber == 1


def test_threshold_hides_small_satellites(mesh, gauss):
    x, y = mesh
    satellite = 0.01 * np.exp(-((x - 5.0) ** 2 + (y - 5.0) ** 2) / 0.5)
    u = Field(GRID, gauss + satellite)
    assert nodal_domains(u, threshold=1e-3).count == 2
    assert nodal_domains(u, threshold=0.05).count == 1


def test_sizes_are_sorted(mesh, gauss):
    x, _ = mesh
    rep = nodal_domains(Field(GRID, (x + 1.0) * gauss))
    assert rep.sizes == tuple(sorted(rep.sizes))


# -- chamber masks and unfolding ----------------------------------------------

def test_chamber_masks_match_half_space(mesh):
    x, y = mesh
    act = GroupAction(from_name("A1"), GRID)
    assert np.array_equal(open_chamber_mask(act), x > 0)
    # no grid point sits on the wall, so open and closed agree here
    assert np.array_equal(closed_chamber_mask(act), x > 0)
    act2 = GroupAction(from_name("I2:2"), GRID)
    assert np.array_equal(open_chamber_mask(act2), (x > 0) & (y > 0))


@pytest.mark.parametrize("tag", ["A1", "I2:2"])
def test_chamber_round_trip_is_exact(tag, mesh, gauss):
    x, y = mesh
    u = Field(GRID, x * gauss if tag == "A1" else x * y * gauss)
    action = GroupAction(from_name(tag), GRID)
    rec = chamber_reconstruct(action, chamber_restrict(action, u))
    assert np.max(np.abs(rec.data - u.data)) == 0.0


def test_reconstruct_rejects_leaking_support(gauss):
    action = GroupAction(from_name("A1"), GRID)
    with pytest.raises(SupportViolation):
        chamber_reconstruct(action, Field(GRID, gauss))


# -- decay fits ---------------------------------------------------------------

@pytest.mark.parametrize("c", [0.5, 1.0])
def test_decay_fit_recovers_exponential_rate(c):
    u = Field(GRID, np.exp(-c * GRID.radius()))
    fit = decay_fit(u)
    assert fit.rate == pytest.approx(c, rel=2e-2)
    assert fit.rms_residual < 1e-3
    assert fit.amplitude > 0.0
    assert fit.n_shells >= 10
    assert (fit.r_min, fit.r_max) == (4.0, 7.0)


def test_decay_fit_custom_window():
    u = Field(GRID, np.exp(-GRID.radius()))
    fit = decay_fit(u, r_min=2.0, r_max=8.0)
    assert fit.rate == pytest.approx(1.0, rel=2e-2)


def test_power_law_leaves_large_residual():
    r = GRID.radius()
    fit = decay_fit(Field(GRID, (1.0 + r) ** -3))
    assert fit.rms_residual > 0.01


@pytest.mark.parametrize("window", [(5.0, 3.0), (0.0, 7.0), (4.0, 12.0)])
def test_decay_fit_rejects_bad_windows(window):
    u = Field(GRID, np.exp(-GRID.radius()))
    with pytest.raises(ValueError):
        decay_fit(u, r_min=window[0], r_max=window[1])


def test_decay_fit_needs_ten_shells():
    u = Field(GRID, np.exp(-GRID.radius()))
    with pytest.raises(ValueError, match="shells"):
        decay_fit(u, r_min=4.0, r_max=4.5)


def test_decay_fit_floor():
    with pytest.raises(AllBelowFloor):
        decay_fit(Field(GRID, np.zeros(GRID.shape)))


# -- report annotation and the nodal bound ------------------------------------

@pytest.fixture(scope="module")
def ground(kernel):
    return solve_ground(NL, kernel, GRID, SolverConfig(seed=0, restarts=1))


def test_annotate_fills_diagnostics(ground):
    rep = annotate_report(ground)
    assert rep.nodal_count == 1
    assert rep.decay_rate is not None
    assert rep.decay_rate > 0.3


def test_annotate_survives_unfittable_field(ground):
    small = GridSpec(dim=2, M=16, L=2.0)
    u = Field(small, np.exp(-small.radius() ** 2))
    import dataclasses
    stub = dataclasses.replace(ground, grid=small, field=u)
    rep = annotate_report(stub)
    assert rep.nodal_count == 1
    assert rep.decay_rate is None


def test_nodal_min_bound_selects_sign_changers():
    reports = [
        SimpleNamespace(energy=1.0, nodal_count=1),
        SimpleNamespace(energy=3.0, nodal_count=2),
        SimpleNamespace(energy=5.0, nodal_count=4),
        SimpleNamespace(energy=0.5, nodal_count=None),
    ]
    assert nodal_min_bound(reports) == 3.0
    with pytest.raises(NoNodalCandidates):
        nodal_min_bound(reports[:1])


# -- facet representatives and the hierarchy ----------------------------------

def test_facet_representatives():
    assert facet_ray_representatives(from_name("trivial")) == []
    a1 = facet_ray_representatives(from_name("A1"))
    assert len(a1) == 1 and np.linalg.norm(a1[0]) == pytest.approx(1.0)
    reps = facet_ray_representatives(from_name("I2:2"))
    found = {tuple(np.round(q, 9)) for q in reps}
    assert found == {(0.0, 1.0), (1.0, 0.0)}


def test_facet_representative_stabilizers_b3():
    group = from_name("B3")
    orders = sorted(group.isotropy(q).order
                    for q in facet_ray_representatives(group))
    assert orders == [4, 6, 8]


@pytest.fixture(scope="module")
def hierarchy(kernel):
    return hierarchy_report(["trivial", "A1"], NL, kernel, GRID,
                            SolverConfig(seed=0, restarts=1))


def test_hierarchy_rows(hierarchy):
    assert [r.group for r in hierarchy.rows] == ["trivial", "A1"]
    assert hierarchy.rows[0].nodal_count == 1
    assert hierarchy.rows[1].nodal_count == 2
    assert hierarchy.notes == []


def test_hierarchy_inequality_holds(hierarchy):
    assert len(hierarchy.inequalities) == 1
    iq = hierarchy.inequalities[0]
    assert iq.kind == "saddle_vs_stabilizer"
    assert iq.description == "c[A1] < 2 x c[trivial]"
    assert iq.lhs == pytest.approx(hierarchy.rows[1].energy)
    assert iq.rhs == pytest.approx(2.0 * hierarchy.rows[0].energy)
    assert iq.holds
    assert hierarchy.all_hold


def test_hierarchy_serialization(hierarchy):
    d = hierarchy.to_json_dict()
    assert set(d) == {"rows", "inequalities", "notes", "all_hold"}
    assert d["all_hold"] is True
    json.dumps(d)
    text = hierarchy.to_text()
    assert "c[A1]" in text and "[ok]" in text
