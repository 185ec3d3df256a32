import json

import numpy as np
import pytest

from spice.exceptions import DataValidationError
from spice.ice import GroupMovement, IceSummary, Transition, annotate_geojson, bootstrap_ice, ice_from_proportions, \
    raw_ice, sign_change_report, sign_changes, transition_counts
from spice.model import CountyObservation
from spice.utils import percentile_interval

OBS = [CountyObservation('13001', 30, 10, 100, 'Appling'), CountyObservation('13003', 5, 20, 50, 'Atkinson'),
       CountyObservation('13005', 12, 12, 40, 'Bacon')]


def summary(estimate, p1=None, p2=None, unit_ids=('1', '2', '3'), method='local3'):
    estimate = np.asarray(estimate, dtype=float)
    p1 = estimate / 2 + 0.5 if p1 is None else np.asarray(p1, dtype=float)
    p2 = p1 - estimate if p2 is None else np.asarray(p2, dtype=float)
    return IceSummary(method, unit_ids, estimate, estimate - 0.1, estimate + 0.1,
                      (estimate.mean(), estimate.mean() - 0.1, estimate.mean() + 0.1), p1, p2)


@pytest.mark.parametrize(
    "y1, y2, n, expected",
    [
        [30, 30, 100, 0],
        [80, 0, 80, 1],
        [0, 25, 25, -1],
        [30, 10, 100, 0.2],
    ],
)
def test_raw_ice(y1, y2, n, expected):
    assert raw_ice(CountyObservation('1', y1, y2, n)) == pytest.approx(expected)


def test_raw_ice_range():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 500))
        y1 = int(rng.integers(0, n + 1))
        y2 = int(rng.integers(0, n - y1 + 1))
        assert -1 <= raw_ice(CountyObservation('1', y1, y2, n)) <= 1


def test_percentile_interval_formula():
    values = np.arange(1, 1001, dtype=float)
    rng = np.random.default_rng(1)
    lower, upper = percentile_interval(rng.permutation(values))
    # h = (m - 1) q, value = x[floor(h)] + (h - floor(h)) (x[floor(h) + 1] - x[floor(h)]) with 0-based x
    for bound, q in ((lower, 0.025), (upper, 0.975)):
        h = 999 * q
        k = int(np.floor(h))
        assert bound == pytest.approx(values[k] + (h - k) * (values[k + 1] - values[k]), abs=1e-12)
    assert lower == pytest.approx(25.975) and upper == pytest.approx(975.025)


def test_bootstrap_point_estimate_is_county_mean():
    result = bootstrap_ice(OBS, 500, np.random.default_rng(2))
    raw = np.array([raw_ice(o) for o in OBS])
    np.testing.assert_array_equal(result.estimate, raw)
    assert result.statewide[0] == np.mean(raw)
    assert result.method == 'bootstrap'
    assert result.names == ('Appling', 'Atkinson', 'Bacon')
    np.testing.assert_allclose(result.p_group1, [0.3, 0.1, 0.3])
    assert np.all(result.lower <= result.estimate) and np.all(result.estimate <= result.upper)


def test_bootstrap_degenerate_county():
    result = bootstrap_ice([CountyObservation('1', 40, 0, 40), CountyObservation('2', 0, 10, 10)], 200, 0)
    np.testing.assert_array_equal(result.lower, [1, -1])
    np.testing.assert_array_equal(result.upper, [1, -1])
    assert result.statewide == (0, 0, 0)


def test_bootstrap_exchangeable_counties():
    twins = [CountyObservation('1', 40, 25, 200), CountyObservation('2', 40, 25, 200)]
    result = bootstrap_ice(twins, 20000, np.random.default_rng(3))
    np.testing.assert_allclose(result.lower[0], result.lower[1], atol=0.01)
    np.testing.assert_allclose(result.upper[0], result.upper[1], atol=0.01)
    # the trinomial variance of y1/n - y2/n
    p1, p2 = 0.2, 0.125
    sd = np.sqrt((p1 + p2 - (p1 - p2) ** 2) / 200)
    np.testing.assert_allclose(result.upper[0] - result.lower[0], 2 * 1.96 * sd, rtol=0.1)


def test_bootstrap_is_reproducible():
    first, second = bootstrap_ice(OBS, 300, 9), bootstrap_ice(OBS, 300, 9)
    np.testing.assert_array_equal(first.lower, second.lower)
    assert first.statewide == second.statewide


def test_bootstrap_invalid():
    with pytest.raises(ValueError):
        bootstrap_ice(OBS, 0, 0)
    with pytest.raises(DataValidationError):
        bootstrap_ice([], 10, 0)


def test_posterior_ice_arithmetic():
    result = ice_from_proportions(np.array([[0.6], [0.8]]), np.array([[0.1], [0.1]]), ['1'], 'bym')
    assert result.estimate[0] == pytest.approx(0.6)
    assert result.statewide[0] == pytest.approx(0.6)
    np.testing.assert_allclose(result.p_group1, [0.7])


def test_posterior_ice_identical_groups():
    p = np.random.default_rng(4).uniform(0.05, 0.95, size=(50, 6))
    result = ice_from_proportions(p, p, [str(i) for i in range(6)], 'icar')
    np.testing.assert_array_equal(result.estimate, 0)
    np.testing.assert_array_equal(result.lower, 0)
    np.testing.assert_array_equal(result.upper, 0)


def test_posterior_ice_shift_invariance():
    rng = np.random.default_rng(5)
    p1, p2 = rng.uniform(0.2, 0.5, size=(100, 4)), rng.uniform(0.2, 0.5, size=(100, 4))
    ids = ['a', 'b', 'c', 'd']
    base, shifted = ice_from_proportions(p1, p2, ids, 'bym'), ice_from_proportions(p1 + 0.1, p2 + 0.1, ids, 'bym')
    np.testing.assert_allclose(shifted.estimate, base.estimate, atol=1e-12)
    np.testing.assert_allclose(shifted.lower, base.lower, atol=1e-12)
    np.testing.assert_allclose(shifted.statewide, base.statewide, atol=1e-12)


def test_posterior_ice_statewide_is_draw_wise_mean():
    p1 = np.array([[0.5, 0.1], [0.9, 0.1], [0.7, 0.3]])
    p2 = np.zeros((3, 2)) + 0.1
    result = ice_from_proportions(p1, p2, ['1', '2'], 'bym')
    assert result.statewide[0] == pytest.approx(np.median([0.2, 0.4, 0.4]))


def test_posterior_ice_mismatch():
    with pytest.raises(ValueError):
        ice_from_proportions(np.zeros((3, 2)) + 0.5, np.zeros((4, 2)) + 0.5, ['1', '2'], 'bym')


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(estimate=[0.5, 1.5], lower=[0.4, 1.4], upper=[0.6, 1.6]),
        dict(estimate=[0.5, 0.2], lower=[0.6, 0.1], upper=[0.7, 0.3]),
    ],
)
def test_summary_invariants(kwargs):
    with pytest.raises(ValueError):
        IceSummary('bym', ('1', '2'), statewide=(0, -0.1, 0.1), p_group1=[0.5, 0.5], p_group2=[0.2, 0.2], **kwargs)


@pytest.mark.parametrize(
    "statewide, valid",
    [
        [(0.3, 0.2, 0.4), True],
        [(-0.05, -0.2, 0.1), True],
        [(0.3, 0.3, 0.3), True],
        [(0.5, 0.2, 0.4), False],
        [(0.1, 0.2, 0.4), False],
        [(0.2, 0.4, 0.1), False],
    ],
)
def test_summary_statewide_is_estimate_lower_upper(statewide, valid):
    kwargs = dict(estimate=[0.3, 0.3], lower=[0.2, 0.2], upper=[0.4, 0.4], statewide=statewide,
                  p_group1=[0.5, 0.5], p_group2=[0.2, 0.2])
    if valid:
        assert IceSummary('bym', ('1', '2'), **kwargs).statewide == statewide
    else:
        with pytest.raises(ValueError):
            IceSummary('bym', ('1', '2'), **kwargs)


def test_summary_json_roundtrip(tmp_path):
    result = bootstrap_ice(OBS, 200, 0)
    result.metadata['seed'] = 0
    result.to_json(tmp_path / 'ice_summary.json')
    again = IceSummary.from_json(tmp_path / 'ice_summary.json')
    assert again.unit_ids == result.unit_ids and again.names == result.names
    np.testing.assert_allclose(again.lower, result.lower)
    assert again.statewide == result.statewide
    assert again.metadata == {'seed': 0}
    result.to_csv(tmp_path / 'ice.csv')
    assert (tmp_path / 'ice.csv').read_text().splitlines()[0] == 'fips,estimate,lower,upper,sign'


def test_summary_json_missing_field(tmp_path):
    (tmp_path / 'bad.json').write_text(json.dumps({'method': 'bym', 'counties': []}))
    with pytest.raises(DataValidationError, match='statewide'):
        IceSummary.from_json(tmp_path / 'bad.json')


def test_sign_change_identical():
    s = summary([-0.1, 0.2, 0.05])
    report = sign_change_report(s, s)
    assert sign_changes(report).empty
    assert transition_counts(report)[Transition.UNCHANGED] == 3


def test_sign_change_transitions():
    t1 = summary([-0.1, 0.2, 0.05], p1=[0.2, 0.5, 0.3], p2=[0.3, 0.3, 0.25])
    t2 = summary([0.1, -0.05, 0.07], p1=[0.3, 0.4, 0.3], p2=[0.2, 0.45, 0.23])
    report = sign_change_report(t1, t2)
    assert list(report['transition']) == [Transition.NEGATIVE_TO_POSITIVE, Transition.POSITIVE_TO_NEGATIVE,
                                          Transition.UNCHANGED]
    assert list(report['movement']) == [GroupMovement.WHITE_UP_BLACK_DOWN, GroupMovement.WHITE_DOWN_BLACK_UP,
                                        GroupMovement.BOTH_DOWN]
    assert list(sign_changes(report)['fips']) == ['1', '2']


def test_sign_change_aligns_county_order():
    t1 = summary([-0.1, 0.2, 0.05])
    t2 = summary([0.05, 0.3, -0.2][::-1], unit_ids=('3', '2', '1'))
    report = sign_change_report(t1, t2)
    np.testing.assert_allclose(report['ice_t2'], [0.05, 0.3, -0.2])


def test_sign_change_mismatch():
    with pytest.raises(DataValidationError):
        sign_change_report(summary([0.1, 0.2, 0.3]), summary([0.1, 0.2, 0.3], unit_ids=('1', '2', '4')))


def test_annotate_geojson():
    report = sign_change_report(summary([-0.1, 0.2, 0.05]), summary([0.1, 0.2, 0.05]))
    collection = {'type': 'FeatureCollection', 'features': [
        {'type': 'Feature', 'properties': {'GEOID': '1'}, 'geometry': None},
        {'type': 'Feature', 'properties': {'fips': '3'}, 'geometry': None},
    ]}
    annotated = annotate_geojson(collection, report)
    assert annotated['features'][0]['properties']['transition'] == 'negative_to_positive'
    assert annotated['features'][1]['properties']['ice_t2'] == pytest.approx(0.05)
    assert 'transition' not in collection['features'][0]['properties']


def test_annotate_geojson_missing_key():
    report = sign_change_report(summary([0.1, 0.2, 0.3]), summary([0.1, 0.2, 0.3]))
    collection = {'type': 'FeatureCollection', 'features': [
        {'type': 'Feature', 'properties': {'GEOID': '1'}},
        {'type': 'Feature', 'properties': {'NAME': 'Bacon'}},
    ]}
    with pytest.raises(DataValidationError, match='feature 1'):
        annotate_geojson(collection, report)
