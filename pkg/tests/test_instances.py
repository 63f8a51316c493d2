import math

import numpy as np
import pytest

from dsvrptw.instances import (CLASS_PROFILES, ParseError, UnsupportedClassError,
                               ValidationError, build_nonanticipation_fixture,
                               generate_dynamic_instance, make_synthetic_base,
                               parse_static_instance, read_dynamic_instance,
                               slice_bounds, truncate_tenth,
                               write_dynamic_instance)

SIMPLE = """\
example

VEHICLE
NUMBER  CAPACITY
2  50

CUSTOMER
CUST NO.  XCOORD.  YCOORD.  DEMAND  READY  DUE  SERVICE
0  0  0  0  1  100  0
1  3  4  10  5  5  1
"""


def solomon_text(rows, vehicles=2, capacity=50):
    lines = [f"{vehicles} {capacity}"]
    for r in rows:
        lines.append(" ".join(str(x) for x in r))
    return "\n".join(lines)


def test_parse_triangle_travel_time():
    inst = parse_static_instance(SIMPLE)
    assert inst.travel[0][1] == 5.0
    assert inst.travel[1][0] == 5.0


def test_parse_window_passthrough():
    inst = parse_static_instance(SIMPLE)
    assert inst.tw_early[1] == 5 and inst.tw_late[1] == 5
    assert inst.service[1] == 1
    assert inst.vehicle_count == 2 and inst.capacity == 50.0
    assert len(inst.deterministic_requests) == 1
    assert inst.deterministic_requests[0].vertex == 1


def test_parse_hundred_customers():
    rows = [(0, 50, 50, 0, 1, 480, 0)]
    rng = np.random.default_rng(0)
    for i in range(1, 101):
        x, y = rng.integers(0, 100, size=2)
        rows.append((i, int(x), int(y), 10, 1, 400, 10))
    inst = parse_static_instance(solomon_text(rows, vehicles=25, capacity=200))
    assert inst.n == 100
    assert len(inst.deterministic_requests) == 100


def test_parse_malformed_row_reports_line():
    text = "2 50\n0 0 0 0 1 100 0\n1 3 4\n"
    with pytest.raises(ParseError) as err:
        parse_static_instance(text)
    assert err.value.line == 3


def test_parse_duplicate_vertex_id():
    rows = [(0, 0, 0, 0, 1, 100, 0), (1, 1, 1, 5, 1, 50, 1), (1, 2, 2, 5, 1, 50, 1)]
    with pytest.raises(ValidationError):
        parse_static_instance(solomon_text(rows))


def test_truncation_one_decimal():
    assert truncate_tenth(1.26) == 1.2
    assert truncate_tenth(5.0) == 5.0
    assert truncate_tenth(math.hypot(3, 4)) == 5.0


def test_class_profile_rows_match_published_table():
    assert (CLASS_PROFILES[6].p_initial, CLASS_PROFILES[6].p_early,
            CLASS_PROFILES[6].p_late) == (0.0, 0.3, 0.7)
    assert (CLASS_PROFILES[4].p_initial, CLASS_PROFILES[4].p_early,
            CLASS_PROFILES[4].p_late) == (0.2, 0.2, 0.6)
    for cid in (1, 2, 3):
        assert (CLASS_PROFILES[cid].p_initial, CLASS_PROFILES[cid].p_early,
                CLASS_PROFILES[cid].p_late) == (0.5, 0.25, 0.25)
    assert CLASS_PROFILES[5].p_late == 0.8
    assert CLASS_PROFILES[6].dod == 1.0


def test_generate_deterministic_in_seed():
    base = make_synthetic_base(8, seed=1, horizon=120)
    a = generate_dynamic_instance(base, CLASS_PROFILES[6], seed=9, horizon=120)
    b = generate_dynamic_instance(base, CLASS_PROFILES[6], seed=9, horizon=120)
    assert write_dynamic_instance(a, None) == write_dynamic_instance(b, None)


def test_generate_class5_unsupported():
    base = make_synthetic_base(4, seed=1, horizon=120)
    with pytest.raises(UnsupportedClassError):
        generate_dynamic_instance(base, CLASS_PROFILES[5], seed=1)


def test_generate_unknown_class():
    base = make_synthetic_base(4, seed=1, horizon=120)
    bad = CLASS_PROFILES[6].__class__(class_id=9, dod=1.0, p_initial=0.0,
                                      p_early=0.3, p_late=0.7)
    with pytest.raises(ValueError):
        generate_dynamic_instance(base, bad, seed=1)


def test_generate_reveals_respect_slices():
    base = make_synthetic_base(10, seed=2, horizon=480)
    s1, s2 = slice_bounds(480)
    for seed in range(30):
        for cid in (1, 4, 6):
            inst = generate_dynamic_instance(base, CLASS_PROFILES[cid], seed=seed)
            for req in inst.dynamic_requests:
                assert 1 <= req.reveal_epoch <= s2
            assert inst.horizon == 480
    assert (s1, s2) == (160, 320)


def test_generate_probability_matrix_spread():
    base = make_synthetic_base(5, seed=3, horizon=480)
    inst = generate_dynamic_instance(base, CLASS_PROFILES[4], seed=0)
    p = inst.reveal_prob
    assert np.allclose(p[1:161, 1:], 0.2 / 160)
    assert np.allclose(p[161:321, 1:], 0.6 / 160)
    assert np.all(p[321:, :] == 0.0)
    assert np.all(p[:, 0] == 0.0)


def test_generate_dod_converges_to_probability_nominal():
    # Realized dynamic fraction converges to the fraction implied by the
    # probability rows (the printed DOD labels are not derivable from them).
    base = make_synthetic_base(12, seed=4, horizon=120)
    profile = CLASS_PROFILES[4]
    n_seeds = 250
    dyn = det = 0
    for seed in range(n_seeds):
        inst = generate_dynamic_instance(base, profile, seed=seed, horizon=120)
        dyn += len(inst.dynamic_requests)
        det += len(inst.deterministic_requests)
    frac = dyn / (dyn + det)
    nominal = profile.dynamic_fraction
    draws = n_seeds * base.n
    sigma = math.sqrt(nominal * (1 - nominal) / draws)
    assert abs(frac - nominal) < 3 * sigma
    assert nominal == pytest.approx(0.8)


def test_generate_arrival_indices_unique_per_epoch():
    base = make_synthetic_base(30, seed=5, horizon=120)
    inst = generate_dynamic_instance(base, CLASS_PROFILES[6], seed=2, horizon=120)
    seen = set()
    for req in inst.dynamic_requests:
        key = (req.reveal_epoch, req.arrival_index)
        assert key not in seen
        seen.add(key)


def test_fixture_shape():
    inst = build_nonanticipation_fixture()
    assert inst.n == 8 and inst.vehicle_count == 1
    assert inst.travel[0][1] == 2.0 and inst.travel[0][2] == 2.0
    assert inst.travel[1][3] == 2.0 and inst.travel[2][4] == 2.0
    assert inst.travel[3][1] == 20.0  # arcs are directed
    assert inst.travel[0][3] == 20.0
    assert list(inst.tw_late[3:]) == [5, 7, 9, 5, 7, 9]
    assert np.all(inst.service == 0)


def test_dynamic_file_roundtrip(tmp_path):
    base = make_synthetic_base(6, seed=6, horizon=120)
    inst = generate_dynamic_instance(base, CLASS_PROFILES[1], seed=5, horizon=120)
    path = tmp_path / "inst.txt"
    text = write_dynamic_instance(inst, path)
    again = read_dynamic_instance(path.read_text())
    assert write_dynamic_instance(again, None) == text
    assert again.n == inst.n
    assert again.deterministic_requests == inst.deterministic_requests
    assert again.dynamic_requests == inst.dynamic_requests
    assert np.allclose(again.travel, inst.travel)
    assert np.allclose(again.reveal_prob, inst.reveal_prob)
