"""Key partition, decision rule and boundary table tests."""

import math

import numpy as np
import pytest

from keytrial.keys import (
    NEVER_ESCALATE,
    Decision,
    DesignTables,
    _pick_strongest,
    build_decision_table,
    build_keys,
    decide,
    decide_three_key,
    should_eliminate,
    strongest_key,
)

# Frozen boundary rows for the two standard designs (n = 1..16).
TABLE_PHI02 = {
    "escalate": (0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2),
    "deescalate": (1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 3, 4, 4, 4),
}
TABLE_PHI03 = {
    "escalate": (0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3),
    "deescalate": (1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4, 5, 5, 5, 6, 6),
}


def key_probs_by_quadrature(n, y, edges, points=200_001):
    """Independent per-key posterior masses via trapezoid integration."""
    a, b = y + 1.0, n - y + 1.0
    log_norm = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        t = np.linspace(lo, hi, points)
        pdf = np.power(t, a - 1.0) * np.power(1.0 - t, b - 1.0) / math.exp(log_norm)
        out.append(float(np.trapezoid(pdf, t)))
    return out


class TestBuildKeys:
    def test_nine_keys_for_phi02_eps005(self):
        p = build_keys(0.2, 0.05, 0.05)
        assert p.n_keys == 9
        assert p.target_index == 1
        np.testing.assert_allclose(p.keys[0], (0.05, 0.15), atol=1e-12)
        np.testing.assert_allclose(p.target_key, (0.15, 0.25), atol=1e-12)
        np.testing.assert_allclose(p.keys[-1], (0.85, 0.95), atol=1e-12)

    def test_phi02_eps003_layout(self):
        p = build_keys(0.2, 0.03, 0.03)
        np.testing.assert_allclose(p.target_key, (0.17, 0.23), atol=1e-12)
        np.testing.assert_allclose(p.keys[0], (0.05, 0.11), atol=1e-12)
        np.testing.assert_allclose(p.keys[-1], (0.89, 0.95), atol=1e-12)
        assert p.n_keys == 15

    def test_phi03_target(self):
        p = build_keys(0.3, 0.05, 0.05)
        np.testing.assert_allclose(p.target_key, (0.25, 0.35), atol=1e-12)

    def test_keys_contiguous_equal_width(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            phi = float(rng.uniform(0.05, 0.6))
            eps1 = float(rng.uniform(0.01, 0.1))
            eps2 = float(rng.uniform(0.01, 0.1))
            if phi - eps1 <= 0 or phi + eps2 >= 1:
                continue
            p = build_keys(phi, eps1, eps2)
            widths = np.diff(p.edges)
            np.testing.assert_allclose(widths, eps1 + eps2, atol=1e-12)
            # residual stubs at the ends are narrower than a key
            assert p.edges[0] < eps1 + eps2
            assert 1.0 - p.edges[-1] < eps1 + eps2
            lo, hi = p.target_key
            assert lo == pytest.approx(phi - eps1, abs=1e-12)
            assert hi == pytest.approx(phi + eps2, abs=1e-12)

    def test_rejects_target_key_outside_unit_interval(self):
        with pytest.raises(ValueError):
            build_keys(0.05, 0.06, 0.05)
        with pytest.raises(ValueError):
            build_keys(0.97, 0.02, 0.05)
        with pytest.raises(ValueError):
            build_keys(0.2, 0.0, 0.05)


class TestStrongestKey:
    def test_figure_of_merit_case(self):
        p = build_keys(0.2, 0.05, 0.05)
        idx = strongest_key((5, 2), p)
        np.testing.assert_allclose(p.keys[idx], (0.35, 0.45), atol=1e-12)

    def test_no_data_ties_resolve_to_target(self):
        for phi, eps in [(0.2, 0.05), (0.3, 0.05), (0.25, 0.03)]:
            p = build_keys(phi, eps, eps)
            assert strongest_key((0, 0), p) == p.target_index

    def test_clean_record_picks_lowest_key(self):
        p = build_keys(0.2, 0.05, 0.05)
        assert strongest_key((20, 0), p) == 0
        oracle = key_probs_by_quadrature(20, 0, p.edges)
        assert int(np.argmax(oracle)) == 0

    def test_matches_quadrature_argmax(self):
        p = build_keys(0.3, 0.05, 0.05)
        rng = np.random.default_rng(5)
        for _ in range(25):
            n = int(rng.integers(1, 25))
            y = int(rng.integers(0, n + 1))
            oracle = key_probs_by_quadrature(n, y, p.edges)
            # skip near-ties: quadrature noise could flip those
            ranked = sorted(oracle, reverse=True)
            if ranked[0] - ranked[1] < 1e-6:
                continue
            assert strongest_key((n, y), p) == int(np.argmax(oracle))

    def test_tie_rule_prefers_target_then_higher_side(self):
        # crafted probability rows exercise the resolution order directly
        probs = np.array([[0.2, 0.2, 0.2, 0.2, 0.2]])
        assert _pick_strongest(probs, 2)[0] == 2
        probs = np.array([[0.1, 0.3, 0.1, 0.3, 0.1]])  # 1 and 3 equidistant from 2
        assert _pick_strongest(probs, 2)[0] == 3  # higher-toxicity side wins
        probs = np.array([[0.3, 0.1, 0.1, 0.1, 0.3]])
        assert _pick_strongest(probs, 2)[0] == 4
        probs = np.array([[0.1, 0.3, 0.3, 0.1, 0.1]])  # target among the tied
        assert _pick_strongest(probs, 2)[0] == 2


class TestDecide:
    def test_examples(self):
        p03 = build_keys(0.3, 0.05, 0.05)
        assert decide((3, 0), p03) is Decision.ESCALATE
        assert decide((3, 1), p03) is Decision.RETAIN
        p02 = build_keys(0.2, 0.05, 0.05)
        assert decide((5, 2), p02) is Decision.DEESCALATE

    def test_monotone_in_y(self):
        order = {Decision.ESCALATE: 0, Decision.RETAIN: 1, Decision.DEESCALATE: 2}
        for phi, eps in [(0.2, 0.03), (0.3, 0.05), (0.25, 0.07)]:
            p = build_keys(phi, eps, eps)
            for n in range(1, 31):
                codes = [order[decide((n, y), p)] for y in range(n + 1)]
                assert codes == sorted(codes)

    def test_long_memory_coherence_small(self):
        for phi, eps in [(0.2, 0.03), (0.3, 0.05)]:
            p = build_keys(phi, eps, eps)
            for n in range(1, 21):
                for y in range(n + 1):
                    d = decide((n, y), p)
                    if y / n > phi:
                        assert d is not Decision.ESCALATE
                    if y / n < phi:
                        assert d is not Decision.DEESCALATE


class TestDecideThreeKey:
    def test_matches_full_rule_on_examples(self):
        p = build_keys(0.3, 0.05, 0.05)
        assert decide_three_key((3, 0), 0.3, 0.05, 0.05) is Decision.ESCALATE
        assert decide_three_key((3, 0), 0.3, 0.05, 0.05) is decide((3, 0), p)
        assert decide_three_key((16, 6), 0.3, 0.05, 0.05) is Decision.DEESCALATE

    def test_no_data_retains(self):
        assert decide_three_key((0, 0), 0.25, 0.05, 0.04) is Decision.RETAIN

    def test_equivalence_small_grid(self):
        rng = np.random.default_rng(17)
        done = 0
        while done < 10:
            phi = float(rng.uniform(0.15, 0.5))
            eps1 = float(rng.uniform(0.01, 0.08))
            eps2 = float(rng.uniform(0.01, 0.08))
            if phi - 2 * eps1 - eps2 <= 0 or phi + eps1 + 2 * eps2 >= 1:
                continue
            done += 1
            p = build_keys(phi, eps1, eps2)
            for n in range(0, 16):
                for y in range(n + 1):
                    assert decide_three_key((n, y), phi, eps1, eps2) is decide(
                        (n, y), p
                    )

    def test_precondition_enforced(self):
        with pytest.raises(ValueError):
            decide_three_key((3, 1), 0.1, 0.04, 0.04)  # phi - 2e1 - e2 <= 0
        with pytest.raises(ValueError):
            decide_three_key((3, 1), 0.9, 0.04, 0.04)  # phi + e1 + 2e2 >= 1


class TestDecisionTable:
    def test_phi02_eps003_rows(self):
        t = build_decision_table(0.2, 0.03, 0.03, 16)
        assert t.escalate_if_at_most == TABLE_PHI02["escalate"]
        assert t.deescalate_if_at_least == TABLE_PHI02["deescalate"]

    def test_phi03_eps005_rows(self):
        t = build_decision_table(0.3, 0.05, 0.05, 16)
        assert t.escalate_if_at_most == TABLE_PHI03["escalate"]
        assert t.deescalate_if_at_least == TABLE_PHI03["deescalate"]

    def test_single_clean_patient_escalates(self):
        for phi, eps in [(0.2, 0.03), (0.2, 0.05), (0.3, 0.05), (0.25, 0.04)]:
            t = build_decision_table(phi, eps, eps, 1)
            assert t.escalate_if_at_most[0] == 0

    def test_rows_are_consistent_total_orders(self):
        t = build_decision_table(0.3, 0.05, 0.05, 40)
        esc, de = t.escalate_if_at_most, t.deescalate_if_at_least
        for n in range(1, 41):
            assert esc[n - 1] < de[n - 1]
        assert list(esc) == sorted(esc)
        assert list(de) == sorted(de)

    def test_never_boundaries_encoding(self):
        # a tiny n with an aggressive target never de-escalates at y=0 only
        t = build_decision_table(0.3, 0.05, 0.05, 2)
        assert t.deescalate_if_at_least[0] == 1  # n=1: one DLT de-escalates
        assert NEVER_ESCALATE == -1

    def test_export_formats(self):
        t = build_decision_table(0.3, 0.05, 0.05, 3)
        csv_text = t.to_csv()
        assert csv_text.splitlines()[0] == "n,escalate_le,deescalate_ge"
        assert csv_text.splitlines()[1] == "1,0,1"
        doc = t.to_json_dict()
        assert doc["rows"][2] == {"n": 3, "escalate_le": 0, "deescalate_ge": 2}
        assert "| n |" in t.to_markdown()


class TestShouldEliminate:
    def test_examples(self):
        assert should_eliminate((3, 3), 0.3, 0.95) is True
        assert should_eliminate((3, 2), 0.3, 0.95) is False  # 0.9163 < 0.95
        for phi in (0.1, 0.2, 0.3, 0.5):
            assert should_eliminate((0, 0), phi, 0.95) is False

    def test_dominance_in_y(self):
        for n in range(1, 25):
            flags = [should_eliminate((n, y), 0.3, 0.95) for y in range(n + 1)]
            for a, b in zip(flags, flags[1:]):
                assert b or not a  # once true, stays true as y grows

    def test_cutoff_domain(self):
        with pytest.raises(ValueError):
            should_eliminate((3, 3), 0.3, 0.0)
        with pytest.raises(ValueError):
            should_eliminate((3, 3), 0.3, 1.0)


class TestDesignTables:
    def test_matches_decision_table(self):
        p = build_keys(0.3, 0.05, 0.05)
        tables = DesignTables(p, 0.95)
        t = build_decision_table(0.3, 0.05, 0.05, 16)
        for n in range(1, 17):
            assert tables.boundaries(n) == t.row(n)

    def test_bisect_agrees_with_scan(self):
        p = build_keys(0.3, 0.05, 0.05)
        scan = DesignTables(p, 0.95, scan_limit=2000)
        bisect = DesignTables(p, 0.95, scan_limit=0)
        for n in [1, 2, 3, 7, 19, 40, 97, 300, 643, 1001]:
            assert scan.boundaries(n) == bisect.boundaries(n)
            assert scan.elim_min_dlt(n) == bisect.elim_min_dlt(n)

    def test_elimination_boundary(self):
        p = build_keys(0.3, 0.05, 0.05)
        tables = DesignTables(p, 0.95)
        # n=3: y=3 eliminates (0.9919 >= 0.95), y=2 does not (0.9163)
        assert tables.elim_min_dlt(3) == 3
        # n=2: Beta(3,1) tail above 0.3 = 0.973 >= 0.95
        assert tables.elim_min_dlt(2) == 2

    def test_target_key_prob_matches_kernel(self):
        from keytrial.betaprob import posterior_interval_prob

        p = build_keys(0.2, 0.03, 0.03)
        tables = DesignTables(p, 0.95)
        lo, hi = p.target_key
        for n, y in [(0, 0), (3, 1), (10, 2), (16, 5)]:
            assert tables.target_key_prob(n, y) == pytest.approx(
                posterior_interval_prob(lo, hi, (n, y)), abs=1e-15
            )
