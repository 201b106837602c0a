import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triobench.analysis import (
    BayesComparison,
    SolutionRecord,
    VECTORS,
    average_rank_solution,
    bayes_sign_test,
    classify_outcome,
    optimization_path,
    percentage_diff,
    read_results,
    select_baseline,
    three_way_comparison,
    write_results,
)


def rec(dataset="d1", variant="v1", method="PrivateSMOTE", algorithm="Logit",
        fairness_method="agnostic", accuracy=0.8, eq=0.2, risk=0.3):
    return SolutionRecord(
        dataset=dataset, variant_id=variant, method=method, params="{}",
        algorithm=algorithm, fairness_method=fairness_method,
        accuracy=accuracy, eq_odds_diff=eq, linkage_risk=risk,
    )


class TestPercentageDiff:
    def test_identity(self):
        assert percentage_diff(0.37, 0.37) == 0.0

    def test_gain(self):
        assert percentage_diff(0.9, 0.8) == pytest.approx(12.5)

    def test_loss(self):
        assert percentage_diff(0.4, 0.8) == pytest.approx(-50.0)

    def test_zero_baseline_sentinel(self):
        assert percentage_diff(0.5, 0.0) == math.inf
        assert percentage_diff(-0.5, 0.0) == -math.inf
        assert percentage_diff(0.0, 0.0) == 0.0

    @given(st.floats(min_value=1e-6, max_value=1.0))
    @settings(max_examples=50, deadline=None)
    def test_identity_for_all_nonzero(self, r):
        assert percentage_diff(r, r) == 0.0


class TestSelectBaseline:
    def test_single_record(self):
        r = rec()
        for vector in VECTORS:
            assert select_baseline([r], vector)["d1"] is r

    def test_argmax_accuracy(self):
        rs = [rec(variant="a", accuracy=0.7), rec(variant="b", accuracy=0.9),
              rec(variant="c", accuracy=0.8)]
        assert select_baseline(rs, "performance")["d1"].variant_id == "b"

    def test_fairness_tie_breaks_lexicographically(self):
        rs = [rec(variant="zeta", eq=0.1), rec(variant="alpha", eq=0.1),
              rec(variant="mid", eq=0.5)]
        assert select_baseline(rs, "fairness")["d1"].variant_id == "alpha"

    def test_per_dataset(self):
        rs = [rec(dataset="d1", variant="a", risk=0.9),
              rec(dataset="d1", variant="b", risk=0.1),
              rec(dataset="d2", variant="c", risk=0.5)]
        out = select_baseline(rs, "privacy")
        assert out["d1"].variant_id == "b" and out["d2"].variant_id == "c"


class TestOptimizationPath:
    def test_all_identical_draws(self):
        rs = [rec(variant=f"v{i}") for i in range(5)]
        rep = optimization_path(rs, "performance", "fairness")
        (fam,) = rep.families
        assert fam.draw == 1.0 and fam.win == 0.0 and fam.loss == 0.0
        assert fam.companion_draw == 1.0

    def test_three_of_four_fairness_wins(self):
        baseline = rec(variant="base", accuracy=0.95, eq=0.4)
        others = [rec(variant=f"v{i}", accuracy=0.5, eq=0.1) for i in range(3)]
        others.append(rec(variant="v3", accuracy=0.5, eq=0.9))
        rep = optimization_path([baseline] + others, "performance", "fairness")
        (fam,) = rep.families
        assert fam.n == 4
        assert fam.win == pytest.approx(0.75)
        assert fam.loss == pytest.approx(0.25)

    def test_win_draw_loss_sum_to_one(self):
        rng = np.random.default_rng(3)
        rs = [rec(variant=f"v{i}", accuracy=rng.uniform(0.5, 1), eq=rng.uniform(0, 1),
                  risk=rng.uniform(0, 1),
                  fairness_method=("agnostic", "eg")[i % 2]) for i in range(20)]
        rep = optimization_path(rs, "privacy", "performance")
        for fam in rep.families:
            assert fam.win + fam.draw + fam.loss == pytest.approx(1.0, abs=1e-9)
            assert (fam.companion_win + fam.companion_draw + fam.companion_loss
                    == pytest.approx(1.0, abs=1e-9))

    def test_counting_oracle_on_random_records(self):
        rng = np.random.default_rng(4)
        rs = [rec(variant=f"v{i}", accuracy=round(rng.uniform(0.5, 1), 3),
                  eq=round(rng.uniform(0, 1), 3), risk=round(rng.uniform(0, 1), 3))
              for i in range(20)]
        rep = optimization_path(rs, "performance", "fairness")
        base = max(rs, key=lambda r: (r.accuracy, [-ord(c) for c in r.variant_id]))
        # recount by hand
        wins = draws = losses = 0
        for r in rs:
            if r is base:
                continue
            if r.eq_odds_diff == base.eq_odds_diff:
                draws += 1
            elif r.eq_odds_diff < base.eq_odds_diff:
                wins += 1
            else:
                losses += 1
        (fam,) = rep.families
        n = len(rs) - 1
        assert fam.n == n
        assert fam.win == pytest.approx(wins / n)
        assert fam.draw == pytest.approx(draws / n)
        assert fam.loss == pytest.approx(losses / n)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(5)
        rs = [rec(variant=f"v{i}", accuracy=rng.uniform(0.5, 1), eq=rng.uniform(0, 1),
                  risk=rng.uniform(0, 1)) for i in range(12)]
        rep_a = optimization_path(rs, "fairness", "privacy")
        rep_b = optimization_path(list(reversed(rs)), "fairness", "privacy")
        assert rep_a == rep_b

    def test_rope_slack_turns_small_diffs_into_draws(self):
        baseline = rec(variant="base", accuracy=0.95, eq=0.400)
        near = rec(variant="near", accuracy=0.5, eq=0.401)
        rep = optimization_path([baseline, near], "performance", "fairness", rope_pp=1.0)
        assert rep.families[0].draw == 1.0

    def test_orientation_correctness(self):
        assert classify_outcome(0.9, 0.8, higher_is_better=True) == "win"
        assert classify_outcome(0.9, 0.8, higher_is_better=False) == "loss"
        # negating a higher-is-better metric and flipping the flag flips nothing
        for cand, base in ((0.3, 0.6), (0.6, 0.3), (0.5, 0.5)):
            a = classify_outcome(cand, base, True)
            # scale-invariant: percentage diffs change sign under negation
            b = classify_outcome(-cand, -base, False)
            assert a == b


class TestAverageRank:
    def test_dominant_record_selected(self):
        best = rec(variant="best", accuracy=0.99, eq=0.01, risk=0.01)
        rest = [rec(variant=f"v{i}", accuracy=0.5, eq=0.5, risk=0.5) for i in range(3)]
        assert average_rank_solution([best] + rest)["d1"] is best

    def test_mean_rank_arithmetic(self):
        a = rec(variant="a", accuracy=0.9, eq=0.5, risk=0.5)  # ranks (1, 2, 2)
        b = rec(variant="b", accuracy=0.8, eq=0.1, risk=0.1)  # ranks (2, 1, 1)
        assert average_rank_solution([a, b])["d1"] is b

    def test_matches_naive_ranking_oracle(self):
        rng = np.random.default_rng(6)
        rs = [rec(variant=f"v{i:02d}", accuracy=round(rng.uniform(0.5, 1), 3),
                  eq=round(rng.uniform(0, 1), 3), risk=round(rng.uniform(0, 1), 3))
              for i in range(10)]
        got = average_rank_solution(rs)["d1"]

        def naive_rank(values):
            order = {}
            for v in values:
                smaller = sum(1 for u in values if u < v)
                equal = sum(1 for u in values if u == v)
                order[v] = smaller + (equal + 1) / 2.0
            return [order[v] for v in values]

        accs = naive_rank([-r.accuracy for r in rs])
        eqs = naive_rank([r.eq_odds_diff for r in rs])
        risks = naive_rank([r.linkage_risk for r in rs])
        means = [(a + e + k) / 3 for a, e, k in zip(accs, eqs, risks)]
        expected = min(range(10), key=lambda i: (means[i], rs[i].variant_id))
        assert got is rs[expected]


class TestBayesSignTest:
    def test_all_zero_diffs_concentrate_on_rope(self):
        out = bayes_sign_test([0.0] * 20, rope=(-1, 1), seed=0)
        assert out.p_rope > 0.95

    def test_large_positive_diffs_win(self):
        out = bayes_sign_test([50.0, 60.0, 40.0], rope=(-1, 1), seed=0)
        assert out.p_win > 0.8

    def test_symmetric_diffs_balanced(self):
        out = bayes_sign_test([-10.0, 10.0], rope=(-1, 1), seed=0)
        assert abs(out.p_win - out.p_loss) < 0.05

    def test_direction_flips_win_and_loss(self):
        hi = bayes_sign_test([50.0, 60.0], rope=(-1, 1), seed=0, direction="higher")
        lo = bayes_sign_test([50.0, 60.0], rope=(-1, 1), seed=0, direction="lower")
        assert hi.p_win == lo.p_loss and hi.p_loss == lo.p_win

    def test_doubling_samples_is_stable(self):
        diffs = [-3.0, 2.0, 0.5, 4.0, -0.2, 1.5, 0.9]
        a = bayes_sign_test(diffs, mc_samples=30_000, seed=1)
        b = bayes_sign_test(diffs, mc_samples=60_000, seed=1)
        assert abs(a.p_win - b.p_win) < 0.01
        assert abs(a.p_rope - b.p_rope) < 0.01
        assert abs(a.p_loss - b.p_loss) < 0.01

    def test_deterministic_per_seed(self):
        diffs = [3.0, -2.0, 0.1]
        assert bayes_sign_test(diffs, seed=7) == bayes_sign_test(diffs, seed=7)

    def test_non_finite_excluded_and_counted(self):
        out = bayes_sign_test([math.inf, 5.0, 5.0], seed=0)
        assert out.n_diffs == 2 and out.n_excluded == 1
        with pytest.raises(ValueError):
            bayes_sign_test([math.inf, -math.inf], seed=0)

    def test_probabilities_sum_to_one(self):
        out = bayes_sign_test([1.5, -4.0, 0.0, 2.0], seed=3)
        assert out.p_win + out.p_rope + out.p_loss == pytest.approx(1.0, abs=1e-9)


class TestThreeWay:
    def _fixture_records(self):
        rng = np.random.default_rng(8)
        records = []
        for ds in [f"ds{i}" for i in range(7)]:
            for fam, variant in itertools.product(("agnostic", "eg"), ("v1", "v2", "v3")):
                records.append(rec(
                    dataset=ds, variant=variant, fairness_method=fam,
                    accuracy=round(rng.uniform(0.6, 1), 3),
                    eq=round(rng.uniform(0, 0.6), 3),
                    risk=round(rng.uniform(0, 1), 3)))
        return records

    def test_balanced_equals_baselines_means_rope(self):
        records = [rec(dataset=f"ds{i}", variant="only") for i in range(10)]
        out = three_way_comparison(records, seed=0)
        for key, comparison in out.items():
            assert comparison.p_rope > 0.9

    def test_single_dataset_posterior_is_wide(self):
        records = [rec(variant="a", accuracy=0.9, eq=0.3, risk=0.2),
                   rec(variant="b", accuracy=0.7, eq=0.1, risk=0.6)]
        out = three_way_comparison(records, seed=1)
        for comparison in out.values():
            assert max(comparison.p_win, comparison.p_rope, comparison.p_loss) < 0.9

    def test_matches_independent_recount_and_rerun(self):
        records = self._fixture_records()
        out = three_way_comparison(records, seed=5)
        # independent recount for one (family, vector) pair
        fam = "agnostic@PrivateSMOTE"
        fam_records = [r for r in records if r.family == fam]
        cands = average_rank_solution(fam_records)
        baselines = select_baseline(records, "fairness")
        diffs = []
        for ds in sorted(cands):
            diffs.append(percentage_diff(cands[ds].eq_odds_diff,
                                         baselines[ds].eq_odds_diff))
        from triobench.seeding import derive_seed

        expected = bayes_sign_test(diffs, rope=(-1.0, 1.0), mc_samples=30_000,
                                   seed=derive_seed(5, "bayes", fam, "fairness"),
                                   direction="lower")
        assert out[(fam, "fairness")] == expected

    def test_shape_matches_families_times_vectors(self):
        records = self._fixture_records()
        out = three_way_comparison(records, seed=2)
        families = {r.family for r in records}
        assert set(out) == {(f, v) for f in families for v in VECTORS}


class TestResultsIO:
    def test_round_trip(self, tmp_path):
        rs = [rec(variant="a"), rec(variant="b", eq=None)]
        path = tmp_path / "results.csv"
        write_results(rs, path)
        back = read_results(path)
        assert back == rs

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("dataset,variant_id\nx,y\n")
        with pytest.raises(ValueError, match="missing columns"):
            read_results(path)
