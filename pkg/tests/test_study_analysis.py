"""Agreement, kappa, AI-influence classification, and the study report."""

from __future__ import annotations

import hashlib
from itertools import combinations

import numpy as np
import pytest

from ihckit.exceptions import InsufficientRaters
from ihckit.study.analysis import (
    InfluenceBreakdown,
    ai_influence,
    cohens_kappa,
    mean_pairwise_agreement,
    mean_pairwise_kappa,
    pairwise_kappas,
    round_half_away,
    study_report,
)
from ihckit.study.events import StudyEvent
from ihckit.vocab import TaskId

from test_study_events import make_config, md5_of


def event(rater, image_idx, phase, label, task=TaskId.LOCATION):
    return StudyEvent(
        rater_id=rater,
        md5=md5_of(f"img{image_idx}"),
        task=task,
        phase=phase,
        label=label,
        timestamp=0.0,
    )


class TestRounding:
    def test_ties_away_from_zero(self):
        assert round_half_away(0.25) == 0.3
        assert round_half_away(0.35) == 0.4
        assert round_half_away(34.25) == 34.3

    def test_plain_cases(self):
        assert round_half_away(34.26) == 34.3
        assert round_half_away(34.24) == 34.2


class TestAgreement:
    def test_three_raters_hand_case(self):
        # labels (A, A, B) on one image: pairs agree 1, 0, 0 -> mean 1/3
        events = [
            event("r1", 0, "initial", 0),
            event("r2", 0, "initial", 0),
            event("r3", 0, "initial", 1),
        ]
        got = mean_pairwise_agreement(events, TaskId.LOCATION, "initial")
        assert got == pytest.approx(1 / 3)

    def test_pair_count_eight_raters(self):
        events = [
            event(f"r{i}", j, "initial", (i + j) % 4)
            for i in range(8)
            for j in range(3)
        ]
        raters = {e.rater_id for e in events}
        assert len(list(combinations(sorted(raters), 2))) == 28
        # runs without error over all 28 pairs
        mean_pairwise_agreement(events, TaskId.LOCATION, "initial")

    def test_no_shared_images(self):
        events = [event("r1", 0, "initial", 0), event("r2", 1, "initial", 0)]
        with pytest.raises(InsufficientRaters):
            mean_pairwise_agreement(events, TaskId.LOCATION, "initial")


class TestKappa:
    def test_identical_varied_labelers(self):
        labels = {md5_of(f"img{i}"): i % 4 for i in range(8)}
        assert cohens_kappa(labels, dict(labels)) == pytest.approx(1.0)

    def test_independent_uniform_near_zero(self):
        rng = np.random.default_rng(0)
        n = 10_000
        a = {md5_of(f"img{i}"): int(rng.integers(0, 4)) for i in range(n)}
        b = {md5_of(f"img{i}"): int(rng.integers(0, 4)) for i in range(n)}
        k = cohens_kappa(a, b)
        assert abs(k) < 0.1

    def test_textbook_example(self):
        # 2x2 table: both-yes 20, both-no 15, a-yes-b-no 5, a-no-b-yes 10
        a, b = {}, {}
        i = 0
        for count, (la, lb) in [(20, (1, 1)), (15, (0, 0)), (5, (1, 0)), (10, (0, 1))]:
            for _ in range(count):
                a[md5_of(f"img{i}")] = la
                b[md5_of(f"img{i}")] = lb
                i += 1
        # p_o = 0.7, p_a(yes)=0.5, p_b(yes)=0.6 -> p_e = 0.5
        assert cohens_kappa(a, b) == pytest.approx((0.7 - 0.5) / 0.5)

    def test_degenerate_pairs_return_none(self):
        one_shared = cohens_kappa({md5_of("a"): 0}, {md5_of("a"): 0})
        assert one_shared is None
        constant = cohens_kappa(
            {md5_of("a"): 1, md5_of("b"): 1}, {md5_of("a"): 1, md5_of("b"): 1}
        )
        assert constant is None  # p_e == 1

    def test_degenerate_pairs_excluded_with_warning(self, caplog):
        events = [
            # r1/r2 vary and agree -> valid pair with kappa 1; r3 labels
            # only one image, so its pairs fall under the <2-shared rule
            event("r1", 0, "initial", 0), event("r1", 1, "initial", 1),
            event("r2", 0, "initial", 0), event("r2", 1, "initial", 1),
            event("r3", 0, "initial", 2),
        ]
        kappas, degenerate = pairwise_kappas(events, TaskId.LOCATION, "initial")
        assert set(kappas) == {("r1", "r2")}
        assert set(degenerate) == {("r1", "r3"), ("r2", "r3")}
        with caplog.at_level("WARNING"):
            mean = mean_pairwise_kappa(events, TaskId.LOCATION, "initial")
        assert mean == pytest.approx(1.0)
        assert sum("excluded" in m for m in caplog.messages) == 2

    def test_all_pairs_degenerate(self):
        events = [
            event("r1", 0, "initial", 0),
            event("r2", 1, "initial", 0),
        ]
        with pytest.raises(InsufficientRaters):
            mean_pairwise_kappa(events, TaskId.LOCATION, "initial")

    def test_perfect_agreement_identity(self):
        events = []
        for i in range(6):
            for r in ("r1", "r2", "r3"):
                events.append(event(r, i, "final", i % 4))
        assert mean_pairwise_kappa(events, TaskId.LOCATION, "final") == pytest.approx(1.0)


class TestInfluence:
    def test_partition_and_percentages(self):
        preds = {md5_of(f"img{i}"): {TaskId.LOCATION: 1} for i in range(10)}
        events = []
        # 3 disagreements for r1: adopt, keep, alternative
        events += [event("r1", 0, "initial", 0), event("r1", 0, "final", 1)]
        events += [event("r1", 1, "initial", 0), event("r1", 1, "final", 0)]
        events += [event("r1", 2, "initial", 0), event("r1", 2, "final", 3)]
        # agreement case: not counted
        events += [event("r1", 3, "initial", 1), event("r1", 3, "final", 1)]
        breakdown = ai_influence(events, preds, TaskId.LOCATION)
        assert breakdown.disagreements == 3
        assert breakdown.adopted_ai == 1
        assert breakdown.unchanged == 1
        assert breakdown.changed_alternative == 1
        assert breakdown.incomplete == 0
        pct = breakdown.percentages()
        assert pct == {"adopted_ai": 33.3, "changed_alternative": 33.3, "unchanged": 33.3}

    def test_incomplete_excluded_with_warning(self, caplog):
        preds = {md5_of("img0"): {TaskId.LOCATION: 1}, md5_of("img1"): {TaskId.LOCATION: 1}}
        events = [
            event("r1", 0, "initial", 0),  # disagreement, no final
            event("r1", 1, "initial", 0), event("r1", 1, "final", 1),
        ]
        with caplog.at_level("WARNING"):
            breakdown = ai_influence(events, preds, TaskId.LOCATION)
        assert breakdown.disagreements == 1
        assert breakdown.incomplete == 1
        assert any("final" in m for m in caplog.messages)

    def test_zero_disagreements(self):
        preds = {md5_of("img0"): {TaskId.LOCATION: 1}}
        events = [event("r1", 0, "initial", 1), event("r1", 0, "final", 1)]
        breakdown = ai_influence(events, preds, TaskId.LOCATION)
        assert breakdown.disagreements == 0
        assert breakdown.percentages() == {
            "adopted_ai": 0.0, "changed_alternative": 0.0, "unchanged": 0.0
        }

    def test_partition_enforced(self):
        with pytest.raises(ValueError, match="partition"):
            InfluenceBreakdown(
                task=TaskId.LOCATION, disagreements=5, adopted_ai=1,
                changed_alternative=1, unchanged=1, incomplete=0,
            )


class TestStudyReport:
    def full_events(self, config):
        events = []
        truth_by_md5 = {img.md5: img.ground_truth for img in config.images}
        for rater in config.raters:
            for img in config.images:
                for task in config.tasks:
                    initial = truth_by_md5[img.md5][task]
                    final = config.ai_predictions[img.md5][task]
                    events.append(StudyEvent(rater, img.md5, task, "initial", initial, 0.0))
                    events.append(StudyEvent(rater, img.md5, task, "final", final, 1.0))
        return events

    def test_structure_and_coverage(self):
        config = make_config(n_images=3)
        events = self.full_events(config)
        report = study_report(config, events)
        assert report["study_id"] == "demo"
        assert report["num_images"] == 3
        assert report["num_raters"] == 2
        assert report["has_ground_truth"] is True
        assert report["coverage"]["complete"] is True
        assert report["coverage"]["events"] == 2 * 3 * 3 * 2
        for task in ("location", "intensity", "quantity"):
            section = report["tasks"][task]
            assert "ai_accuracy" in section
            assert "rater_accuracy" in section
            assert "influence" in section

    def test_accuracy_sections_absent_without_truth(self):
        config = make_config(n_images=3, with_truth=False)
        events = []
        for rater in config.raters:
            for img in config.images:
                for task in config.tasks:
                    events.append(StudyEvent(rater, img.md5, task, "initial", 0, 0.0))
                    events.append(StudyEvent(rater, img.md5, task, "final", 1, 1.0))
        report = study_report(config, events)
        assert report["has_ground_truth"] is False
        for section in report["tasks"].values():
            assert "ai_accuracy" not in section
            assert "rater_accuracy" not in section
            assert "influence" in section

    def test_empty_log_flagged(self):
        config = make_config()
        report = study_report(config, [])
        assert report["coverage"]["events"] == 0
        assert report["coverage"]["complete"] is False
        for section in report["tasks"].values():
            assert section["influence"]["disagreements"] == 0

    def test_rater_accuracy_values(self):
        config = make_config(n_images=2)
        events = self.full_events(config)
        report = study_report(config, events)
        # initial phase used ground truth labels -> accuracy 1.0
        loc = report["tasks"]["location"]["rater_accuracy"]
        assert loc["initial"]["accuracy"] == 1.0
        assert loc["initial"]["total"] == 4  # 2 raters x 2 images
        # final phase used AI labels; AI disagrees with truth on location
        assert loc["final"]["accuracy"] == 0.0
