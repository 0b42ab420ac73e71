import json
import math

import numpy as np
import pytest

from preftune.acquisition import AcquisitionConfig
from preftune.bench import get_function, simulated_oracle
from preftune.domain import Configuration, make_grid, same_point
from preftune.errors import ContractViolation, StalledUserError
from preftune.loops import (
    LoopConfig,
    PendingQuery,
    Seeds,
    advance,
    default_model_config,
    deserialize_state,
    init_phase,
    new_state,
    respond,
    resume,
    run,
    serialize_state,
    step_bpe4prost,
    step_linecospar,
    step_random,
)

from conftest import unit_space

ACQ = AcquisitionConfig(q=2, mc_samples=128, restarts=2, raw_candidates=64)
ACQ3 = AcquisitionConfig(q=3, mc_samples=128, restarts=2, raw_candidates=64)


def branin_setup(algorithm, budget=3, n_stop=None, n_init=3, seed=5):
    fn = get_function("branin2")
    if algorithm == "eubo_linecospar":
        space = fn.space(mode="grid", points_per_dim=21)
    else:
        space = fn.space()
    cfg = LoopConfig(
        algorithm=algorithm,
        n_init_pairs=n_init,
        budget=budget,
        n_stop=n_stop or budget,
        seeds=Seeds(seed, seed, seed),
    )
    return fn, space, cfg, default_model_config(algorithm, 2)


class TestInitPhase:
    def test_pair_count_and_records(self):
        fn, space, cfg, _ = branin_setup("bpe4prost", n_init=5)
        state = init_phase(space, cfg, simulated_oracle(fn))
        assert len(state.dataset.records) == 5
        assert state.phase == "optimize"
        assert len(state.dataset.visited) <= 10

    def test_noiseless_oracle_winners_truthful(self):
        fn, space, cfg, _ = branin_setup("bpe4prost", n_init=5)
        state = init_phase(space, cfg, simulated_oracle(fn))
        for r in state.dataset.records:
            assert fn.evaluate(r.winning) > fn.evaluate(r.losing)

    def test_linecospar_sets_incumbent_to_last_winner(self):
        fn, space, cfg, _ = branin_setup("eubo_linecospar", n_init=4)
        state = init_phase(space, cfg, simulated_oracle(fn))
        assert state.current_pref is not None
        assert same_point(state.current_pref, state.dataset.records[-1].winning)

    def test_budget_zero_stops_after_init(self):
        fn, space, _, model_cfg = branin_setup("bpe4prost")
        cfg = LoopConfig(
            algorithm="bpe4prost", n_init_pairs=2, budget=0, n_stop=1, seeds=Seeds(1, 1, 1)
        )
        state = run(space, cfg, model_cfg, ACQ, simulated_oracle(fn))
        assert state.phase == "done"
        assert state.stop_reason == "budget_exhausted"
        assert len(state.dataset.records) == 2
        assert state.recommendation_history == ()

    def test_no_preference_discards_and_redraws(self):
        fn, space, cfg, _ = branin_setup("bpe4prost", n_init=2)

        class Abstainer:
            def __init__(self):
                self.calls = 0

            def answer(self, a, b):
                self.calls += 1
                return "no_preference" if self.calls == 1 else "first"

        oracle = Abstainer()
        state = init_phase(space, cfg, oracle)
        assert len(state.dataset.records) == 2
        assert oracle.calls == 3


class TestPendingQuery:
    def test_winner_mapping_as_is(self):
        pq = PendingQuery(
            Configuration((0.1, 0.1)), Configuration((0.9, 0.9)), "as_is", "duel", 1
        )
        assert pq.winner_from_shown("first") == "first"
        assert pq.winner_from_shown("second") == "second"

    def test_winner_mapping_swapped(self):
        pq = PendingQuery(
            Configuration((0.1, 0.1)), Configuration((0.9, 0.9)), "swapped", "duel", 1
        )
        assert pq.shown[0].coords == (0.9, 0.9)
        assert pq.winner_from_shown("first") == "second"
        assert pq.winner_from_shown("no_preference") == "no_preference"

    def test_presentation_orders_vary_deterministically(self):
        fn, space, cfg, model_cfg = branin_setup("bpe4prost", budget=4, n_init=4)
        seen = set()

        class Spy:
            def __init__(self):
                self.inner = simulated_oracle(fn)

            def answer(self, a, b):
                return self.inner.answer(a, b)

        state = new_state(space, cfg)
        for _ in range(4):
            state, pq = advance(state, space, model_cfg, ACQ)
            seen.add(pq.presentation_order)
            state = respond(state, space, model_cfg, ACQ, "first")
        assert seen == {"as_is", "swapped"}


class TestLinecosparStep:
    def drive(self, state, space, model_cfg, winner):
        state, pq = advance(state, space, model_cfg, ACQ)
        assert pq.kind == "duel"
        return respond(state, space, model_cfg, ACQ, winner), pq

    def test_challenger_in_line_or_visited_and_distinct(self):
        fn, space, cfg, model_cfg = branin_setup("eubo_linecospar", budget=4)
        state = init_phase(space, cfg, simulated_oracle(fn))
        for _ in range(3):
            prev_pref = state.current_pref
            state, pq = advance(state, space, model_cfg, ACQ)
            assert same_point(pq.first, prev_pref)
            assert not same_point(pq.second, prev_pref)
            line_nodes = {n.coords for n in state.last_line.nodes}
            visited = {v.coords for v in state.dataset.visited}
            assert pq.second.coords in line_nodes | visited
            assert same_point(state.last_line.origin, prev_pref)
            state = respond(state, space, model_cfg, ACQ, "second")

    def test_line_nodes_on_grid_and_collinear(self):
        fn, space, cfg, model_cfg = branin_setup("eubo_linecospar", budget=2)
        state = init_phase(space, cfg, simulated_oracle(fn))
        state, _ = advance(state, space, model_cfg, ACQ)
        line = state.last_line
        grid = {n.coords for n in make_grid(space)}
        h = 1.0 / (space.points_per_dim - 1)
        direction = np.array(line.direction)
        origin = np.array(line.origin.coords)
        for node in line.nodes:
            assert node.coords in grid
            t = float(np.dot(np.array(node.coords) - origin, direction) / h)
            ideal = origin + round(t) * h * direction
            assert np.max(np.abs(np.array(node.coords) - ideal)) <= h / 2 + 1e-9

    def test_incumbent_updates_to_winner(self):
        fn, space, cfg, model_cfg = branin_setup("eubo_linecospar", budget=2)
        state = init_phase(space, cfg, simulated_oracle(fn))
        new, pq = self.drive(state, space, model_cfg, "second")
        assert same_point(new.current_pref, pq.second)
        assert new.stability_count == 0

    def test_stability_fires_exactly_at_n_stop(self):
        fn, space, cfg, model_cfg = branin_setup("eubo_linecospar", budget=6, n_stop=3)
        state = init_phase(space, cfg, simulated_oracle(fn))
        for i in range(1, 4):
            state, _ = self.drive(state, space, model_cfg, "first")
            assert state.stability_count == i
        assert state.stop_reason == "stability"
        assert state.iteration == 3

    def test_no_preference_retains_and_counts(self):
        fn, space, cfg, model_cfg = branin_setup("eubo_linecospar", budget=6, n_stop=2)
        state = init_phase(space, cfg, simulated_oracle(fn))
        before = state.current_pref
        state, _ = self.drive(state, space, model_cfg, "no_preference")
        assert same_point(state.current_pref, before)
        assert state.stability_count == 1
        assert state.no_pref_retentions == 1
        assert len(state.dataset.records) == cfg.n_init_pairs  # nothing recorded
        assert len(state.recommendation_history) == 1

    def test_recommendation_scope_is_visited(self):
        fn, space, cfg, model_cfg = branin_setup("eubo_linecospar", budget=2)
        state = init_phase(space, cfg, simulated_oracle(fn))
        state = step_linecospar(state, space, model_cfg, ACQ, simulated_oracle(fn))
        rec = state.recommendation_history[-1]
        assert any(same_point(rec.point, v) for v in state.dataset.visited)

    def test_requires_grid_space(self):
        cfg = LoopConfig(
            algorithm="eubo_linecospar", n_init_pairs=2, budget=2, n_stop=2, seeds=Seeds()
        )
        with pytest.raises(ContractViolation):
            new_state(unit_space(2), cfg)


class TestBpe4ProstStep:
    def test_one_record_per_iteration_with_noiseless_oracle(self):
        fn, space, cfg, model_cfg = branin_setup("bpe4prost", budget=3)
        state = init_phase(space, cfg, simulated_oracle(fn))
        oracle = simulated_oracle(fn)
        for i in range(1, 4):
            state = step_bpe4prost(state, space, model_cfg, ACQ, oracle)
            assert state.iteration == i
            assert len(state.dataset.records) == cfg.n_init_pairs + i

    def test_fallback_chain_q3(self):
        fn, space, cfg, model_cfg = branin_setup("bpe4prost", budget=2)
        state = init_phase(space, cfg, simulated_oracle(fn))
        state, pq = advance(state, space, model_cfg, ACQ3)
        assert pq.kind == "duel"
        x1 = pq.first
        batch = state.pending_batch
        assert len(batch) == 3
        assert same_point(batch[1], pq.second)
        state = respond(state, space, model_cfg, ACQ3, "no_preference")
        pq2 = state.pending
        assert pq2.kind == "fallback_third"
        assert same_point(pq2.first, x1)
        assert same_point(pq2.second, batch[2])
        state = respond(state, space, model_cfg, ACQ3, "no_preference")
        pq3 = state.pending
        assert pq3.kind == "fallback_random"
        assert same_point(pq3.first, x1)
        state = respond(state, space, model_cfg, ACQ3, "second")
        assert state.iteration == 1
        record = state.dataset.records[-1]
        assert same_point(record.first, x1)
        assert record.winner == "second"

    def test_fallback_chain_q2_skips_third(self):
        fn, space, cfg, model_cfg = branin_setup("bpe4prost", budget=2)
        state = init_phase(space, cfg, simulated_oracle(fn))
        state, pq = advance(state, space, model_cfg, ACQ)
        assert len(state.pending_batch) == 2
        state = respond(state, space, model_cfg, ACQ, "no_preference")
        assert state.pending.kind == "fallback_random"

    def test_ten_random_fallbacks_then_error(self):
        fn, space, cfg, model_cfg = branin_setup("bpe4prost", budget=2)
        state = init_phase(space, cfg, simulated_oracle(fn))
        state, pq = advance(state, space, model_cfg, ACQ)
        state = respond(state, space, model_cfg, ACQ, "no_preference")
        for _ in range(9):
            assert state.pending.kind == "fallback_random"
            state = respond(state, space, model_cfg, ACQ, "no_preference")
        assert state.random_fallbacks == 10
        with pytest.raises(StalledUserError):
            respond(state, space, model_cfg, ACQ, "no_preference")
        # state retained: still answerable
        state = respond(state, space, model_cfg, ACQ, "first")
        assert state.iteration == 1

    def test_record_first_is_always_batch_leader(self):
        fn, space, cfg, model_cfg = branin_setup("bpe4prost", budget=4)
        state = init_phase(space, cfg, simulated_oracle(fn))
        oracle = simulated_oracle(fn)
        leaders = []
        while state.phase == "optimize":
            state, pq = advance(state, space, model_cfg, ACQ)
            if pq is None:
                break
            if pq.kind == "duel":
                leaders.append(state.pending_batch[0])
            shown_first, shown_second = pq.shown
            state = respond(
                state, space, model_cfg, ACQ, pq.winner_from_shown(oracle.answer(shown_first, shown_second))
            )
        for record, leader in zip(state.dataset.records[cfg.n_init_pairs:], leaders):
            assert same_point(record.first, leader)

    def test_stability_stops_exactly_at_n_stop_with_full_fraction(self):
        fn, space, _, model_cfg = branin_setup("bpe4prost")
        cfg = LoopConfig(
            algorithm="bpe4prost", n_init_pairs=3, budget=8, n_stop=3,
            stability_fraction=1.0, seeds=Seeds(5, 5, 5),
        )
        state = run(space, cfg, model_cfg, ACQ, simulated_oracle(fn))
        assert state.stop_reason == "stability"
        assert state.iteration == 3
        # pairwise bound over the last n_stop recommendations
        recs = state.recommendation_history[-3:]
        for a in recs:
            for b in recs:
                assert max(
                    abs(x - y) for x, y in zip(a.point.coords, b.point.coords)
                ) <= 1.0 + 1e-12

    def test_requires_continuous_space(self):
        cfg = LoopConfig(
            algorithm="bpe4prost", n_init_pairs=2, budget=2, n_stop=2, seeds=Seeds()
        )
        with pytest.raises(ContractViolation):
            new_state(unit_space(2, "grid", 5), cfg)


class TestRandomStep:
    def test_queries_independent_of_responses(self):
        fn, space, cfg, model_cfg = branin_setup("random_pairs", budget=3)

        pairs_a, pairs_b = [], []
        for winner, sink in (("first", pairs_a), ("second", pairs_b)):
            state = init_phase(space, cfg, simulated_oracle(fn))
            for _ in range(3):
                state, pq = advance(state, space, model_cfg, ACQ)
                sink.append((pq.first.coords, pq.second.coords))
                state = respond(state, space, model_cfg, ACQ, winner)
        assert pairs_a == pairs_b

    def test_one_record_per_step_and_budget_stop(self):
        fn, space, cfg, model_cfg = branin_setup("random_pairs", budget=3)
        state = init_phase(space, cfg, simulated_oracle(fn))
        oracle = simulated_oracle(fn)
        for i in range(1, 4):
            state = step_random(state, space, model_cfg, oracle, ACQ)
            assert len(state.dataset.records) == cfg.n_init_pairs + i
        assert state.stop_reason == "budget_exhausted"


class TestRunAndResume:
    def test_deterministic_trajectories(self):
        fn, space, cfg, model_cfg = branin_setup("bpe4prost", budget=3)
        a = run(space, cfg, model_cfg, ACQ, simulated_oracle(fn))
        b = run(space, cfg, model_cfg, ACQ, simulated_oracle(fn))
        assert serialize_state(a) == serialize_state(b)

    def test_resume_matches_uninterrupted(self):
        fn, space, cfg, model_cfg = branin_setup("bpe4prost", budget=4)
        full = run(space, cfg, model_cfg, ACQ, simulated_oracle(fn))

        state = init_phase(space, cfg, simulated_oracle(fn))
        oracle = simulated_oracle(fn)
        state = step_bpe4prost(state, space, model_cfg, ACQ, oracle)
        state = step_bpe4prost(state, space, model_cfg, ACQ, oracle)
        blob = json.dumps(serialize_state(state))
        revived = deserialize_state(json.loads(blob))
        resumed = resume(revived, space, cfg, model_cfg, ACQ, simulated_oracle(fn))
        assert serialize_state(resumed) == serialize_state(full)

    def test_resume_linecospar(self):
        fn, space, cfg, model_cfg = branin_setup("eubo_linecospar", budget=4)
        full = run(space, cfg, model_cfg, ACQ, simulated_oracle(fn))
        state = init_phase(space, cfg, simulated_oracle(fn))
        state = step_linecospar(state, space, model_cfg, ACQ, simulated_oracle(fn))
        revived = deserialize_state(json.loads(json.dumps(serialize_state(state))))
        resumed = resume(revived, space, cfg, model_cfg, ACQ, simulated_oracle(fn))
        assert serialize_state(resumed) == serialize_state(full)

    def test_iteration_hook_called_per_iteration(self):
        fn, space, cfg, model_cfg = branin_setup("bpe4prost", budget=3)
        seen = []
        run(space, cfg, model_cfg, ACQ, simulated_oracle(fn), iteration_hook=lambda s: seen.append(s.iteration))
        assert seen == [1, 2, 3]

    def test_recommendation_history_length_equals_iterations(self):
        fn, space, cfg, model_cfg = branin_setup("eubo_linecospar", budget=4)
        state = run(space, cfg, model_cfg, ACQ, simulated_oracle(fn))
        assert len(state.recommendation_history) == state.iteration
        assert [r.iteration for r in state.recommendation_history] == list(
            range(1, state.iteration + 1)
        )


class TestConfigValidation:
    def test_unknown_algorithm(self):
        with pytest.raises(ContractViolation):
            LoopConfig(algorithm="qeubo", n_init_pairs=1, budget=1, n_stop=1)

    def test_n_stop_le_budget(self):
        with pytest.raises(ContractViolation):
            LoopConfig(algorithm="bpe4prost", n_init_pairs=1, budget=3, n_stop=4)

    def test_stability_fraction_range(self):
        with pytest.raises(ContractViolation):
            LoopConfig(
                algorithm="bpe4prost", n_init_pairs=1, budget=3, n_stop=2, stability_fraction=0.0
            )
