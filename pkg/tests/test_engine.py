"""Orchestration: epoch loop, migration, checkpoint/resume, ablations."""

import json
from pathlib import Path

import pytest

from conftest import standard_config, write_transcript
from llmevolve import engine
from llmevolve.engine import CheckpointError, load_latest_checkpoint


def read_events(run_dir: Path):
    with open(run_dir / "events.jsonl", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh]


def small_run(tmp_path, name="run", **overrides):
    run_dir = tmp_path / name
    cfg = standard_config(
        num_islands=2, epochs=6, migration_every=3, init_population=2, **overrides
    )
    write_transcript(run_dir, num_islands=cfg.num_islands, calls_per_island=40)
    summary = engine.run(cfg, run_dir)
    return run_dir, cfg, summary


class TestRun:
    def test_completes_and_reports_best(self, tmp_path):
        run_dir, cfg, summary = small_run(tmp_path)
        assert summary.finished
        assert summary.epochs_run == 6
        assert summary.best_fitness > 0
        assert (run_dir / "best" / "artifact.json").exists()
        assert (run_dir / "best" / "solution.py").exists()

    def test_best_fitness_monotone_per_island(self, tmp_path):
        run_dir, _, _ = small_run(tmp_path)
        best = {}
        for rec in read_events(run_dir):
            if rec["type"] not in ("init", "step"):
                continue
            i = rec["island"]
            prev = best.get(i, 0.0)
            best[i] = max(prev, rec["fitness"])
            assert best[i] >= prev

    def test_every_solution_is_finalized(self, tmp_path):
        run_dir, _, _ = small_run(tmp_path)
        for rec in read_events(run_dir):
            if rec["type"] in ("init", "step"):
                assert rec["status"] != "pending"
                assert rec["fitness"] >= 0

    def test_migration_events_on_schedule(self, tmp_path):
        run_dir, _, _ = small_run(tmp_path)
        epochs = [r["epoch"] for r in read_events(run_dir) if r["type"] == "migration"]
        assert sorted(set(epochs)) == [3, 6]

    def test_population_capped_after_migration(self, tmp_path):
        run_dir, cfg, _ = small_run(tmp_path, max_population=4)
        ckpt_config, state = load_latest_checkpoint(run_dir)
        for island in state.islands:
            assert len(island.solutions) <= cfg.max_population

    def test_config_snapshot_written(self, tmp_path):
        run_dir, cfg, _ = small_run(tmp_path)
        import yaml

        doc = yaml.safe_load((run_dir / "config.yaml").read_text())
        assert doc["problem_id"] == cfg.problem_id
        assert doc["epochs"] == cfg.epochs


class TestMigration:
    def test_migrant_copies_are_roots_with_provenance(self, tmp_path):
        run_dir, _, _ = small_run(tmp_path)
        _, state = load_latest_checkpoint(run_dir)
        copies = [
            s
            for island in state.islands
            for s in island.all_solutions()
            if "migrated_from" in s.provenance
        ]
        assert copies
        for copy in copies:
            assert copy.parent_id is None
            assert copy.origin_island == copy.island_id
            assert copy.provenance["migrated_from"] != copy.island_id

    def test_originals_marked_migrated_once(self, tmp_path):
        run_dir, _, _ = small_run(tmp_path)
        events = [r for r in read_events(run_dir) if r["type"] == "migration"]
        per_source: dict[int, list[str]] = {}
        for rec in events:
            per_source.setdefault(rec["source"], []).extend(rec["migrants"])
        for source, ids in per_source.items():
            assert len(ids) == len(set(ids)), "a solution migrated twice from its origin"

    def test_ring_neighbors(self):
        cfg = standard_config(num_islands=5)
        neighbors = cfg.neighbors()
        assert neighbors == {0: [1, 4], 1: [0, 2], 2: [1, 3], 3: [2, 4], 4: [0, 3]}


class TestResume:
    def test_interrupt_and_resume_executes_remaining_epochs(self, tmp_path):
        run_dir = tmp_path / "resumed"
        cfg = standard_config(num_islands=2, epochs=6, migration_every=3, init_population=2)
        write_transcript(run_dir, num_islands=2, calls_per_island=40)
        partial = engine.run(cfg, run_dir, stop_after_epoch=3)
        assert not partial.finished
        assert partial.epochs_run == 3
        summary = engine.resume(run_dir)
        assert summary.finished
        assert summary.epochs_run == 6
        step_epochs = [r["epoch"] for r in read_events(run_dir) if r["type"] == "step"]
        assert sorted(set(step_epochs)) == [1, 2, 3, 4, 5, 6]
        assert all(step_epochs.count(e) == cfg.num_islands for e in set(step_epochs))

    def test_resume_equals_straight_through(self, tmp_path):
        cfg = standard_config(num_islands=2, epochs=6, migration_every=3, init_population=2)
        dir_a = tmp_path / "straight"
        write_transcript(dir_a, num_islands=2, calls_per_island=40)
        engine.run(cfg, dir_a)
        dir_b = tmp_path / "interrupted"
        write_transcript(dir_b, num_islands=2, calls_per_island=40)
        engine.run(cfg, dir_b, stop_after_epoch=4)
        engine.resume(dir_b)
        assert (dir_a / "events.jsonl").read_bytes() == (dir_b / "events.jsonl").read_bytes()

    def test_resume_finished_run_is_noop(self, tmp_path):
        run_dir, _, summary = small_run(tmp_path)
        before = (run_dir / "events.jsonl").read_bytes()
        again = engine.resume(run_dir)
        assert again.finished
        assert again.epochs_run == summary.epochs_run
        assert (run_dir / "events.jsonl").read_bytes() == before

    def test_corrupt_checkpoint_raises_integrity_error(self, tmp_path):
        run_dir, _, _ = small_run(tmp_path)
        ckpt = sorted((run_dir / "checkpoints").glob("*.ckpt"))[-1]
        blob = bytearray(ckpt.read_bytes())
        blob[-1] ^= 0xFF
        ckpt.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError):
            engine.resume(run_dir)

    def test_missing_checkpoint_raises(self, tmp_path):
        (tmp_path / "empty" / "checkpoints").mkdir(parents=True)
        with pytest.raises(CheckpointError):
            engine.resume(tmp_path / "empty")


class TestDeterminism:
    def test_identical_seeds_identical_event_logs(self, tmp_path):
        cfg = standard_config(num_islands=2, epochs=6, migration_every=3, init_population=2)
        logs = []
        for name in ("a", "b"):
            run_dir = tmp_path / name
            write_transcript(run_dir, num_islands=2, calls_per_island=40)
            engine.run(cfg, run_dir)
            logs.append((run_dir / "events.jsonl").read_bytes())
        assert logs[0] == logs[1]


class TestAblations:
    def test_no_evolution_has_no_parents_and_no_migration(self, tmp_path):
        from llmevolve.config import AblationToggles

        run_dir = tmp_path / "no-evo"
        cfg = standard_config(
            num_islands=2,
            epochs=6,
            migration_every=3,
            init_population=2,
            max_population=4,
            ablation=AblationToggles.from_name("no-evolution"),
        )
        write_transcript(run_dir, num_islands=2, calls_per_island=40)
        engine.run(cfg, run_dir)
        events = read_events(run_dir)
        assert not [r for r in events if r["type"] == "migration"]
        for rec in events:
            if rec["type"] == "step":
                assert rec["operator"] == "no_evolution"
                assert rec["parent"] is None
        _, state = load_latest_checkpoint(run_dir)
        for island in state.islands:
            assert len(island.solutions) <= cfg.max_population
            for sol in island.all_solutions():
                assert sol.parent_id is None

    def test_inspirations_off_never_gates_on(self, tmp_path):
        from llmevolve.config import AblationToggles

        run_dir = tmp_path / "no-insp"
        cfg = standard_config(
            num_islands=2,
            epochs=6,
            migration_every=2,
            init_population=2,
            ablation=AblationToggles.from_name("mp"),
        )
        write_transcript(run_dir, num_islands=2, calls_per_island=40)
        engine.run(cfg, run_dir)
        for rec in read_events(run_dir):
            if rec["type"] == "step":
                assert rec["inspirations"] == 0


class TestEvaluateCandidate:
    def _runner(self, tmp_path, **overrides):
        cfg = standard_config(num_islands=1, **overrides)
        run_dir = tmp_path / "eval"
        run_dir.mkdir()
        from llmevolve.core import IslandState
        from llmevolve.llm import ReplayBackend
        from llmevolve.engine import _Run, RunState
        from llmevolve.operators import IslandRngs
        import random

        state = RunState(
            islands=[IslandState(0, capacity=cfg.max_population)],
            rngs=[IslandRngs(random.Random(0), random.Random(1), random.Random(2))],
        )
        return _Run(cfg, run_dir, ReplayBackend({}), state)

    def _pending(self, code):
        from llmevolve.core import Solution, STATUS_PENDING

        return Solution(
            id="i0-s00000", island_id=0, code=code, status=STATUS_PENDING
        )

    def test_valid_packing_scores_passthrough(self, tmp_path):
        from conftest import packing_program

        runner = self._runner(tmp_path)
        sol = runner.evaluate(self._pending(packing_program(26, 0.01)))
        assert sol.status == "valid"
        assert sol.fitness == pytest.approx(26 * 0.01)
        assert sol.metrics["objective"] == pytest.approx(0.26)
        assert sol.log_ref is not None

    def test_timeout_yields_zero_fitness(self, tmp_path):
        from llmevolve.sandbox import ResourceLimits

        runner = self._runner(
            tmp_path, limits=ResourceLimits(wall_seconds=1.0, memory_bytes=1 << 30)
        )
        sol = runner.evaluate(self._pending("while True:\n    pass\n"))
        assert sol.status == "timeout"
        assert sol.fitness == 0.0

    def test_invalid_construction_records_violations(self, tmp_path):
        code = (
            "import json, os\n"
            'with open(os.environ["ARTIFACT_PATH"], "w") as fh:\n'
            '    json.dump({"circles": [[0.5, 0.5, 0.4], [0.6, 0.5, 0.4]] + [[0.01, 0.01, 0.0001]] * 24}, fh)\n'
        )
        runner = self._runner(tmp_path)
        sol = runner.evaluate(self._pending(code))
        assert sol.status == "invalid_artifact"
        assert sol.fitness == 0.0
        assert "overlap" in (sol.feedback or "")

    def test_runtime_error_captured(self, tmp_path):
        runner = self._runner(tmp_path)
        sol = runner.evaluate(self._pending("raise RuntimeError('nope')\n"))
        assert sol.status == "runtime_error"
        assert "nope" in sol.feedback
